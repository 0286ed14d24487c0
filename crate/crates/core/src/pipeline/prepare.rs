use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::biomarkers::{assemble_features, FeatureVector21};
use crate::dataset::{resample, DiagnosisLabel, Recording};
use crate::spectral::{log_mel_spectrogram, MelSpectrogram, SpectralError, SpectroConfig};

use super::{hex, PipelineError};

/// Model inputs of one recording: the 21 biomarkers and the CNN spectrogram.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedRecording {
    pub recording_id: String,
    pub speaker_id: String,
    pub diagnosis: DiagnosisLabel,
    pub features: FeatureVector21,
    pub spectrogram: MelSpectrogram,
}

pub fn prepare_recording(rec: &Recording, spectro: &SpectroConfig) -> Result<PreparedRecording, PipelineError> {
    let fail = |source| PipelineError::Extraction { id: rec.recording_id.clone(), source };
    let samples = resample(&rec.samples, rec.sample_rate, spectro.sample_rate)
        .map_err(|e| fail(SpectralError::InvalidConfig(e.to_string())))?;
    let spectrogram = log_mel_spectrogram(&samples, spectro).map_err(fail)?;
    Ok(PreparedRecording {
        recording_id: rec.recording_id.clone(),
        speaker_id: rec.speaker_id.clone(),
        diagnosis: rec.diagnosis,
        features: assemble_features(rec),
        spectrogram,
    })
}

/// Prepares recordings in parallel; output order follows input order.
pub fn prepare_all(recs: &[Recording], spectro: &SpectroConfig) -> Result<Vec<PreparedRecording>, PipelineError> {
    recs.par_iter().map(|r| prepare_recording(r, spectro)).collect()
}

/// SHA-256 over ids, labels, feature bits and spectrogram bits.
pub fn data_digest(items: &[PreparedRecording]) -> String {
    let mut h = Sha256::new();
    for p in items {
        h.update(p.recording_id.as_bytes());
        h.update([0]);
        h.update(p.speaker_id.as_bytes());
        h.update([0, p.diagnosis.index() as u8]);
        for v in p.features.as_slice() {
            h.update(v.to_bits().to_le_bytes());
        }
        for v in &p.spectrogram.values {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex(&h.finalize())
}
