//! The 21-entry handcrafted feature vector and its CSV table.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{detect_cycles, estimate_f0, formants_lpc, hnr, jitter_local, shimmer_local, BiomarkerError};
use super::{DEFAULT_FMAX, DEFAULT_FMIN};
use crate::dataset::{resample, DiagnosisLabel, Recording, CANONICAL_RATE};
use crate::spectral::{mfcc, SpectroConfig};

pub const N_FEATURES: usize = 21;
pub const N_MFCC: usize = 13;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "gender", "f0", "jitter", "shimmer", "hnr", "f1", "f2", "f3", "mfcc0", "mfcc1", "mfcc2", "mfcc3",
    "mfcc4", "mfcc5", "mfcc6", "mfcc7", "mfcc8", "mfcc9", "mfcc10", "mfcc11", "mfcc12",
];

pub const FEATURE_CSV_HEADER: [&str; 24] = [
    "recording_id", "speaker_id", "diagnosis", "gender", "f0", "jitter", "shimmer", "hnr", "f1", "f2",
    "f3", "mfcc0", "mfcc1", "mfcc2", "mfcc3", "mfcc4", "mfcc5", "mfcc6", "mfcc7", "mfcc8", "mfcc9",
    "mfcc10", "mfcc11", "mfcc12",
];

/// `[gender, f0, jitter, shimmer, hnr, f1, f2, f3, mfcc0..mfcc12]`.
/// Failed or unvoiced measurements hold NaN until imputation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector21(pub [f64; N_FEATURES]);

impl FeatureVector21 {
    pub fn gender(&self) -> f64 {
        self.0[0]
    }
    pub fn f0(&self) -> f64 {
        self.0[1]
    }
    pub fn jitter(&self) -> f64 {
        self.0[2]
    }
    pub fn shimmer(&self) -> f64 {
        self.0[3]
    }
    pub fn hnr(&self) -> f64 {
        self.0[4]
    }
    pub fn formants(&self) -> [f64; 3] {
        [self.0[5], self.0[6], self.0[7]]
    }
    pub fn mfcc(&self) -> &[f64] {
        &self.0[8..]
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
    pub fn has_sentinel(&self) -> bool {
        self.0.iter().any(|v| v.is_nan())
    }
}

/// Extracts every biomarker of a recording. Extractor failures leave NaN in
/// the affected slots instead of failing the whole vector.
pub fn assemble_features(rec: &Recording) -> FeatureVector21 {
    let mut v = [f64::NAN; N_FEATURES];
    v[0] = rec.gender.encode();
    let samples = match resample(&rec.samples, rec.sample_rate, CANONICAL_RATE) {
        Ok(s) => s,
        Err(_) => return FeatureVector21(v),
    };
    let sr = CANONICAL_RATE;

    if let Ok(Some(f0)) = estimate_f0(&samples, sr, DEFAULT_FMIN, DEFAULT_FMAX) {
        v[1] = f0;
        if let Ok(marks) = detect_cycles(&samples, sr, f0) {
            v[2] = jitter_local(&marks).unwrap_or(f64::NAN);
            v[3] = shimmer_local(&marks).unwrap_or(f64::NAN);
        }
        v[4] = hnr(&samples, sr, f0).unwrap_or(f64::NAN);
    }
    if let Ok(f) = formants_lpc(&samples, sr) {
        v[5..8].copy_from_slice(&f.values);
    }
    if let Ok(c) = mfcc(&samples, &SpectroConfig::default(), N_MFCC) {
        v[8..].copy_from_slice(&c);
    }
    FeatureVector21(v)
}

/// One row of the exported feature table.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRow {
    pub recording_id: String,
    pub speaker_id: String,
    pub diagnosis: DiagnosisLabel,
    pub features: FeatureVector21,
}

fn table_err(e: impl std::fmt::Display) -> BiomarkerError {
    BiomarkerError::Table(e.to_string())
}

pub fn write_feature_csv<W: Write>(writer: W, rows: &[FeatureRow]) -> Result<(), BiomarkerError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(FEATURE_CSV_HEADER).map_err(table_err)?;
    for row in rows {
        let mut rec = vec![row.recording_id.clone(), row.speaker_id.clone(), row.diagnosis.name().to_string()];
        rec.extend(row.features.0.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(table_err)?;
    }
    w.flush().map_err(table_err)
}

pub fn read_feature_csv<R: Read>(reader: R) -> Result<Vec<FeatureRow>, BiomarkerError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let header = r.headers().map_err(table_err)?;
    if header.iter().ne(FEATURE_CSV_HEADER) {
        return Err(BiomarkerError::Table("unexpected feature table header".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(table_err)?;
        let diagnosis: DiagnosisLabel = rec[2]
            .parse()
            .map_err(|_| BiomarkerError::Table(format!("row {}: unknown diagnosis {:?}", i + 1, &rec[2])))?;
        let mut v = [0.0; N_FEATURES];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = rec[3 + k]
                .parse()
                .map_err(|_| BiomarkerError::Table(format!("row {}: bad number in {}", i + 1, FEATURE_NAMES[k])))?;
        }
        rows.push(FeatureRow {
            recording_id: rec[0].to_string(),
            speaker_id: rec[1].to_string(),
            diagnosis,
            features: FeatureVector21(v),
        });
    }
    Ok(rows)
}
