//! Speaker-grouped, diagnosis-stratified train/validation/test partitioning.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DiagnosisLabel, Partition, RecordingDescriptor};

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("split ratios must be positive and sum to 1 (got {0:?})")]
    InvalidRatios((f64, f64, f64)),
}

/// Non-fatal conditions encountered while splitting.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitWarning {
    /// Stratum too small to split; all its speakers went to training.
    SmallStratum { diagnosis: DiagnosisLabel, speakers: usize },
    /// A speaker's recordings disagree on diagnosis; the first row's label was used.
    InconsistentDiagnosis { speaker_id: String },
}

/// Immutable speaker → partition map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitAssignment {
    assignment: BTreeMap<String, Partition>,
    pub warnings: Vec<SplitWarning>,
}

impl SplitAssignment {
    pub fn partition_of(&self, speaker_id: &str) -> Option<Partition> {
        self.assignment.get(speaker_id).copied()
    }

    pub fn speakers(&self) -> impl Iterator<Item = (&str, Partition)> {
        self.assignment.iter().map(|(s, p)| (s.as_str(), *p))
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Number of speakers per partition: (train, validation, test).
    pub fn counts(&self) -> (usize, usize, usize) {
        self.assignment.values().fold((0, 0, 0), |(a, b, c), p| match p {
            Partition::Train => (a + 1, b, c),
            Partition::Validation => (a, b + 1, c),
            Partition::Test => (a, b, c + 1),
        })
    }

    /// Copies of the descriptors with their `split` field filled in.
    pub fn annotate(&self, descriptors: &[RecordingDescriptor]) -> Vec<RecordingDescriptor> {
        descriptors
            .iter()
            .map(|d| RecordingDescriptor {
                split: self.partition_of(&d.speaker_id),
                ..d.clone()
            })
            .collect()
    }
}

fn round_count(n: usize, ratio: f64) -> usize {
    ((n as f64 * ratio).round() as usize).min(n)
}

/// Shuffles speakers within each diagnosis stratum and allocates them by ratio.
///
/// Validation and test sizes are `round(n * ratio)`; training takes the rest.
/// Strata with fewer than three speakers go entirely to training.
pub fn split_speakers(
    descriptors: &[RecordingDescriptor],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitAssignment, SplitError> {
    let (train, val, test) = ratios;
    if !(train > 0.0 && val > 0.0 && test > 0.0) || (train + val + test - 1.0).abs() > 1e-9 {
        return Err(SplitError::InvalidRatios(ratios));
    }

    let mut warnings = Vec::new();
    let mut speaker_label: BTreeMap<&str, DiagnosisLabel> = BTreeMap::new();
    for d in descriptors {
        match speaker_label.get(d.speaker_id.as_str()) {
            None => {
                speaker_label.insert(&d.speaker_id, d.diagnosis);
            }
            Some(&first) if first != d.diagnosis => {
                let w = SplitWarning::InconsistentDiagnosis {
                    speaker_id: d.speaker_id.clone(),
                };
                if !warnings.contains(&w) {
                    warnings.push(w);
                }
            }
            Some(_) => {}
        }
    }

    let mut strata: BTreeMap<DiagnosisLabel, Vec<&str>> = BTreeMap::new();
    for (speaker, label) in &speaker_label {
        strata.entry(*label).or_default().push(speaker);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    for (label, mut speakers) in strata {
        let n = speakers.len();
        if n < 3 {
            log::warn!("stratum {label} has {n} speakers; assigning all to train");
            warnings.push(SplitWarning::SmallStratum {
                diagnosis: label,
                speakers: n,
            });
            for s in speakers {
                assignment.insert(s.to_string(), Partition::Train);
            }
            continue;
        }
        speakers.shuffle(&mut rng);
        let n_val = round_count(n, val);
        let n_test = round_count(n, test).min(n - n_val);
        for (i, s) in speakers.into_iter().enumerate() {
            let p = if i < n_val {
                Partition::Validation
            } else if i < n_val + n_test {
                Partition::Test
            } else {
                Partition::Train
            };
            assignment.insert(s.to_string(), p);
        }
    }
    Ok(SplitAssignment {
        assignment,
        warnings,
    })
}
