//! Cohort handling: audio decoding, resampling, manifest ingestion,
//! speaker-independent splits, the synthetic phonation generator and the
//! synthetic cohort built on it.

mod cohort;
mod manifest;
mod resample;
mod split;
mod synth;
mod wav;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cohort::{
    class_counts, plan_cohort, synth_cohort, CohortConfig, Variability, VoiceProfile, CLASS_PROFILES, SESSION_PITCHES,
    SESSION_VOWELS,
};
pub use manifest::{parse_manifest, write_manifest, ManifestError, RecordingDescriptor, MANIFEST_HEADER};
pub use resample::{resample, ResampleError, CANONICAL_RATE};
pub use split::{split_speakers, SplitAssignment, SplitError, SplitWarning};
pub use synth::{synth_phonation, Formant, SynthError, SynthParams};
pub use wav::{decode_wav, encode_wav, WavAudio, WavError};

/// The nine diagnostic classes of the cohort, in canonical index order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DiagnosisLabel {
    Healthy,
    HyperfunctionalDysphonia,
    Laryngitis,
    FunctionalDysphonia,
    Dysodia,
    PsychogenicDysphonia,
    ContactPachydermia,
    ReinkeEdema,
    VocalCordPolyp,
}

impl DiagnosisLabel {
    pub const ALL: [DiagnosisLabel; 9] = [
        DiagnosisLabel::Healthy,
        DiagnosisLabel::HyperfunctionalDysphonia,
        DiagnosisLabel::Laryngitis,
        DiagnosisLabel::FunctionalDysphonia,
        DiagnosisLabel::Dysodia,
        DiagnosisLabel::PsychogenicDysphonia,
        DiagnosisLabel::ContactPachydermia,
        DiagnosisLabel::ReinkeEdema,
        DiagnosisLabel::VocalCordPolyp,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Human-readable name as used in manifests.
    pub fn name(self) -> &'static str {
        match self {
            DiagnosisLabel::Healthy => "Healthy",
            DiagnosisLabel::HyperfunctionalDysphonia => "Hyperfunctional Dysphonia",
            DiagnosisLabel::Laryngitis => "Laryngitis",
            DiagnosisLabel::FunctionalDysphonia => "Functional Dysphonia",
            DiagnosisLabel::Dysodia => "Dysodia",
            DiagnosisLabel::PsychogenicDysphonia => "Psychogenic Dysphonia",
            DiagnosisLabel::ContactPachydermia => "Contact Pachydermia",
            DiagnosisLabel::ReinkeEdema => "Reinke Edema",
            DiagnosisLabel::VocalCordPolyp => "Vocal Cord Polyp",
        }
    }

    pub fn is_pathological(self) -> bool {
        self != DiagnosisLabel::Healthy
    }

    pub fn group(self) -> EtiologyGroup {
        map_group(self)
    }
}

impl fmt::Display for DiagnosisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DiagnosisLabel {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        DiagnosisLabel::ALL
            .iter()
            .copied()
            .find(|d| d.name() == s)
            .ok_or(())
    }
}

/// Etiological triage groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EtiologyGroup {
    Healthy,
    FunctionalPsychogenic,
    StructuralInflammatory,
}

impl EtiologyGroup {
    /// One-hot order used by the stage-3 feature vector.
    pub const ALL: [EtiologyGroup; 3] = [
        EtiologyGroup::Healthy,
        EtiologyGroup::FunctionalPsychogenic,
        EtiologyGroup::StructuralInflammatory,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EtiologyGroup::Healthy => "Healthy",
            EtiologyGroup::FunctionalPsychogenic => "Functional/Psychogenic",
            EtiologyGroup::StructuralInflammatory => "Structural/Inflammatory",
        }
    }

    pub fn members(self) -> Vec<DiagnosisLabel> {
        DiagnosisLabel::ALL
            .iter()
            .copied()
            .filter(|d| map_group(*d) == self)
            .collect()
    }
}

impl fmt::Display for EtiologyGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Maps a diagnosis onto its etiological group.
pub fn map_group(d: DiagnosisLabel) -> EtiologyGroup {
    use DiagnosisLabel::*;
    match d {
        Healthy => EtiologyGroup::Healthy,
        Laryngitis | ContactPachydermia | ReinkeEdema | VocalCordPolyp => {
            EtiologyGroup::StructuralInflammatory
        }
        FunctionalDysphonia | HyperfunctionalDysphonia | PsychogenicDysphonia | Dysodia => {
            EtiologyGroup::FunctionalPsychogenic
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Vowel {
    A,
    I,
    U,
}

impl Vowel {
    pub const ALL: [Vowel; 3] = [Vowel::A, Vowel::I, Vowel::U];

    pub fn token(self) -> &'static str {
        match self {
            Vowel::A => "a",
            Vowel::I => "i",
            Vowel::U => "u",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|v| v.token() == s.trim())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pitch {
    Neutral,
    High,
    Low,
    Glide,
}

impl Pitch {
    pub const ALL: [Pitch; 4] = [Pitch::Neutral, Pitch::High, Pitch::Low, Pitch::Glide];

    pub fn token(self) -> &'static str {
        match self {
            Pitch::Neutral => "neutral",
            Pitch::High => "high",
            Pitch::Low => "low",
            Pitch::Glide => "glide",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|p| p.token() == s.trim())
    }
}

/// Binary gender; encoded as Female=0, Male=1 in feature vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub fn token(self) -> &'static str {
        match self {
            Gender::Female => "F",
            Gender::Male => "M",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "F" => Some(Gender::Female),
            "M" => Some(Gender::Male),
            _ => None,
        }
    }

    pub fn encode(self) -> f64 {
        match self {
            Gender::Female => 0.0,
            Gender::Male => 1.0,
        }
    }
}

/// Partition a speaker is assigned to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl Partition {
    pub fn token(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "train" => Some(Partition::Train),
            "validation" | "val" => Some(Partition::Validation),
            "test" => Some(Partition::Test),
            _ => None,
        }
    }
}

/// One decoded sustained-vowel recording with its metadata.
#[derive(Clone, Debug)]
pub struct Recording {
    pub recording_id: String,
    pub speaker_id: String,
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub vowel: Vowel,
    pub pitch: Pitch,
    pub gender: Gender,
    pub age: Option<u32>,
    pub diagnosis: DiagnosisLabel,
}

impl Recording {
    /// Builds a recording from a manifest row and decoded audio.
    pub fn from_descriptor(desc: &RecordingDescriptor, audio: WavAudio) -> Self {
        Recording {
            recording_id: desc.recording_id.clone(),
            speaker_id: desc.speaker_id.clone(),
            samples: audio.samples,
            sample_rate: audio.sample_rate,
            vowel: desc.vowel,
            pitch: desc.pitch,
            gender: desc.gender,
            age: desc.age,
            diagnosis: desc.diagnosis,
        }
    }

    /// Checks the recording invariants: non-empty samples in [-1, 1] and a positive rate.
    pub fn is_valid(&self) -> bool {
        self.sample_rate > 0
            && !self.samples.is_empty()
            && self.samples.iter().all(|s| (-1.0..=1.0).contains(s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_mapping_matches_cohort_taxonomy() {
        assert_eq!(map_group(DiagnosisLabel::Laryngitis), EtiologyGroup::StructuralInflammatory);
        assert_eq!(map_group(DiagnosisLabel::Dysodia), EtiologyGroup::FunctionalPsychogenic);
        assert_eq!(map_group(DiagnosisLabel::Healthy), EtiologyGroup::Healthy);
    }

    #[test]
    fn group_mapping_partitions_into_1_4_4() {
        let mut sizes: Vec<usize> = EtiologyGroup::ALL.iter().map(|g| g.members().len()).collect();
        sizes.sort();
        assert_eq!(sizes, vec![1, 4, 4]);
        let total: usize = sizes.iter().sum();
        assert_eq!(total, DiagnosisLabel::ALL.len());
    }

    #[test]
    fn diagnosis_names_round_trip() {
        for d in DiagnosisLabel::ALL {
            assert_eq!(d.name().parse::<DiagnosisLabel>(), Ok(d));
            assert_eq!(DiagnosisLabel::from_index(d.index()), Some(d));
        }
        assert_eq!("Reinke Edema".parse::<DiagnosisLabel>(), Ok(DiagnosisLabel::ReinkeEdema));
        assert!("Reinke's Edema".parse::<DiagnosisLabel>().is_err());
    }
}
