use crate::biomarkers::FeatureVector21;
use crate::classifiers::OvoOutput;
use crate::cnn::predict_proba;
use crate::dataset::{DiagnosisLabel, EtiologyGroup, Recording};

use super::bundle::ModelBundle;
use super::prepare::{prepare_recording, PreparedRecording};
use super::train::Augmentation;
use super::vectors::{
    build_stage1_vector, build_stage2_vector, build_stage3_vector, check_dim, group_one_hot, raw_features, V1_DIM,
    V2_DIM, V3_DIM,
};
use super::PipelineError;

pub const PREDICTION_CSV_HEADER: &str =
    "recording_id,speaker_id,true_label,p_nonpath,p_path,binary,group,subtype,flat_subtype";

/// Pathology score of a two-class Stage-1 output: the decision value oriented
/// so that non-negative means Pathological.
pub(crate) fn stage1_path_score(o: &OvoOutput) -> f64 {
    o.scores[1]
}

pub(crate) fn stage1_soft(o: &OvoOutput) -> f64 {
    1.0 / (1.0 + (-stage1_path_score(o)).exp())
}

pub(crate) fn soft_group(o: &OvoOutput) -> [f64; 3] {
    let m = o.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = o.scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    [e[0] / z, e[1] / z, e[2] / z]
}

/// Where Stages 2 and 3 take their augmentation inputs from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Upstream {
    Predicted,
    /// Ground-truth Stage-1 label and group, for the oracle-upstream evaluation.
    Oracle { pathological: bool, group: EtiologyGroup },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub recording_id: String,
    pub speaker_id: String,
    pub truth: DiagnosisLabel,
    pub cnn_probs: [f64; 2],
    /// 1 = Pathological.
    pub binary: u8,
    pub group: EtiologyGroup,
    pub subtype: DiagnosisLabel,
    pub flat_subtype: DiagnosisLabel,
    /// Decision scores (NonPathological, Pathological).
    pub stage1_scores: Vec<f64>,
    pub stage2_scores: Vec<f64>,
    pub stage3_scores: Vec<f64>,
    /// Tree vote fractions.
    pub flat_scores: Vec<f64>,
    /// The Stage-3 input actually used, before scaling.
    pub v3: Vec<f64>,
}

impl Prediction {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.recording_id,
            self.speaker_id,
            self.truth.name(),
            self.cnn_probs[0],
            self.cnn_probs[1],
            self.binary,
            self.group.name(),
            self.subtype.name(),
            self.flat_subtype.name()
        )
    }
}

fn run_stages(
    bundle: &ModelBundle,
    p: &PreparedRecording,
    f: &FeatureVector21,
    cnn_probs: [f64; 2],
    upstream: Upstream,
) -> Result<Prediction, PipelineError> {
    let aug = bundle.config.augmentation;
    let v1 = build_stage1_vector(f, cnn_probs)?;
    let o1 = bundle.stage1.predict(&v1, V1_DIM)?;
    let predicted_binary = u8::from(stage1_path_score(&o1) >= 0.0);
    let (binary, a1) = match upstream {
        Upstream::Oracle { pathological, .. } => (u8::from(pathological), f64::from(u8::from(pathological))),
        Upstream::Predicted => match aug {
            Augmentation::Hard => (predicted_binary, f64::from(predicted_binary)),
            Augmentation::Soft => (predicted_binary, stage1_soft(&o1)),
        },
    };

    let v2 = build_stage2_vector(f, a1)?;
    let o2 = bundle.stage2.predict(&v2, V2_DIM)?;
    let gated = bundle.config.hard_gate && binary == 0 && matches!(upstream, Upstream::Predicted);
    let (group, a2) = match upstream {
        Upstream::Oracle { group, .. } => (group, group_one_hot(group)),
        Upstream::Predicted if gated => (EtiologyGroup::Healthy, group_one_hot(EtiologyGroup::Healthy)),
        Upstream::Predicted => {
            let g = EtiologyGroup::from_index(o2.label).unwrap();
            match aug {
                Augmentation::Hard => (g, group_one_hot(g)),
                Augmentation::Soft => (g, soft_group(&o2)),
            }
        }
    };

    let v3 = build_stage3_vector(f, a1, a2)?;
    let o3 = bundle.stage3.predict(&v3, V3_DIM)?;
    let subtype = if gated { DiagnosisLabel::Healthy } else { DiagnosisLabel::from_index(o3.label).unwrap() };

    // the augmentation carried into Stage 3 must be exactly what Stages 1-2 returned
    check_dim("stage3", &v3, V3_DIM)?;
    let suffix = &v3[V2_DIM..];
    let hard1 = aug == Augmentation::Hard || !matches!(upstream, Upstream::Predicted);
    let hard2 = hard1 || gated;
    let consistent = (!hard1 || v3[V2_DIM - 1] == f64::from(binary))
        && (!hard2 || suffix == group_one_hot(group))
        && (hard2 || (suffix.iter().sum::<f64>() - 1.0).abs() < 1e-9)
        && (!gated || subtype == DiagnosisLabel::Healthy);
    if !consistent {
        return Err(PipelineError::Inconsistent(format!("{}: v3 suffix {suffix:?} vs group {}", p.recording_id, group.name())));
    }

    let flat_in = bundle.flat.scaler.impute_only(raw_features(&v3));
    let flat_scores = bundle.flat.trees.vote_fractions(&flat_in);
    let flat_subtype = DiagnosisLabel::from_index(bundle.flat.trees.predict(&flat_in)).unwrap();
    Ok(Prediction {
        recording_id: p.recording_id.clone(),
        speaker_id: p.speaker_id.clone(),
        truth: p.diagnosis,
        cnn_probs,
        binary,
        group,
        subtype,
        flat_subtype,
        stage1_scores: o1.scores,
        stage2_scores: o2.scores,
        stage3_scores: o3.scores,
        flat_scores,
        v3,
    })
}

pub(crate) fn predict_with(
    bundle: &ModelBundle,
    items: &[PreparedRecording],
    oracle: bool,
) -> Result<Vec<Prediction>, PipelineError> {
    let images: Vec<&[f32]> = items.iter().map(|p| p.spectrogram.values.as_slice()).collect();
    let probs = predict_proba(&bundle.cnn, &images, bundle.config.cnn.batch_size)?;
    items
        .iter()
        .zip(probs)
        .map(|(p, probs)| {
            let upstream = if oracle {
                Upstream::Oracle { pathological: p.diagnosis.is_pathological(), group: p.diagnosis.group() }
            } else {
                Upstream::Predicted
            };
            run_stages(bundle, p, &p.features, probs, upstream)
        })
        .collect()
}

/// Runs every stage on prepared recordings; the CNN is batched.
pub fn predict_prepared(bundle: &ModelBundle, items: &[PreparedRecording]) -> Result<Vec<Prediction>, PipelineError> {
    predict_with(bundle, items, false)
}

pub fn predict_recording(bundle: &ModelBundle, rec: &Recording) -> Result<Prediction, PipelineError> {
    let p = prepare_recording(rec, &bundle.config.spectro)?;
    Ok(predict_prepared(bundle, std::slice::from_ref(&p))?.remove(0))
}

