//! Per-stage evaluation of a bundle on a held-out partition.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{DiagnosisLabel, EtiologyGroup};
use crate::metrics::{stage_report, write_pr_csv, write_roc_csv, ClassCurves, ClassGroup, ReportOptions, ScoredPredictions, StageReport};

use super::bundle::ModelBundle;
use super::predict::{predict_with, Prediction};
use super::prepare::{data_digest, PreparedRecording};
use super::train::Augmentation;
use super::PipelineError;

pub const REPORT_VERSION: u32 = 1;

/// Stages 2 and 3 rerun with ground-truth upstream labels in place of the
/// predicted ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleUpstreamReport {
    pub stage2: StageReport,
    pub stage3: StageReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub seed: u64,
    pub config_digest: String,
    pub bundle_digest: String,
    pub data_digest: String,
    pub n_recordings: usize,
    pub hard_gate: bool,
    pub augmentation: Augmentation,
    pub cnn: StageReport,
    pub stage1: StageReport,
    pub stage2: StageReport,
    pub stage3: StageReport,
    pub flat: StageReport,
    pub oracle_upstream: OracleUpstreamReport,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Clone, Debug)]
pub struct EvalOutput {
    pub report: EvalReport,
    /// (stage name, per-class curves) for every reported stage.
    pub curves: Vec<(String, Vec<ClassCurves>)>,
    pub predictions: Vec<Prediction>,
}

fn binary_names() -> Vec<String> {
    vec!["NonPathological".into(), "Pathological".into()]
}

fn group_names() -> Vec<String> {
    EtiologyGroup::ALL.iter().map(|g| g.name().to_string()).collect()
}

fn diagnosis_names() -> Vec<String> {
    DiagnosisLabel::ALL.iter().map(|d| d.name().to_string()).collect()
}

fn diagnosis_options() -> ReportOptions {
    ReportOptions {
        groups: EtiologyGroup::ALL
            .iter()
            .map(|g| ClassGroup { name: g.name().into(), members: g.members().iter().map(|d| d.index()).collect() })
            .collect(),
        reference_class: Some(DiagnosisLabel::Healthy.index()),
    }
}

fn group_options() -> ReportOptions {
    ReportOptions { groups: Vec::new(), reference_class: Some(EtiologyGroup::Healthy.index()) }
}

fn collect(preds: &[Prediction], f: impl Fn(&Prediction) -> (usize, usize, Vec<f64>)) -> ScoredPredictions {
    let mut out = ScoredPredictions::default();
    for p in preds {
        let (t, y, s) = f(p);
        out.push(t, y, s);
    }
    out
}

pub fn evaluate(bundle: &ModelBundle, test: &[PreparedRecording]) -> Result<EvalOutput, PipelineError> {
    if test.is_empty() {
        return Err(PipelineError::EmptyPartition("evaluation"));
    }
    let preds = predict_with(bundle, test, false)?;
    let oracle = predict_with(bundle, test, true)?;
    let path = |p: &Prediction| usize::from(p.truth.is_pathological());

    let cnn_set = collect(&preds, |p| {
        (path(p), usize::from(p.cnn_probs[1] >= 0.5), p.cnn_probs.to_vec())
    });
    let s1 = collect(&preds, |p| (path(p), p.binary as usize, p.stage1_scores.clone()));
    let s2 = |set: &[Prediction]| collect(set, |p| (p.truth.group().index(), p.group.index(), p.stage2_scores.clone()));
    let s3 = |set: &[Prediction]| collect(set, |p| (p.truth.index(), p.subtype.index(), p.stage3_scores.clone()));
    let flat = collect(&preds, |p| (p.truth.index(), p.flat_subtype.index(), p.flat_scores.clone()));

    let none = ReportOptions::default();
    let (b, g, d) = (binary_names(), group_names(), diagnosis_names());
    let mut curves = Vec::new();
    let mut run = |name: &str, classes: &[String], set: &ScoredPredictions, opts: &ReportOptions| {
        let (report, c) = stage_report(name, classes, set, opts)?;
        curves.push((name.to_string(), c));
        Ok::<_, PipelineError>(report)
    };
    let cnn = run("cnn", &b, &cnn_set, &none)?;
    let stage1 = run("stage1", &b, &s1, &none)?;
    let stage2 = run("stage2", &g, &s2(&preds), &group_options())?;
    let stage3 = run("stage3", &d, &s3(&preds), &diagnosis_options())?;
    let flat = run("flat", &d, &flat, &diagnosis_options())?;
    let oracle_upstream = OracleUpstreamReport {
        stage2: run("stage2_oracle", &g, &s2(&oracle), &group_options())?,
        stage3: run("stage3_oracle", &d, &s3(&oracle), &diagnosis_options())?,
    };

    let report = EvalReport {
        format_version: REPORT_VERSION,
        seed: bundle.provenance.seed,
        config_digest: bundle.provenance.config_digest.clone(),
        bundle_digest: bundle.digest(),
        data_digest: data_digest(test),
        n_recordings: test.len(),
        hard_gate: bundle.config.hard_gate,
        augmentation: bundle.config.augmentation,
        cnn,
        stage1,
        stage2,
        stage3,
        flat,
        oracle_upstream,
    };
    Ok(EvalOutput { report, curves, predictions: preds })
}

fn file_stem(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect()
}

/// Writes `<stage>_<class>_roc.csv` and `<stage>_<class>_pr.csv` into `dir`,
/// each prefixed by `comment` as a `#` line when given. Returns the paths
/// written.
pub fn write_stage_curves(
    dir: &Path,
    stage: &str,
    curves: &[ClassCurves],
    comment: Option<&str>,
) -> Result<Vec<std::path::PathBuf>, PipelineError> {
    let mut written = Vec::new();
    for c in curves {
        let base = format!("{}_{}", file_stem(stage), file_stem(&c.class));
        let open = |suffix: &str| -> Result<(std::path::PathBuf, std::fs::File), PipelineError> {
            let path = dir.join(format!("{base}_{suffix}.csv"));
            let mut f = std::fs::File::create(&path)?;
            if let Some(m) = comment {
                writeln!(f, "# {m}")?;
            }
            Ok((path, f))
        };
        if let Some(roc) = &c.roc {
            let (path, f) = open("roc")?;
            write_roc_csv(f, roc)?;
            written.push(path);
        }
        if let Some(pr) = &c.pr {
            let (path, f) = open("pr")?;
            write_pr_csv(f, pr)?;
            written.push(path);
        }
    }
    Ok(written)
}
