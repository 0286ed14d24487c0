use serde::{Deserialize, Serialize};

use super::{
    confusion, per_class_prf, pr_auc, prf, roc_auc, Averaging, MetricsError, PrCurve, Prf, RocCurve,
};

/// Per-sample truth, predicted label and per-class scores for one stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoredPredictions {
    pub truth: Vec<usize>,
    pub predicted: Vec<usize>,
    pub scores: Vec<Vec<f64>>,
}

impl ScoredPredictions {
    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn push(&mut self, truth: usize, predicted: usize, scores: Vec<f64>) {
        self.truth.push(truth);
        self.predicted.push(predicted);
        self.scores.push(scores);
    }

    fn validate(&self, k: usize) -> Result<(), MetricsError> {
        if self.is_empty() {
            return Err(MetricsError::Empty);
        }
        if self.predicted.len() != self.len() || self.scores.len() != self.len() {
            return Err(MetricsError::LengthMismatch { left: self.len(), right: self.scores.len() });
        }
        if let Some(s) = self.scores.iter().find(|s| s.len() != k) {
            return Err(MetricsError::ScoreWidth { expected: k, found: s.len() });
        }
        Ok(())
    }

    /// Column `k` of the scores with its one-vs-rest relevance.
    pub fn one_vs_rest(&self, k: usize) -> (Vec<f64>, Vec<bool>) {
        (self.scores.iter().map(|s| s[k]).collect(), self.truth.iter().map(|t| *t == k).collect())
    }
}

/// A named subset of classes whose per-class AUCs are also averaged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassGroup {
    pub name: String,
    pub members: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub groups: Vec<ClassGroup>,
    /// Class left out of the second macro-AUC variant (the healthy class).
    pub reference_class: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub undefined: bool,
    /// `None` when the class has no positive or no negative sample.
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group: String,
    pub classes: Vec<String>,
    pub mean_roc_auc: Option<f64>,
    pub mean_pr_auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub n_samples: usize,
    pub classes: Vec<String>,
    pub confusion_matrix: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub macro_avg: Prf,
    pub micro_avg: Prf,
    pub weighted_avg: Prf,
    pub per_class: Vec<ClassReport>,
    pub macro_roc_auc: Option<f64>,
    pub macro_pr_auc: Option<f64>,
    /// Macro AUCs without the reference class; `None` when no reference is set.
    pub macro_roc_auc_excluding_reference: Option<f64>,
    pub macro_pr_auc_excluding_reference: Option<f64>,
    pub groups: Vec<GroupReport>,
}

/// ROC and PR curves of one class, for export.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassCurves {
    pub class: String,
    pub roc: Option<RocCurve>,
    pub pr: Option<PrCurve>,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Builds the per-stage report and the curves behind its AUCs.
pub fn stage_report(
    stage: &str,
    classes: &[String],
    preds: &ScoredPredictions,
    opts: &ReportOptions,
) -> Result<(StageReport, Vec<ClassCurves>), MetricsError> {
    let k = classes.len();
    preds.validate(k)?;
    let cm = confusion(&preds.truth, &preds.predicted, classes)?;
    let prfs = per_class_prf(&cm);

    let mut per_class = Vec::with_capacity(k);
    let mut curves = Vec::with_capacity(k);
    for (c, name) in classes.iter().enumerate() {
        let (scores, relevant) = preds.one_vs_rest(c);
        let roc = match roc_auc(&scores, &relevant) {
            Ok(r) => Some(r),
            Err(MetricsError::SingleRelevance) => None,
            Err(e) => return Err(e),
        };
        let pr = match pr_auc(&scores, &relevant) {
            Ok(r) => Some(r),
            Err(MetricsError::NoPositives) => None,
            Err(e) => return Err(e),
        };
        let p = prfs[c];
        per_class.push(ClassReport {
            class: name.clone(),
            precision: p.precision,
            recall: p.recall,
            f1: p.f1,
            support: p.support,
            undefined: p.undefined,
            roc_auc: roc.as_ref().map(|r| r.auc),
            pr_auc: pr.as_ref().map(|r| r.average_precision),
        });
        curves.push(ClassCurves { class: name.clone(), roc, pr });
    }

    let keep = |c: &usize| Some(*c) != opts.reference_class;
    let excluding = |f: fn(&ClassReport) -> Option<f64>| {
        opts.reference_class
            .and_then(|_| mean_defined((0..k).filter(keep).map(|c| f(&per_class[c]))))
    };
    let groups = opts
        .groups
        .iter()
        .map(|g| GroupReport {
            group: g.name.clone(),
            classes: g.members.iter().map(|&c| classes[c].clone()).collect(),
            mean_roc_auc: mean_defined(g.members.iter().map(|&c| per_class[c].roc_auc)),
            mean_pr_auc: mean_defined(g.members.iter().map(|&c| per_class[c].pr_auc)),
        })
        .collect();

    let report = StageReport {
        stage: stage.to_string(),
        n_samples: preds.len(),
        classes: classes.to_vec(),
        confusion_matrix: cm.counts().to_vec(),
        accuracy: super::accuracy(&cm),
        macro_avg: prf(&cm, Averaging::Macro),
        micro_avg: prf(&cm, Averaging::Micro),
        weighted_avg: prf(&cm, Averaging::Weighted),
        macro_roc_auc: mean_defined(per_class.iter().map(|c| c.roc_auc)),
        macro_pr_auc: mean_defined(per_class.iter().map(|c| c.pr_auc)),
        macro_roc_auc_excluding_reference: excluding(|c| c.roc_auc),
        macro_pr_auc_excluding_reference: excluding(|c| c.pr_auc),
        per_class,
        groups,
    };
    Ok((report, curves))
}
