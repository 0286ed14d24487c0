//! Classification metrics: confusion matrices, precision/recall/F1 with
//! macro, micro and weighted averaging, ROC-AUC, average precision, and the
//! per-stage evaluation report.

mod confusion;
mod prf;
mod ranking;
mod report;

use thiserror::Error;

pub use confusion::{confusion, ConfusionMatrix};
pub use prf::{accuracy, per_class_prf, prf, Averaging, ClassPrf, Prf};
pub use ranking::{pr_auc, roc_auc, write_pr_csv, write_roc_csv, PrCurve, PrPoint, RocCurve, RocPoint};
pub use report::{
    stage_report, ClassCurves, ClassGroup, ClassReport, GroupReport, ReportOptions, ScoredPredictions,
    StageReport,
};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("label {0} is outside the class list")]
    UnknownLabel(usize),
    #[error("score vector has {found} entries, expected {expected}")]
    ScoreWidth { expected: usize, found: usize },
    #[error("non-finite score")]
    NonFiniteScore,
    #[error("ROC-AUC is undefined when only one relevance value is present")]
    SingleRelevance,
    #[error("average precision is undefined without positives")]
    NoPositives,
    #[error("empty evaluation set")]
    Empty,
    #[error("write failed: {0}")]
    Io(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn binary_accuracy_by_hand() {
        // TP=85, TN=75, FP=25, FN=15 with class 1 as positive
        let mut t = Vec::new();
        let mut p = Vec::new();
        for (tt, pp, n) in [(1, 1, 85), (0, 0, 75), (0, 1, 25), (1, 0, 15)] {
            t.extend(std::iter::repeat_n(tt, n));
            p.extend(std::iter::repeat_n(pp, n));
        }
        let cm = confusion(&t, &p, &names(2)).unwrap();
        assert_eq!((cm.tp(1), cm.tn(1), cm.fp(1), cm.fn_(1)), (85, 75, 25, 15));
        assert_eq!(accuracy(&cm), 0.8);
        assert_eq!(per_class_prf(&cm)[1].accuracy, 0.8);
    }

    #[test]
    fn macro_and_micro_precision_by_hand() {
        // class A: TP 9, FP 1, FN 1; class B: TP 1, FP 1, FN 1; class C absorbs the rest
        let t = [vec![0; 9], vec![0], vec![2], vec![1], vec![1], vec![2]].concat();
        let p = [vec![0; 9], vec![2], vec![0], vec![1], vec![2], vec![1]].concat();
        let cm = confusion(&t, &p, &names(3)).unwrap();
        let pc = per_class_prf(&cm);
        assert!((pc[0].precision - 0.9).abs() < 1e-15);
        assert!((pc[1].precision - 0.5).abs() < 1e-15);
        assert!(((pc[0].precision + pc[1].precision) / 2.0 - 0.7).abs() < 1e-15);
        let tp = (cm.tp(0) + cm.tp(1)) as f64;
        let fp = (cm.fp(0) + cm.fp(1)) as f64;
        assert!((tp / (tp + fp) - 10.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn zero_over_zero_is_flagged() {
        let cm = confusion(&[0, 0], &[0, 0], &names(2)).unwrap();
        let pc = per_class_prf(&cm);
        assert_eq!(pc[1].precision, 0.0);
        assert!(pc[1].undefined && !pc[0].undefined);
        assert!(prf(&cm, Averaging::Macro).undefined);
    }

    #[test]
    fn unknown_label_is_rejected() {
        assert_eq!(confusion(&[0, 3], &[0, 1], &names(3)), Err(MetricsError::UnknownLabel(3)));
    }

    #[test]
    fn auc_examples() {
        let r = roc_auc(&[0.9, 0.8, 0.7, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(r.auc, 1.0);
        let r = roc_auc(&[0.8, 0.3, 0.5, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(r.auc, 0.75);
        let r = roc_auc(&[0.4; 6], &[true, false, true, false, false, true]).unwrap();
        assert_eq!(r.auc, 0.5);
        assert_eq!(r.points.len(), 2);
        assert_eq!(roc_auc(&[0.1, 0.2], &[true, true]).unwrap_err(), MetricsError::SingleRelevance);
    }

    #[test]
    fn ap_examples() {
        let ap = pr_auc(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]).unwrap();
        assert!((ap.average_precision - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
        let ap = pr_auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(ap.average_precision, 1.0);
        assert_eq!(pr_auc(&[0.3], &[false]).unwrap_err(), MetricsError::NoPositives);
    }

    #[test]
    fn perfect_predictions_score_one() {
        let mut preds = ScoredPredictions::default();
        for i in 0..30 {
            let c = i % 3;
            let mut s = vec![0.0; 3];
            s[c] = 1.0;
            preds.push(c, c, s);
        }
        let opts = ReportOptions {
            groups: vec![ClassGroup { name: "g".into(), members: vec![1, 2] }],
            reference_class: Some(0),
        };
        let (rep, curves) = stage_report("s", &names(3), &preds, &opts).unwrap();
        assert_eq!(rep.accuracy, 1.0);
        for p in [rep.macro_avg, rep.micro_avg, rep.weighted_avg] {
            assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        }
        assert_eq!(rep.macro_roc_auc, Some(1.0));
        assert_eq!(rep.macro_pr_auc_excluding_reference, Some(1.0));
        assert_eq!(rep.groups[0].mean_roc_auc, Some(1.0));
        assert_eq!(curves.len(), 3);
    }

    #[test]
    fn empty_report_is_an_error() {
        let r = stage_report("s", &names(2), &ScoredPredictions::default(), &ReportOptions::default());
        assert_eq!(r.unwrap_err(), MetricsError::Empty);
    }
}
