use serde::{Deserialize, Serialize};

use super::ConfusionMatrix;

/// A ratio whose 0/0 case is reported as 0 with `undefined` set.
fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

fn f1(p: f64, r: f64) -> (f64, bool) {
    ratio(2.0 * p * r, p + r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    Macro,
    Micro,
    Weighted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// One-vs-rest accuracy `(TP + TN) / N`.
    pub accuracy: f64,
    pub support: u64,
    pub undefined: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Multiclass accuracy, trace over total.
    pub accuracy: f64,
    pub undefined: bool,
}

pub fn per_class_prf(cm: &ConfusionMatrix) -> Vec<ClassPrf> {
    let total = cm.total() as f64;
    (0..cm.n_classes())
        .map(|k| {
            let tp = cm.tp(k) as f64;
            let (precision, u1) = ratio(tp, tp + cm.fp(k) as f64);
            let (recall, u2) = ratio(tp, tp + cm.fn_(k) as f64);
            let (f, u3) = f1(precision, recall);
            let (accuracy, u4) = ratio(tp + cm.tn(k) as f64, total);
            ClassPrf { precision, recall, f1: f, accuracy, support: cm.support(k), undefined: u1 || u2 || u3 || u4 }
        })
        .collect()
}

pub fn accuracy(cm: &ConfusionMatrix) -> f64 {
    ratio(cm.correct() as f64, cm.total() as f64).0
}

pub fn prf(cm: &ConfusionMatrix, averaging: Averaging) -> Prf {
    let classes = per_class_prf(cm);
    let acc = accuracy(cm);
    let any_undefined = classes.iter().any(|c| c.undefined) || cm.total() == 0;
    match averaging {
        Averaging::Macro => {
            let k = classes.len() as f64;
            Prf {
                precision: classes.iter().map(|c| c.precision).sum::<f64>() / k,
                recall: classes.iter().map(|c| c.recall).sum::<f64>() / k,
                f1: classes.iter().map(|c| c.f1).sum::<f64>() / k,
                accuracy: acc,
                undefined: any_undefined,
            }
        }
        Averaging::Micro => {
            let tp = cm.correct() as f64;
            let fp: f64 = (0..cm.n_classes()).map(|k| cm.fp(k) as f64).sum();
            let fn_: f64 = (0..cm.n_classes()).map(|k| cm.fn_(k) as f64).sum();
            let (precision, u1) = ratio(tp, tp + fp);
            let (recall, u2) = ratio(tp, tp + fn_);
            let (f, u3) = f1(precision, recall);
            Prf { precision, recall, f1: f, accuracy: acc, undefined: u1 || u2 || u3 }
        }
        Averaging::Weighted => {
            let total = cm.total() as f64;
            let w = |f: fn(&ClassPrf) -> f64| {
                ratio(classes.iter().map(|c| c.support as f64 * f(c)).sum::<f64>(), total).0
            };
            Prf {
                precision: w(|c| c.precision),
                recall: w(|c| c.recall),
                f1: w(|c| c.f1),
                accuracy: acc,
                undefined: any_undefined,
            }
        }
    }
}
