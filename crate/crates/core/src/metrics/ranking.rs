use std::io::Write;

use serde::{Deserialize, Serialize};

use super::MetricsError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub auc: f64,
    pub points: Vec<RocPoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub average_precision: f64,
    pub points: Vec<PrPoint>,
}

fn check(scores: &[f64], relevant: &[bool]) -> Result<(), MetricsError> {
    if scores.len() != relevant.len() {
        return Err(MetricsError::LengthMismatch { left: scores.len(), right: relevant.len() });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore);
    }
    Ok(())
}

/// Indices sorted by descending score; equal scores keep input order.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Runs of equal score in descending order, as `(threshold, positives, negatives)`.
fn tie_groups(scores: &[f64], relevant: &[bool]) -> Vec<(f64, u64, u64)> {
    let mut groups: Vec<(f64, u64, u64)> = Vec::new();
    for i in descending(scores) {
        let (p, n) = if relevant[i] { (1, 0) } else { (0, 1) };
        match groups.last_mut() {
            Some(g) if g.0 == scores[i] => {
                g.1 += p;
                g.2 += n;
            }
            _ => groups.push((scores[i], p, n)),
        }
    }
    groups
}

/// ROC-AUC as the normalized Mann-Whitney U statistic (ties count one half),
/// plus the ROC curve at every distinct threshold.
pub fn roc_auc(scores: &[f64], relevant: &[bool]) -> Result<RocCurve, MetricsError> {
    check(scores, relevant)?;
    let n_pos = relevant.iter().filter(|r| **r).count() as u64;
    let n_neg = relevant.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleRelevance);
    }
    let groups = tie_groups(scores, relevant);

    // U counts, for each positive, the negatives below it plus half the tied ones;
    // doubled so the sum stays an exact integer.
    let mut twice_u: u64 = 0;
    let mut neg_above = 0u64;
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0u64, 0u64);
    for &(threshold, p, n) in &groups {
        let neg_below = n_neg - neg_above - n;
        twice_u += p * (2 * neg_below + n);
        neg_above += n;
        tp += p;
        fp += n;
        points.push(RocPoint { threshold, fpr: fp as f64 / n_neg as f64, tpr: tp as f64 / n_pos as f64 });
    }
    let auc = twice_u as f64 / (2 * n_pos * n_neg) as f64;
    Ok(RocCurve { auc, points })
}

/// Average precision: each positive contributes the precision over every
/// sample scoring at least as high as it, so tied samples share one value.
pub fn pr_auc(scores: &[f64], relevant: &[bool]) -> Result<PrCurve, MetricsError> {
    check(scores, relevant)?;
    let n_pos = relevant.iter().filter(|r| **r).count() as u64;
    if n_pos == 0 {
        return Err(MetricsError::NoPositives);
    }
    let mut ap = 0.0;
    let mut points = Vec::new();
    let (mut tp, mut seen) = (0u64, 0u64);
    for (threshold, p, n) in tie_groups(scores, relevant) {
        tp += p;
        seen += p + n;
        let precision = tp as f64 / seen as f64;
        ap += p as f64 * precision;
        points.push(PrPoint { threshold, precision, recall: tp as f64 / n_pos as f64 });
    }
    Ok(PrCurve { average_precision: ap / n_pos as f64, points })
}

fn csv_err(e: impl std::fmt::Display) -> MetricsError {
    MetricsError::Io(e.to_string())
}

pub fn write_roc_csv<W: Write>(w: W, curve: &RocCurve) -> Result<(), MetricsError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["threshold", "fpr", "tpr"]).map_err(csv_err)?;
    for p in &curve.points {
        out.write_record([p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()]).map_err(csv_err)?;
    }
    out.flush().map_err(csv_err)
}

pub fn write_pr_csv<W: Write>(w: W, curve: &PrCurve) -> Result<(), MetricsError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["threshold", "precision", "recall"]).map_err(csv_err)?;
    for p in &curve.points {
        out.write_record([p.threshold.to_string(), p.precision.to_string(), p.recall.to_string()])
            .map_err(csv_err)?;
    }
    out.flush().map_err(csv_err)
}
