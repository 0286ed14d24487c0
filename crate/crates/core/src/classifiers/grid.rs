//! Stratified k-fold grid search over SVM hyperparameters.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ovo::ovo_fit_with_gram;
use super::smo::SmoParams;
use super::{ClassifierError, KernelSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum SvmFamily {
    Gaussian,
    Polynomial { degree: u32 },
}

impl SvmFamily {
    pub fn kernel(self, scale: f64) -> KernelSpec {
        match self {
            SvmFamily::Gaussian => KernelSpec::gaussian_with_scale(scale),
            SvmFamily::Polynomial { degree } => KernelSpec::Polynomial { degree, scale },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub c: f64,
    pub scale: f64,
}

pub const C_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];
pub const SCALE_FACTORS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

/// Default grid for `dim` input features: Gaussian scales around `sqrt(dim)`
/// (the typical distance between z-scored points), polynomial scales around
/// `dim` (the typical size of a dot product).
pub fn default_grid(family: SvmFamily, dim: usize) -> Vec<GridPoint> {
    grid_from(family, dim, &C_GRID, &SCALE_FACTORS)
}

/// Grid over the given C values and scale factors of the family's base scale.
pub fn grid_from(family: SvmFamily, dim: usize, cs: &[f64], factors: &[f64]) -> Vec<GridPoint> {
    let base = match family {
        SvmFamily::Gaussian => (dim as f64).sqrt(),
        SvmFamily::Polynomial { .. } => dim as f64,
    };
    let mut grid = Vec::new();
    for &c in cs {
        for &f in factors {
            grid.push(GridPoint { c, scale: base * f });
        }
    }
    grid
}

/// Fold index per sample. Each class is shuffled and dealt round-robin,
/// continuing the deal across classes so fold sizes stay balanced.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<usize>, ClassifierError> {
    if folds < 2 || labels.len() < folds {
        return Err(ClassifierError::InvalidHyperparameter(format!("{folds} folds for {} samples", labels.len())));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.len() == 1 {
            return Err(ClassifierError::TooFewForFolds { class: c, count: 1 });
        }
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    Ok(assignment)
}

/// Fold index per sample with whole groups (speakers) kept in one fold. Groups
/// are stratified by their majority label and dealt like [`stratified_folds`].
pub fn grouped_stratified_folds(
    labels: &[usize],
    groups: &[usize],
    folds: usize,
    seed: u64,
) -> Result<Vec<usize>, ClassifierError> {
    if labels.len() != groups.len() {
        return Err(ClassifierError::LengthMismatch { rows: groups.len(), labels: labels.len() });
    }
    let n_groups = groups.iter().max().map_or(0, |m| m + 1);
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut tally = vec![vec![0usize; n_classes]; n_groups];
    for (&g, &l) in groups.iter().zip(labels) {
        tally[g][l] += 1;
    }
    let present: Vec<usize> = (0..n_groups).filter(|&g| tally[g].iter().any(|&c| c > 0)).collect();
    if folds < 2 || present.len() < folds {
        return Err(ClassifierError::InvalidHyperparameter(format!("{folds} folds for {} groups", present.len())));
    }
    let group_label: Vec<usize> = tally
        .iter()
        .map(|t| (0..n_classes).fold(0, |best, c| if t[c] > t[best] { c } else { best }))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of_group = vec![0; n_groups];
    let mut next = 0;
    for c in 0..n_classes {
        let mut members: Vec<usize> = present.iter().copied().filter(|&g| group_label[g] == c).collect();
        if members.len() == 1 {
            return Err(ClassifierError::TooFewForFolds { class: c, count: 1 });
        }
        members.shuffle(&mut rng);
        for g in members {
            fold_of_group[g] = next % folds;
            next += 1;
        }
    }
    Ok(groups.iter().map(|&g| fold_of_group[g]).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub point: GridPoint,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub family: SvmFamily,
    pub best: GridPoint,
    pub table: Vec<CvRow>,
}

/// Picks the grid point with the best mean fold accuracy; ties go to the
/// smaller C, then the larger kernel scale.
pub fn select_best(table: &[CvRow]) -> Option<GridPoint> {
    let mut best: Option<&CvRow> = None;
    for row in table {
        let better = match best {
            None => true,
            Some(b) => {
                row.mean_accuracy > b.mean_accuracy
                    || (row.mean_accuracy == b.mean_accuracy
                        && (row.point.c < b.point.c || (row.point.c == b.point.c && row.point.scale > b.point.scale)))
            }
        };
        if better {
            best = Some(row);
        }
    }
    best.map(|r| r.point)
}

/// Cross-validated accuracy of one-vs-one SVMs at every grid point.
#[allow(clippy::too_many_arguments)]
pub fn grid_search_cv(
    x: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    family: SvmFamily,
    grid: &[GridPoint],
    folds: usize,
    seed: u64,
    base: &SmoParams,
) -> Result<GridResult, ClassifierError> {
    let fold_of = stratified_folds(labels, folds, seed)?;
    grid_search_cv_with_folds(x, labels, n_classes, family, grid, &fold_of, base)
}

/// [`grid_search_cv`] over a precomputed fold assignment.
pub fn grid_search_cv_with_folds(
    x: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    family: SvmFamily,
    grid: &[GridPoint],
    fold_of: &[usize],
    base: &SmoParams,
) -> Result<GridResult, ClassifierError> {
    if grid.is_empty() {
        return Err(ClassifierError::InvalidHyperparameter("empty grid".into()));
    }
    if x.len() != labels.len() || fold_of.len() != labels.len() {
        return Err(ClassifierError::LengthMismatch { rows: x.len(), labels: labels.len() });
    }
    let folds = fold_of.iter().max().map_or(0, |m| m + 1);

    // One Gram matrix per distinct scale, shared by every C and fold.
    let mut scales: Vec<f64> = grid.iter().map(|g| g.scale).collect();
    scales.sort_by(f64::total_cmp);
    scales.dedup();
    let grams: Vec<Vec<Vec<f64>>> = scales.par_iter().map(|&s| family.kernel(s).gram(x)).collect();

    let table: Result<Vec<CvRow>, ClassifierError> = grid
        .par_iter()
        .map(|&point| {
            let kernel = family.kernel(point.scale);
            kernel.validate()?;
            let gram = &grams[scales.iter().position(|&s| s == point.scale).unwrap()];
            let params = SmoParams { c: point.c, ..*base };
            let mut fold_accuracy = Vec::with_capacity(folds);
            for f in 0..folds {
                let train: Vec<usize> = (0..x.len()).filter(|&i| fold_of[i] != f).collect();
                let test: Vec<usize> = (0..x.len()).filter(|&i| fold_of[i] == f).collect();
                let model = ovo_fit_with_gram(x, labels, &train, n_classes, gram, kernel, &params)?;
                let mut correct = 0;
                for &i in &test {
                    if model.predict(&x[i])? == labels[i] {
                        correct += 1;
                    }
                }
                fold_accuracy.push(correct as f64 / test.len().max(1) as f64);
            }
            let mean_accuracy = fold_accuracy.iter().sum::<f64>() / folds as f64;
            Ok(CvRow { point, fold_accuracy, mean_accuracy })
        })
        .collect();
    let table = table?;
    let best = select_best(&table).expect("grid is non-empty");
    Ok(GridResult { family, best, table })
}

pub fn write_cv_csv<W: Write>(w: W, result: &GridResult) -> Result<(), ClassifierError> {
    let err = |e: csv::Error| ClassifierError::Io(e.to_string());
    let mut out = csv::Writer::from_writer(w);
    let folds = result.table.first().map_or(0, |r| r.fold_accuracy.len());
    let mut header = vec!["c".to_string(), "scale".to_string(), "mean_accuracy".to_string()];
    header.extend((0..folds).map(|f| format!("fold{f}")));
    out.write_record(&header).map_err(err)?;
    for row in &result.table {
        let mut rec = vec![row.point.c.to_string(), row.point.scale.to_string(), row.mean_accuracy.to_string()];
        rec.extend(row.fold_accuracy.iter().map(|a| a.to_string()));
        out.write_record(&rec).map_err(err)?;
    }
    out.flush().map_err(|e| ClassifierError::Io(e.to_string()))
}
