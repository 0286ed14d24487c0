use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::biomarkers::FeatureVector21;
use crate::classifiers::{
    bagged_trees_train, grid_from, grid_search_cv_with_folds, grouped_stratified_folds, ovo_fit, ovo_fit_with_gram,
    BaggingParams, GridResult, OvoOutput, OvoSvm, Scaler, SmoParams, SvmFamily, C_GRID, SCALE_FACTORS,
};
use crate::cnn::{cnn_train, predict_proba, CnnConfig, EpochLog, ImageSet};
use crate::dataset::{DiagnosisLabel, EtiologyGroup};
use crate::spectral::SpectroConfig;

use super::bundle::{FlatModel, GroupTable, ModelBundle, Provenance, StageModel, StageSummary, BUNDLE_VERSION};
use super::predict::{soft_group, stage1_path_score, stage1_soft};
use super::prepare::{data_digest, PreparedRecording};
use super::vectors::{build_stage1_vector, build_stage2_vector, build_stage3_vector, group_one_hot, V1_DIM, V2_DIM, V3_DIM};
use super::{derive_seed, hex, PipelineError};

/// How upstream stage outputs enter the downstream vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Augmentation {
    /// Binary Stage-1 indicator and one-hot Stage-2 group.
    Hard,
    /// Logistic squash of the Stage-1 decision value and softmax of the
    /// Stage-2 scores (uncalibrated; for experimentation).
    Soft,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub spectro: SpectroConfig,
    pub cnn: CnnConfig,
    pub cv_folds: usize,
    pub grid_c: Vec<f64>,
    /// Multipliers of each family's base kernel scale.
    pub grid_scale_factors: Vec<f64>,
    pub smo: SmoParams,
    pub bagging: BaggingParams,
    pub augmentation: Augmentation,
    /// Short-circuit recordings screened as non-pathological to Healthy.
    pub hard_gate: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            spectro: SpectroConfig::default(),
            cnn: CnnConfig::default(),
            cv_folds: 5,
            grid_c: C_GRID.to_vec(),
            grid_scale_factors: SCALE_FACTORS.to_vec(),
            smo: SmoParams::default(),
            bagging: BaggingParams::default(),
            augmentation: Augmentation::Hard,
            hard_gate: false,
        }
    }
}

pub(crate) const STAGE1_FAMILY: SvmFamily = SvmFamily::Gaussian;
pub(crate) const STAGE2_FAMILY: SvmFamily = SvmFamily::Polynomial { degree: 3 };
pub(crate) const STAGE3_FAMILY: SvmFamily = SvmFamily::Polynomial { degree: 2 };

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        self.cnn.validate()?;
        self.spectro.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.cnn.input_shape != (self.spectro.mel_bands, self.spectro.fixed_frames) {
            return bad(format!(
                "CNN input {:?} does not match the {}x{} spectrogram",
                self.cnn.input_shape, self.spectro.mel_bands, self.spectro.fixed_frames
            ));
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be at least 2".into());
        }
        if self.grid_c.is_empty() || self.grid_scale_factors.is_empty() {
            return bad("hyperparameter grids must be non-empty".into());
        }
        if self.grid_c.iter().chain(&self.grid_scale_factors).any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("grid values must be positive and finite".into());
        }
        if !(self.smo.tol > 0.0) || self.smo.max_iter == 0 {
            return bad("SMO tolerance and iteration cap must be positive".into());
        }
        if self.bagging.n_trees == 0 || self.bagging.min_leaf == 0 {
            return bad("bagging needs at least one tree and min_leaf >= 1".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(&json))
    }
}

/// Side products of training that do not live in the bundle.
#[derive(Clone, Debug)]
pub struct TrainArtifacts {
    pub cnn_log: Vec<EpochLog>,
    pub grids: Vec<(String, GridResult)>,
}

/// Binary screening target: 0 NonPathological, 1 Pathological.
pub(crate) fn binary_target(d: DiagnosisLabel) -> usize {
    usize::from(d.is_pathological())
}

/// Rounds stored support vectors and coefficients to f32 so the bundle's
/// 32-bit tensors reproduce the in-memory model exactly.
pub(crate) fn finalize_f32(svm: &mut OvoSvm) {
    for (_, m) in &mut svm.machines {
        for v in m.support_vectors.iter_mut().flatten() {
            *v = *v as f32 as f64;
        }
        for c in &mut m.coefs {
            *c = *c as f32 as f64;
        }
    }
}

struct FittedStage {
    model: StageModel,
    grid: GridResult,
    /// Out-of-fold outputs for every training row (only when requested).
    oof: Vec<OvoOutput>,
}

#[allow(clippy::too_many_arguments)]
fn fit_stage(
    name: &str,
    raw: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    family: SvmFamily,
    speakers: &[usize],
    cfg: &PipelineConfig,
    stream: u64,
    want_oof: bool,
) -> Result<FittedStage, PipelineError> {
    let scaler = Scaler::fit(raw)?;
    let x = scaler.apply_all(raw)?;
    let folds = grouped_stratified_folds(y, speakers, cfg.cv_folds, derive_seed(cfg.seed, stream))?;
    let grid = grid_from(family, x[0].len(), &cfg.grid_c, &cfg.grid_scale_factors);
    let result = grid_search_cv_with_folds(&x, y, n_classes, family, &grid, &folds, &cfg.smo)?;
    let kernel = family.kernel(result.best.scale);
    let params = SmoParams { c: result.best.c, ..cfg.smo };
    let mut svm = ovo_fit(&x, y, n_classes, kernel, &params)?;
    finalize_f32(&mut svm);
    log::info!("{name}: best C={} scale={:.4}", result.best.c, result.best.scale);

    let mut oof = Vec::new();
    if want_oof {
        let gram = kernel.gram(&x);
        let mut outputs: Vec<Option<OvoOutput>> = vec![None; x.len()];
        for f in 0..cfg.cv_folds {
            let fit_rows: Vec<usize> = (0..x.len()).filter(|&i| folds[i] != f).collect();
            let fold_model = ovo_fit_with_gram(&x, y, &fit_rows, n_classes, &gram, kernel, &params)?;
            for i in (0..x.len()).filter(|&i| folds[i] == f) {
                outputs[i] = Some(fold_model.predict_scores(&x[i])?);
            }
        }
        oof = outputs.into_iter().map(|o| o.expect("every row is held out once")).collect();
    }
    Ok(FittedStage {
        model: StageModel { name: name.into(), family, point: result.best, scaler, svm },
        grid: result,
        oof,
    })
}

fn image_set(items: &[PreparedRecording]) -> ImageSet<'_> {
    ImageSet {
        images: items.iter().map(|p| p.spectrogram.values.as_slice()).collect(),
        labels: items.iter().map(|p| binary_target(p.diagnosis)).collect(),
    }
}

/// Trains CNN, the three stages and the flat baseline in order. Downstream
/// stages see out-of-fold upstream predictions (speaker-grouped folds), so
/// their training inputs carry realistic upstream errors. The CNN
/// probabilities entering Stage 1 are in-sample.
pub fn train_pipeline(
    train: &[PreparedRecording],
    val: &[PreparedRecording],
    cfg: &PipelineConfig,
) -> Result<(ModelBundle, TrainArtifacts), PipelineError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(PipelineError::EmptyPartition("training"));
    }
    if val.is_empty() {
        return Err(PipelineError::EmptyPartition("validation"));
    }
    for d in DiagnosisLabel::ALL {
        if !train.iter().any(|p| p.diagnosis == d) {
            return Err(PipelineError::MissingClass(d));
        }
    }
    let mut speaker_index = BTreeMap::new();
    for p in train {
        let next = speaker_index.len();
        speaker_index.entry(p.speaker_id.as_str()).or_insert(next);
    }
    let speakers: Vec<usize> = train.iter().map(|p| speaker_index[p.speaker_id.as_str()]).collect();
    let features: Vec<&FeatureVector21> = train.iter().map(|p| &p.features).collect();

    // CNN screener
    let cnn_cfg = CnnConfig { seed: derive_seed(cfg.seed, 1), ..cfg.cnn.clone() };
    let train_images = image_set(train);
    let (cnn, cnn_log) = cnn_train::<f32>(&train_images, &image_set(val), &cnn_cfg)?;
    let probs = predict_proba(&cnn, &train_images.images, cnn_cfg.batch_size)?;

    // Stage 1: biomarkers + CNN probabilities -> pathological or not
    let v1: Vec<Vec<f64>> = features.iter().zip(&probs).map(|(f, p)| build_stage1_vector(f, *p)).collect::<Result<_, _>>()?;
    let y1: Vec<usize> = train.iter().map(|p| binary_target(p.diagnosis)).collect();
    let s1 = fit_stage("stage1", &v1, &y1, 2, STAGE1_FAMILY, &speakers, cfg, 2, true)?;
    let aug1: Vec<f64> = s1
        .oof
        .iter()
        .map(|o| match cfg.augmentation {
            Augmentation::Hard => f64::from(u8::from(stage1_path_score(o) >= 0.0)),
            Augmentation::Soft => stage1_soft(o),
        })
        .collect();

    // Stage 2: biomarkers + Stage-1 output -> etiological group
    let v2: Vec<Vec<f64>> = features.iter().zip(&aug1).map(|(f, &a)| build_stage2_vector(f, a)).collect::<Result<_, _>>()?;
    let y2: Vec<usize> = train.iter().map(|p| p.diagnosis.group().index()).collect();
    let s2 = fit_stage("stage2", &v2, &y2, 3, STAGE2_FAMILY, &speakers, cfg, 3, true)?;
    let aug2: Vec<[f64; 3]> = s2
        .oof
        .iter()
        .map(|o| match cfg.augmentation {
            Augmentation::Hard => group_one_hot(EtiologyGroup::from_index(o.label).unwrap()),
            Augmentation::Soft => soft_group(o),
        })
        .collect();

    // Stage 3: biomarkers + Stage-1 + Stage-2 outputs -> diagnosis
    let v3: Vec<Vec<f64>> = features
        .iter()
        .zip(aug1.iter().zip(&aug2))
        .map(|(f, (&a1, &a2))| build_stage3_vector(f, a1, a2))
        .collect::<Result<_, _>>()?;
    let y3: Vec<usize> = train.iter().map(|p| p.diagnosis.index()).collect();
    let s3 = fit_stage("stage3", &v3, &y3, 9, STAGE3_FAMILY, &speakers, cfg, 4, false)?;
    debug_assert!(v1.iter().all(|v| v.len() == V1_DIM) && v2.iter().all(|v| v.len() == V2_DIM));
    debug_assert!(v3.iter().all(|v| v.len() == V3_DIM));

    // Flat baseline on the imputed raw biomarkers
    let raw: Vec<Vec<f64>> = features.iter().map(|f| f.as_slice().to_vec()).collect();
    let flat_scaler = Scaler::fit(&raw)?;
    let imputed: Vec<Vec<f64>> = raw.iter().map(|r| flat_scaler.impute_only(r)).collect();
    let bagging = BaggingParams { seed: derive_seed(cfg.seed, 5), ..cfg.bagging };
    let trees = bagged_trees_train(&imputed, &y3, 9, &bagging)?;

    let best_epoch = cnn_log
        .iter()
        .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss))
        .map_or(0, |e| e.epoch);
    let summaries = [&s1, &s2, &s3]
        .iter()
        .map(|s| StageSummary {
            stage: s.model.name.clone(),
            family: s.grid.family,
            best: s.grid.best,
            best_cv_accuracy: s.grid.table.iter().find(|r| r.point == s.grid.best).map_or(f64::NAN, |r| r.mean_accuracy),
            grid_points: s.grid.table.len(),
        })
        .collect();
    let bundle = ModelBundle {
        format_version: BUNDLE_VERSION,
        config: cfg.clone(),
        cnn,
        stage1: s1.model,
        stage2: s2.model,
        stage3: s3.model,
        flat: FlatModel { scaler: flat_scaler, trees },
        labels: DiagnosisLabel::ALL.iter().map(|d| d.name().to_string()).collect(),
        groups: EtiologyGroup::ALL
            .iter()
            .map(|g| GroupTable {
                name: g.name().to_string(),
                members: g.members().iter().map(|d| d.name().to_string()).collect(),
            })
            .collect(),
        provenance: Provenance {
            seed: cfg.seed,
            config_digest: cfg.digest(),
            data_digest: data_digest(train),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            n_train: train.len(),
            n_val: val.len(),
            cnn_epochs: cnn_log.len(),
            cnn_best_epoch: best_epoch,
            stages: summaries,
        },
    };
    bundle.validate()?;
    let grids = vec![
        ("stage1".to_string(), s1.grid),
        ("stage2".to_string(), s2.grid),
        ("stage3".to_string(), s3.grid),
    ];
    Ok((bundle, TrainArtifacts { cnn_log, grids }))
}
