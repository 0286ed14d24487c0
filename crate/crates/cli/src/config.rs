//! Run configuration: flat `key=value` files with `#` comments, overridden
//! by `--set key=value` and the dedicated flags.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use voxtriage::dataset::CohortConfig;
use voxtriage::pipeline::{Augmentation, PipelineConfig};

use crate::error::CliError;

pub const SEED_ENV: &str = "VOXTRIAGE_SEED";

#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub cohort: CohortConfig,
    pub split_ratios: (f64, f64, f64),
    pub threads: Option<usize>,
    pub deterministic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pipeline: PipelineConfig::default(),
            cohort: CohortConfig::default(),
            split_ratios: (0.8, 0.1, 0.1),
            threads: None,
            deterministic: false,
        }
    }
}

pub fn parse_kv_text(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected key=value", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_kv_file(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    parse_kv_text(&text)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| CliError::usage(format!("{key}: cannot parse {v:?}")))
}

fn list(key: &str, v: &str) -> Result<Vec<f64>, CliError> {
    v.split(',').map(|x| num(key, x.trim())).collect()
}

fn flag(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(CliError::usage(format!("{key}: expected true or false, got {v:?}"))),
    }
}

impl RunConfig {
    pub fn apply(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        let p = &mut self.pipeline;
        match key {
            "seed" => {
                let s = num(key, v)?;
                p.seed = s;
                self.cohort.seed = s;
            }
            "threads" => self.threads = Some(num(key, v)?),
            "deterministic" => self.deterministic = flag(key, v)?,
            "hard_gate" => p.hard_gate = flag(key, v)?,
            "augmentation" => {
                p.augmentation = match v {
                    "hard" => Augmentation::Hard,
                    "soft" => Augmentation::Soft,
                    _ => return Err(CliError::usage(format!("augmentation: expected hard or soft, got {v:?}"))),
                }
            }
            "cv_folds" => p.cv_folds = num(key, v)?,
            "grid_c" => p.grid_c = list(key, v)?,
            "grid_scale_factors" => p.grid_scale_factors = list(key, v)?,
            "smo.tol" => p.smo.tol = num(key, v)?,
            "smo.max_iter" => p.smo.max_iter = num(key, v)?,
            "bagging.n_trees" => p.bagging.n_trees = num(key, v)?,
            "bagging.min_leaf" => p.bagging.min_leaf = num(key, v)?,
            "cnn.epochs_max" => p.cnn.epochs_max = num(key, v)?,
            "cnn.lr" => p.cnn.lr = num(key, v)?,
            "cnn.batch_size" => p.cnn.batch_size = num(key, v)?,
            "cnn.patience" => p.cnn.patience = if v == "none" { None } else { Some(num(key, v)?) },
            "cnn.filters" => {
                let f: Vec<usize> = v.split(',').map(|x| num(key, x.trim())).collect::<Result<_, _>>()?;
                p.cnn.filters = f
                    .try_into()
                    .map_err(|_| CliError::usage("cnn.filters: expected three comma-separated counts"))?;
            }
            "spectro.sample_rate" => p.spectro.sample_rate = num(key, v)?,
            "spectro.fft_size" => p.spectro.fft_size = num(key, v)?,
            "spectro.hop" => p.spectro.hop = num(key, v)?,
            "spectro.mel_bands" => p.spectro.mel_bands = num(key, v)?,
            "spectro.fixed_frames" => p.spectro.fixed_frames = num(key, v)?,
            "spectro.mel_fmin" => p.spectro.mel_fmin = num(key, v)?,
            "spectro.mel_fmax" => p.spectro.mel_fmax = num(key, v)?,
            "spectro.db_floor" => p.spectro.db_floor = num(key, v)?,
            "cohort.speakers" => self.cohort.n_speakers = num(key, v)?,
            "cohort.healthy_fraction" => self.cohort.healthy_fraction = num(key, v)?,
            "cohort.duration" => self.cohort.duration = num(key, v)?,
            "cohort.sample_rate" => self.cohort.sample_rate = num(key, v)?,
            "split.ratios" => {
                let r = list(key, v)?;
                if r.len() != 3 {
                    return Err(CliError::usage("split.ratios: expected train,val,test"));
                }
                self.split_ratios = (r[0], r[1], r[2]);
            }
            _ => return Err(CliError::usage(format!("unknown config key {key:?}"))),
        }
        // the CNN always sees the configured spectrogram shape
        p.cnn.input_shape = (p.spectro.mel_bands, p.spectro.fixed_frames);
        Ok(())
    }

    /// Layers, lowest precedence first: defaults, the seed environment
    /// variable, the config file, then command-line overrides.
    pub fn resolve(
        env_seed: Option<&str>,
        file: &[(String, String)],
        overrides: &[(String, String)],
    ) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(s) = env_seed {
            cfg.apply("seed", s).map_err(|_| CliError::usage(format!("{SEED_ENV}: cannot parse {s:?}")))?;
        }
        for (k, v) in file.iter().chain(overrides) {
            cfg.apply(k, v)?;
        }
        Ok(cfg)
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}
