//! `voxtriage` batch front end. Every command writes plain files stamped with
//! the run seed, configuration digest and format version.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{read_kv_file, RunConfig, SEED_ENV};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "voxtriage", version, about = "Hierarchical voice-disorder triage from sustained vowels")]
pub struct Cli {
    /// key=value configuration file (`#` starts a comment).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; defaults to $VOXTRIAGE_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for data-parallel steps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Omit wall-clock fields so reruns are byte-identical.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Configuration override, repeatable; wins over the config file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Recording manifest (CSV).
    #[arg(long)]
    manifest: PathBuf,
    /// Directory the manifest's audio paths are relative to (default: the manifest's directory).
    #[arg(long)]
    audio_root: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Biomarker table and optional spectrogram dumps for every manifest row.
    Extract {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write one binary spectrogram dump per recording.
        #[arg(long)]
        spectrograms: bool,
    },
    /// Speaker-independent stratified split; writes the manifest with a split column.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains CNN, the three stages and the flat baseline; writes the model bundle and logs.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        /// Recordings screened non-pathological go straight to Healthy.
        #[arg(long)]
        hard_gate: bool,
        /// Soft (probability-like) upstream outputs instead of hard indicators.
        #[arg(long)]
        soft_augmentation: bool,
        /// Cap on CNN training epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluation report and curve CSVs on one partition.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Partition to evaluate: train, validation, test or all.
        #[arg(long, default_value = "test")]
        partition: String,
    },
    /// Per-recording prediction CSV.
    Predict {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "all")]
        partition: String,
    },
    /// Subject-level majority vote over a prediction CSV.
    Fuse {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Prediction column to fuse: binary, group, subtype or flat_subtype.
        #[arg(long, default_value = "subtype")]
        column: String,
    },
    /// Generates the synthetic nine-class cohort (WAVs plus manifest).
    SynthCohort {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        speakers: Option<usize>,
    },
    /// Prints the binomial subject-level accuracy for per-recording accuracy P over K recordings.
    EstimateFusion { p: f64, k: u32 },
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let file = match &cli.config {
        Some(p) => read_kv_file(p)?,
        None => Vec::new(),
    };
    let mut overrides = Vec::new();
    for s in &cli.set {
        let (k, v) = s.split_once('=').ok_or_else(|| CliError::usage(format!("--set {s:?}: expected KEY=VALUE")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(t) = cli.threads {
        overrides.push(("threads".into(), t.to_string()));
    }
    if cli.deterministic {
        overrides.push(("deterministic".into(), "true".into()));
    }
    match &cli.command {
        Command::Train { hard_gate, soft_augmentation, epochs, .. } => {
            if *hard_gate {
                overrides.push(("hard_gate".into(), "true".into()));
            }
            if *soft_augmentation {
                overrides.push(("augmentation".into(), "soft".into()));
            }
            if let Some(e) = epochs {
                overrides.push(("cnn.epochs_max".into(), e.to_string()));
            }
        }
        Command::SynthCohort { speakers: Some(n), .. } => overrides.push(("cohort.speakers".into(), n.to_string())),
        _ => {}
    }
    let env = std::env::var(SEED_ENV).ok();
    RunConfig::resolve(env.as_deref(), &file, &overrides)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    commands::dispatch(&cli.command, &cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            eprintln!("{}", CliError::usage(first).line());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.code() as u8)
        }
    }
}
