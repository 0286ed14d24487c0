use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use voxtriage::biomarkers::{write_feature_csv, FeatureRow};
use voxtriage::classifiers::write_cv_csv;
use voxtriage::cnn::write_training_log;
use voxtriage::dataset::{
    decode_wav, encode_wav, parse_manifest, split_speakers, synth_cohort, write_manifest, DiagnosisLabel,
    EtiologyGroup, Partition, Recording, RecordingDescriptor,
};
use voxtriage::fusion::{majority_vote_fuse, subject_accuracy_estimate};
use voxtriage::pipeline::{
    evaluate, predict_prepared, prepare_all, train_pipeline, write_stage_curves, ModelBundle, Prediction,
    PreparedRecording, Provenance, PREDICTION_CSV_HEADER,
};
use voxtriage::spectral::SpectroConfig;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{stamped_csv, write_atomic, write_json, Stamp, StagedDir};
use crate::{Command, DataArgs};

pub fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<(), CliError> {
    match cmd {
        Command::Extract { data, out, spectrograms } => extract(data, out, *spectrograms, cfg),
        Command::Split { manifest, out } => split(manifest, out, cfg),
        Command::Train { data, out, .. } => train(data, out, cfg),
        Command::Evaluate { data, bundle, out, partition } => evaluate_cmd(data, bundle, out, partition, cfg),
        Command::Predict { data, bundle, out, partition } => predict(data, bundle, out, partition),
        Command::Fuse { predictions, out, column } => fuse(predictions, out, column, cfg),
        Command::SynthCohort { out, .. } => synth(out, cfg),
        Command::EstimateFusion { p, k } => {
            let v = subject_accuracy_estimate(*p, *k).map_err(|e| CliError::usage(e.to_string()))?;
            println!("{v:.4}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct ProvenanceFile<'a> {
    stamp: &'a Stamp,
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    elapsed_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<&'a RunConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a Provenance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bundle_digest: Option<String>,
    counts: BTreeMap<&'static str, usize>,
}

impl<'a> ProvenanceFile<'a> {
    fn new(stamp: &'a Stamp, command: &'a str, started: Instant, deterministic: bool) -> Self {
        ProvenanceFile {
            stamp,
            command,
            elapsed_seconds: (!deterministic).then(|| started.elapsed().as_secs_f64()),
            config: None,
            model: None,
            bundle_digest: None,
            counts: BTreeMap::new(),
        }
    }
}

fn run_stamp(cfg: &RunConfig) -> Stamp {
    Stamp::new(cfg.pipeline.seed, cfg.digest())
}

fn bundle_stamp(bundle: &ModelBundle) -> Stamp {
    Stamp::new(bundle.provenance.seed, bundle.provenance.config_digest.clone())
}

fn load_manifest(path: &Path) -> Result<Vec<RecordingDescriptor>, CliError> {
    let f = std::fs::File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    parse_manifest(f).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn audio_root(data: &DataArgs) -> PathBuf {
    data.audio_root
        .clone()
        .unwrap_or_else(|| data.manifest.parent().map(Path::to_path_buf).unwrap_or_default())
}

fn load_recordings(root: &Path, descs: &[RecordingDescriptor]) -> Result<Vec<Recording>, CliError> {
    descs
        .par_iter()
        .map(|d| {
            let path = root.join(&d.path);
            let bytes = std::fs::read(&path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            let audio = decode_wav(&bytes).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            Ok(Recording::from_descriptor(d, audio))
        })
        .collect()
}

fn parse_partition(s: &str) -> Result<Option<Partition>, CliError> {
    if s == "all" {
        return Ok(None);
    }
    Partition::parse(s)
        .map(Some)
        .ok_or_else(|| CliError::usage(format!("unknown partition {s:?} (train, validation, test, all)")))
}

fn select(descs: &[RecordingDescriptor], part: Option<Partition>) -> Result<Vec<RecordingDescriptor>, CliError> {
    let Some(p) = part else { return Ok(descs.to_vec()) };
    if descs.iter().any(|d| d.split.is_none()) {
        return Err(CliError::data("manifest has no split column; run `voxtriage split` first"));
    }
    Ok(descs.iter().filter(|d| d.split == Some(p)).cloned().collect())
}

fn prepare(data: &DataArgs, part: Option<Partition>, spectro: &SpectroConfig) -> Result<Vec<PreparedRecording>, CliError> {
    let descs = select(&load_manifest(&data.manifest)?, part)?;
    let recs = load_recordings(&audio_root(data), &descs)?;
    Ok(prepare_all(&recs, spectro)?)
}

fn extract(data: &DataArgs, out: &Path, spectrograms: bool, cfg: &RunConfig) -> Result<(), CliError> {
    let started = Instant::now();
    cfg.pipeline.spectro.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let prepared = prepare(data, None, &cfg.pipeline.spectro)?;
    let stamp = run_stamp(cfg);
    let dir = StagedDir::create(out)?;
    let rows: Vec<FeatureRow> = prepared
        .iter()
        .map(|p| FeatureRow {
            recording_id: p.recording_id.clone(),
            speaker_id: p.speaker_id.clone(),
            diagnosis: p.diagnosis,
            features: p.features,
        })
        .collect();
    let mut body = Vec::new();
    write_feature_csv(&mut body, &rows).map_err(|e| CliError::data(e.to_string()))?;
    std::fs::write(dir.path().join("features.csv"), stamped_csv(&stamp, &body))?;
    if spectrograms {
        let sdir = dir.path().join("spectrograms");
        std::fs::create_dir(&sdir)?;
        for p in &prepared {
            let f = std::fs::File::create(sdir.join(format!("{}.spec", p.recording_id)))?;
            p.spectrogram.write_dump(std::io::BufWriter::new(f)).map_err(|e| CliError::data(e.to_string()))?;
        }
    }
    let mut prov = ProvenanceFile::new(&stamp, "extract", started, cfg.deterministic);
    prov.config = Some(cfg);
    prov.counts.insert("recordings", prepared.len());
    write_json(&dir.path().join("provenance.json"), &prov)?;
    dir.commit()?;
    Ok(())
}

fn split(manifest: &Path, out: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let descs = load_manifest(manifest)?;
    let assignment = split_speakers(&descs, cfg.split_ratios, cfg.pipeline.seed)
        .map_err(|e| CliError::usage(e.to_string()))?;
    for w in &assignment.warnings {
        eprintln!("warning {}", serde_json::to_string(w).unwrap_or_default());
    }
    let mut body = Vec::new();
    write_manifest(&mut body, &assignment.annotate(&descs)).map_err(|e| CliError::data(e.to_string()))?;
    write_atomic(out, &stamped_csv(&run_stamp(cfg), &body))?;
    let (tr, va, te) = assignment.counts();
    println!("speakers train={tr} validation={va} test={te}");
    Ok(())
}

fn train(data: &DataArgs, out: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let started = Instant::now();
    cfg.pipeline.validate()?;
    let descs = load_manifest(&data.manifest)?;
    let train_d = select(&descs, Some(Partition::Train))?;
    let val_d = select(&descs, Some(Partition::Validation))?;
    let root = audio_root(data);
    let train_set = prepare_all(&load_recordings(&root, &train_d)?, &cfg.pipeline.spectro)?;
    let val_set = prepare_all(&load_recordings(&root, &val_d)?, &cfg.pipeline.spectro)?;
    let dir = StagedDir::create(out)?;
    let (bundle, artifacts) = train_pipeline(&train_set, &val_set, &cfg.pipeline)?;
    let stamp = bundle_stamp(&bundle);

    let bytes = bundle.to_bytes();
    std::fs::write(dir.path().join("model.vxb"), &bytes)?;
    let mut log = Vec::new();
    write_training_log(&mut log, &artifacts.cnn_log)?;
    std::fs::write(dir.path().join("cnn_training_log.csv"), stamped_csv(&stamp, &log))?;
    for (name, grid) in &artifacts.grids {
        let mut body = Vec::new();
        write_cv_csv(&mut body, grid).map_err(|e| CliError::data(e.to_string()))?;
        std::fs::write(dir.path().join(format!("cv_{name}.csv")), stamped_csv(&stamp, &body))?;
    }
    let mut prov = ProvenanceFile::new(&stamp, "train", started, cfg.deterministic);
    prov.config = Some(cfg);
    prov.model = Some(&bundle.provenance);
    prov.bundle_digest = Some(bundle.digest());
    prov.counts.insert("train_recordings", train_set.len());
    prov.counts.insert("validation_recordings", val_set.len());
    write_json(&dir.path().join("provenance.json"), &prov)?;
    dir.commit()?;
    for s in &bundle.provenance.stages {
        println!("{} C={} scale={} cv_accuracy={:.4}", s.stage, s.best.c, s.best.scale, s.best_cv_accuracy);
    }
    Ok(())
}

fn load_bundle(path: &Path) -> Result<ModelBundle, CliError> {
    ModelBundle::load(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn predictions_csv(stamp: &Stamp, preds: &[Prediction]) -> Vec<u8> {
    let mut body = format!("{PREDICTION_CSV_HEADER}\n");
    for p in preds {
        body.push_str(&p.csv_row());
        body.push('\n');
    }
    stamped_csv(stamp, body.as_bytes())
}

fn evaluate_cmd(data: &DataArgs, bundle: &Path, out: &Path, partition: &str, cfg: &RunConfig) -> Result<(), CliError> {
    let started = Instant::now();
    let part = parse_partition(partition)?;
    let bundle = load_bundle(bundle)?;
    let items = prepare(data, part, &bundle.config.spectro)?;
    let dir = StagedDir::create(out)?;
    let result = evaluate(&bundle, &items)?;
    let stamp = bundle_stamp(&bundle);
    std::fs::write(dir.path().join("report.json"), result.report.to_json())?;
    let curves = dir.path().join("curves");
    std::fs::create_dir(&curves)?;
    for (stage, c) in &result.curves {
        write_stage_curves(&curves, stage, c, Some(&stamp.comment()))?;
    }
    std::fs::write(dir.path().join("predictions.csv"), predictions_csv(&stamp, &result.predictions))?;
    let mut prov = ProvenanceFile::new(&stamp, "evaluate", started, cfg.deterministic);
    prov.model = Some(&bundle.provenance);
    prov.bundle_digest = Some(result.report.bundle_digest.clone());
    prov.counts.insert("recordings", items.len());
    write_json(&dir.path().join("provenance.json"), &prov)?;
    dir.commit()?;
    let r = &result.report;
    for s in [&r.cnn, &r.stage1, &r.stage2, &r.stage3, &r.flat, &r.oracle_upstream.stage2, &r.oracle_upstream.stage3] {
        let auc = s.macro_roc_auc.map_or("undefined".to_string(), |a| format!("{a:.4}"));
        println!("{} accuracy={:.4} macro_roc_auc={auc}", s.stage, s.accuracy);
    }
    Ok(())
}

fn predict(data: &DataArgs, bundle: &Path, out: &Path, partition: &str) -> Result<(), CliError> {
    let part = parse_partition(partition)?;
    let bundle = load_bundle(bundle)?;
    let items = prepare(data, part, &bundle.config.spectro)?;
    let preds = predict_prepared(&bundle, &items)?;
    write_atomic(out, &predictions_csv(&bundle_stamp(&bundle), &preds))
}

/// Label index of a prediction-CSV token for the fused column.
fn label_index(column: &str, token: &str) -> Option<usize> {
    match column {
        "binary" => match token {
            "0" => Some(0),
            "1" => Some(1),
            _ => None,
        },
        "group" => EtiologyGroup::ALL.iter().position(|g| g.name() == token),
        _ => token.parse::<DiagnosisLabel>().ok().map(DiagnosisLabel::index),
    }
}

fn label_token(column: &str, index: usize) -> String {
    match column {
        "binary" => index.to_string(),
        "group" => EtiologyGroup::ALL[index].name().to_string(),
        _ => DiagnosisLabel::ALL[index].name().to_string(),
    }
}

/// The true label expressed in the fused column's label space.
fn truth_index(column: &str, d: DiagnosisLabel) -> usize {
    match column {
        "binary" => usize::from(d.is_pathological()),
        "group" => d.group().index(),
        _ => d.index(),
    }
}

/// True label, per-recording labels and (binary column only) scores.
type Subject = (usize, Vec<usize>, Vec<Vec<f64>>);

fn fuse(predictions: &Path, out: &Path, column: &str, cfg: &RunConfig) -> Result<(), CliError> {
    if !["binary", "group", "subtype", "flat_subtype"].contains(&column) {
        return Err(CliError::usage(format!("unknown column {column:?}")));
    }
    let f = std::fs::File::open(predictions).map_err(|e| CliError::data(format!("{}: {e}", predictions.display())))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(f);
    let header = reader.headers().map_err(|e| CliError::data(e.to_string()))?.clone();
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| CliError::data(format!("prediction CSV lacks column {name}")))
    };
    let (c_spk, c_true, c_val) = (col("speaker_id")?, col("true_label")?, col(column)?);
    let (c_pn, c_pp) = (col("p_nonpath")?, col("p_path")?);

    let mut subjects: BTreeMap<String, Subject> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::data(e.to_string()))?;
        let bad = |what: &str| CliError::data(format!("prediction row {}: bad {what}", i + 1));
        let truth: DiagnosisLabel = rec[c_true].parse().map_err(|_| bad("true_label"))?;
        let label = label_index(column, &rec[c_val]).ok_or_else(|| bad(column))?;
        let entry = subjects.entry(rec[c_spk].to_string()).or_insert((truth_index(column, truth), Vec::new(), Vec::new()));
        entry.1.push(label);
        if column == "binary" {
            let p = |c: usize| rec[c].parse::<f64>().map_err(|_| bad("probability"));
            entry.2.push(vec![p(c_pn)?, p(c_pp)?]);
        }
    }
    if subjects.is_empty() {
        return Err(CliError::data("prediction CSV has no rows"));
    }
    let mut body = String::from("speaker_id,n_recordings,fused_label,true_label\n");
    let mut correct = 0;
    for (spk, (truth, labels, scores)) in &subjects {
        let fused = majority_vote_fuse(labels, scores).map_err(|e| CliError::data(e.to_string()))?;
        correct += usize::from(fused == *truth);
        body.push_str(&format!("{spk},{},{},{}\n", labels.len(), label_token(column, fused), label_token(column, *truth)));
    }
    write_atomic(out, &stamped_csv(&run_stamp(cfg), body.as_bytes()))?;
    println!("subjects={} subject_accuracy={:.4}", subjects.len(), correct as f64 / subjects.len() as f64);
    Ok(())
}

fn synth(out: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let started = Instant::now();
    let cohort = synth_cohort(&cfg.cohort).map_err(|e| CliError::usage(e.to_string()))?;
    let stamp = run_stamp(cfg);
    let dir = StagedDir::create(out)?;
    std::fs::create_dir(dir.path().join("wav"))?;
    cohort.par_iter().try_for_each(|(desc, rec)| {
        std::fs::write(dir.path().join(&desc.path), encode_wav(&rec.samples, rec.sample_rate))
    })?;
    let descs: Vec<RecordingDescriptor> = cohort.into_iter().map(|(d, _)| d).collect();
    let mut body = Vec::new();
    write_manifest(&mut body, &descs).map_err(|e| CliError::data(e.to_string()))?;
    std::fs::write(dir.path().join("manifest.csv"), stamped_csv(&stamp, &body))?;
    let mut prov = ProvenanceFile::new(&stamp, "synth-cohort", started, cfg.deterministic);
    prov.config = Some(cfg);
    prov.counts.insert("recordings", descs.len());
    write_json(&dir.path().join("provenance.json"), &prov)?;
    dir.commit()?;
    Ok(())
}
