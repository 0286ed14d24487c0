use std::collections::BTreeMap;
use std::sync::OnceLock;

use super::*;
use crate::biomarkers::FeatureVector21;
use crate::classifiers::BaggingParams;
use crate::cnn::CnnConfig;
use crate::dataset::{synth_cohort, CohortConfig, EtiologyGroup};
use crate::spectral::SpectroConfig;

struct Fixture {
    train: Vec<PreparedRecording>,
    val: Vec<PreparedRecording>,
    test: Vec<PreparedRecording>,
    cfg: PipelineConfig,
    bundle: ModelBundle,
}

fn small_config(seed: u64) -> PipelineConfig {
    let spectro = SpectroConfig {
        sample_rate: 16_000,
        fft_size: 512,
        hop: 256,
        mel_bands: 16,
        fixed_frames: 16,
        mel_fmin: 0.0,
        mel_fmax: 8_000.0,
        db_floor: -80.0,
    };
    PipelineConfig {
        seed,
        spectro,
        cnn: CnnConfig { epochs_max: 3, ..CnnConfig::tiny(0) },
        cv_folds: 2,
        grid_c: vec![1.0, 10.0],
        grid_scale_factors: vec![0.5, 1.0, 2.0],
        bagging: BaggingParams { n_trees: 10, ..BaggingParams::default() },
        ..PipelineConfig::default()
    }
}

/// Per class: first speaker to test, second to validation, the rest to training.
fn split_by_speaker(items: Vec<PreparedRecording>) -> [Vec<PreparedRecording>; 3] {
    let mut rank: BTreeMap<String, usize> = BTreeMap::new();
    let mut seen = [0usize; 9];
    for p in &items {
        if !rank.contains_key(&p.speaker_id) {
            let c = &mut seen[p.diagnosis.index()];
            rank.insert(p.speaker_id.clone(), *c);
            *c += 1;
        }
    }
    let mut out: [Vec<PreparedRecording>; 3] = Default::default();
    for p in items {
        let part = match rank[&p.speaker_id] {
            0 => 2,
            1 => 1,
            _ => 0,
        };
        out[part].push(p);
    }
    out
}

fn small_cohort(cfg: &PipelineConfig) -> [Vec<PreparedRecording>; 3] {
    let cohort = CohortConfig { n_speakers: 45, duration: 0.5, sample_rate: 16_000, seed: 3, ..CohortConfig::default() };
    let recs: Vec<_> = synth_cohort(&cohort).unwrap().into_iter().map(|(_, r)| r).collect();
    split_by_speaker(prepare_all(&recs, &cfg.spectro).unwrap())
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let cfg = small_config(11);
        let [train, val, test] = small_cohort(&cfg);
        let (bundle, _) = train_pipeline(&train, &val, &cfg).unwrap();
        Fixture { train, val, test, cfg, bundle }
    })
}

fn features() -> FeatureVector21 {
    fixture().train[0].features
}

#[test]
fn stage_vectors_have_fixed_widths() {
    let f = features();
    assert_eq!(build_stage1_vector(&f, [0.3, 0.7]).unwrap().len(), V1_DIM);
    assert_eq!(build_stage2_vector(&f, 1.0).unwrap().len(), V2_DIM);
    assert_eq!(build_stage3_vector(&f, 1.0, [0.0, 1.0, 0.0]).unwrap().len(), V3_DIM);
    let p = &fixture().bundle.stage1;
    assert!(matches!(p.predict(&[0.0; 22], V1_DIM), Err(PipelineError::Dimension { expected: 23, found: 22, .. })));
    let b = &fixture().bundle;
    assert!(b.stage2.predict(&[0.0; 23], V2_DIM).is_err());
    assert!(b.stage3.predict(&[0.0; 24], V3_DIM).is_err());
}

#[test]
fn missing_class_is_rejected() {
    let fx = fixture();
    let train: Vec<_> =
        fx.train.iter().filter(|p| p.diagnosis != crate::dataset::DiagnosisLabel::Dysodia).cloned().collect();
    let err = train_pipeline(&train, &fx.val, &fx.cfg).unwrap_err();
    assert!(matches!(err, PipelineError::MissingClass(crate::dataset::DiagnosisLabel::Dysodia)));
    assert!(matches!(train_pipeline(&fx.train, &[], &fx.cfg), Err(PipelineError::EmptyPartition(_))));
}

#[test]
fn bundle_round_trip_preserves_predictions() {
    let fx = fixture();
    let bytes = fx.bundle.to_bytes();
    let loaded = ModelBundle::from_bytes(&bytes).unwrap();
    assert_eq!(loaded, fx.bundle);
    assert_eq!(loaded.to_bytes(), bytes);
    let probes: Vec<_> = fx.test.iter().chain(&fx.val).take(100).cloned().collect();
    let a = predict_prepared(&fx.bundle, &probes).unwrap();
    let b = predict_prepared(&loaded, &probes).unwrap();
    // Debug formatting compares NaN sentinels too
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
}

#[test]
fn corrupted_bundles_are_rejected() {
    let bytes = fixture().bundle.to_bytes();
    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x10;
    assert!(matches!(ModelBundle::from_bytes(&flipped), Err(PipelineError::Bundle(BundleError::Checksum))));

    let mut old = bytes.clone();
    old[8..12].copy_from_slice(&0u32.to_le_bytes());
    assert!(matches!(
        ModelBundle::from_bytes(&old),
        Err(PipelineError::Bundle(BundleError::VersionMismatch { found: 0, .. }))
    ));

    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(ModelBundle::from_bytes(&magic), Err(PipelineError::Bundle(BundleError::BadMagic))));
    assert!(matches!(
        ModelBundle::from_bytes(&bytes[..bytes.len() - 40]),
        Err(PipelineError::Bundle(BundleError::Checksum))
    ));
    assert!(matches!(ModelBundle::from_bytes(&bytes[..10]), Err(PipelineError::Bundle(BundleError::Truncated))));
}

#[test]
fn predictions_are_internally_consistent() {
    let fx = fixture();
    for p in predict_prepared(&fx.bundle, &fx.test).unwrap() {
        assert_eq!(p.v3.len(), V3_DIM);
        assert_eq!(p.v3[V2_DIM - 1], f64::from(p.binary));
        assert_eq!(&p.v3[V2_DIM..], &group_one_hot(p.group));
        assert!((p.cnn_probs[0] + p.cnn_probs[1] - 1.0).abs() < 1e-6);
        assert_eq!(p.csv_row().split(',').count(), PREDICTION_CSV_HEADER.split(',').count());
    }
}

#[test]
fn hard_gate_sends_screened_out_recordings_to_healthy() {
    let fx = fixture();
    let mut gated = fx.bundle.clone();
    gated.config.hard_gate = true;
    for p in predict_prepared(&gated, &fx.test).unwrap() {
        if p.binary == 0 {
            assert_eq!(p.group, EtiologyGroup::Healthy);
            assert_eq!(p.subtype, crate::dataset::DiagnosisLabel::Healthy);
        }
    }
}

#[test]
fn oracle_upstream_uses_true_labels() {
    let fx = fixture();
    let out = predict::predict_with(&fx.bundle, &fx.test, true).unwrap();
    for p in &out {
        assert_eq!(p.binary, u8::from(p.truth.is_pathological()));
        assert_eq!(p.group, p.truth.group());
    }
}

#[test]
fn oracle_upstream_never_confuses_healthy() {
    let fx = fixture();
    for p in predict::predict_with(&fx.bundle, &fx.test, true).unwrap() {
        let healthy = DiagnosisLabel::Healthy;
        assert_eq!(p.truth == healthy, p.subtype == healthy, "{}", p.recording_id);
    }
}

#[test]
fn evaluation_reports_every_stage() {
    let fx = fixture();
    let out = evaluate(&fx.bundle, &fx.test).unwrap();
    let r = &out.report;
    assert_eq!(r.n_recordings, fx.test.len());
    assert_eq!(r.stage1.classes.len(), 2);
    assert_eq!(r.stage2.classes.len(), 3);
    assert_eq!(r.stage3.classes.len(), 9);
    assert_eq!(r.flat.classes.len(), 9);
    assert_eq!(r.stage3.groups.len(), 3);
    assert!(r.stage3.macro_roc_auc_excluding_reference.is_some());
    assert_eq!(out.curves.len(), 7);
    assert_eq!(r.bundle_digest, fx.bundle.digest());
    let json = r.to_json();
    let back: EvalReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back.to_json(), json);
    assert!(matches!(evaluate(&fx.bundle, &[]), Err(PipelineError::EmptyPartition(_))));
}

#[test]
fn training_is_deterministic() {
    let fx = fixture();
    let (again, _) = train_pipeline(&fx.train, &fx.val, &fx.cfg).unwrap();
    assert_eq!(again.to_bytes(), fx.bundle.to_bytes());
    let a = evaluate(&fx.bundle, &fx.test).unwrap().report.to_json();
    let b = evaluate(&again, &fx.test).unwrap().report.to_json();
    assert_eq!(a, b);
}

#[test]
fn config_mismatch_is_rejected() {
    let mut cfg = fixture().cfg.clone();
    cfg.cnn.input_shape = (32, 16);
    assert!(matches!(cfg.validate(), Err(PipelineError::Config(_))));
    assert_ne!(small_config(1).digest(), small_config(2).digest());
}
