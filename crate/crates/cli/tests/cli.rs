use std::path::Path;
use std::process::{Command, Output};

fn voxtriage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voxtriage"))
        .args(args)
        .env_remove("VOXTRIAGE_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn estimate_fusion_prints_four_decimals() {
    let o = voxtriage(&["estimate-fusion", "0.805", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "0.9458\n");
    let o = voxtriage(&["estimate-fusion", "0.805", "11"]);
    assert_eq!(stdout(&o), "0.9897\n");
}

#[test]
fn usage_errors_exit_2_with_one_line() {
    for args in [
        &["estimate-fusion", "1.5", "5"][..],
        &["estimate-fusion", "0.8"],
        &["no-such-command"],
        &["--set", "bogus=1", "estimate-fusion", "0.8", "3"],
        &["--set", "cnn.filters=1,2", "estimate-fusion", "0.8", "3"],
    ] {
        let o = voxtriage(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        let err = stderr(&o);
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with("error kind=usage code=2 message=\""), "{err}");
    }
}

#[test]
fn missing_inputs_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.csv");
    let out = dir.path().join("out");
    let o = voxtriage(&["extract", "--manifest", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error kind=data code=3"));
    assert!(!out.exists());

    let bad = dir.path().join("bad.vxb");
    std::fs::write(&bad, b"not a bundle").unwrap();
    let manifest = dir.path().join("m.csv");
    std::fs::write(&manifest, "recording_id,path,speaker_id,gender,age,vowel,pitch,diagnosis\n").unwrap();
    let o = voxtriage(&[
        "predict",
        "--manifest",
        manifest.to_str().unwrap(),
        "--bundle",
        bad.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

const SMALL: &[&str] = &[
    "--set", "cohort.speakers=45",
    "--set", "cohort.duration=0.5",
    "--set", "cohort.sample_rate=16000",
    "--set", "spectro.sample_rate=16000",
    "--set", "spectro.fft_size=512",
    "--set", "spectro.hop=256",
    "--set", "spectro.mel_bands=16",
    "--set", "spectro.fixed_frames=16",
    "--set", "spectro.mel_fmax=8000",
    "--set", "cnn.filters=2,2,2",
    "--set", "cnn.epochs_max=2",
    "--set", "cv_folds=2",
    "--set", "grid_c=1,10",
    "--set", "grid_scale_factors=0.5,1,2",
    "--set", "bagging.n_trees=10",
    "--set", "split.ratios=0.6,0.2,0.2",
    "--seed", "5",
    "--deterministic",
];

fn run_ok(args: &[&str]) -> Output {
    let mut all: Vec<&str> = SMALL.to_vec();
    all.extend_from_slice(args);
    let o = voxtriage(&all);
    assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn end_to_end_run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run_ok(&["synth-cohort", "--out", s(&d.join("cohort"))]);
    let manifest = d.join("split.csv");
    let o = run_ok(&["split", "--manifest", s(&d.join("cohort/manifest.csv")), "--out", s(&manifest)]);
    assert!(stdout(&o).starts_with("speakers train="));
    let root = d.join("cohort");
    let data = ["--manifest", s(&manifest), "--audio-root", s(&root)];

    let extract = d.join("features");
    run_ok(&[&["extract"][..], &data, &["--out", s(&extract)]].concat());
    let features = std::fs::read_to_string(extract.join("features.csv")).unwrap();
    assert!(features.starts_with("# voxtriage"));
    assert_eq!(features.lines().filter(|l| !l.starts_with('#')).count(), 45 * 12 + 1);

    for name in ["model_a", "model_b"] {
        run_ok(&[&["train"][..], &data, &["--out", s(&d.join(name))]].concat());
    }
    let a = std::fs::read(d.join("model_a/model.vxb")).unwrap();
    let b = std::fs::read(d.join("model_b/model.vxb")).unwrap();
    assert_eq!(a, b);
    for f in ["cnn_training_log.csv", "cv_stage1.csv", "cv_stage2.csv", "cv_stage3.csv", "provenance.json"] {
        assert_eq!(std::fs::read(d.join("model_a").join(f)).unwrap(), std::fs::read(d.join("model_b").join(f)).unwrap(), "{f}");
    }
    // an existing output directory is never overwritten
    let again = voxtriage(&[SMALL, &["train"], &data, &["--out", s(&d.join("model_a"))]].concat());
    assert_eq!(again.status.code(), Some(2));

    let bundle = d.join("model_a/model.vxb");
    let o = run_ok(&[&["evaluate"][..], &data, &["--bundle", s(&bundle), "--out", s(&d.join("eval"))]].concat());
    assert!(stdout(&o).lines().any(|l| l.starts_with("stage3 accuracy=")));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("eval/report.json")).unwrap()).unwrap();
    assert_eq!(report["format_version"], 1);
    assert!(report["stage3"]["accuracy"].as_f64().unwrap() >= 0.0);
    assert!(d.join("eval/curves/stage3_healthy_roc.csv").exists());

    let preds = d.join("preds.csv");
    run_ok(&[&["predict"][..], &data, &["--bundle", s(&bundle), "--out", s(&preds), "--partition", "test"]].concat());
    assert_eq!(std::fs::read(&preds).unwrap(), std::fs::read(d.join("eval/predictions.csv")).unwrap());

    for column in ["binary", "group", "subtype"] {
        let fused = d.join(format!("fused_{column}.csv"));
        let o = run_ok(&["fuse", "--predictions", s(&preds), "--out", s(&fused), "--column", column]);
        assert!(stdout(&o).starts_with("subjects="), "{}", stdout(&o));
        let body = std::fs::read_to_string(&fused).unwrap();
        assert!(body.lines().any(|l| l == "speaker_id,n_recordings,fused_label,true_label"));
    }
}
