use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gmm(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gmm"))
        .arg("--output-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("spawn gmm")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = gmm(out, args);
    assert!(
        o.status.success(),
        "gmm {args:?} failed:\n{}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

const DATASET: &[&str] = &[
    "gen-dataset",
    "--rig",
    "finger",
    "--count",
    "100",
    "--corpus",
    "200",
    "--clusters",
    "4",
    "--registrations",
    "20",
    "--components",
    "4",
];
const AE: &[&str] = &[
    "train-ae",
    "--epochs",
    "2",
    "--latent",
    "4",
    "--filters",
    "8,8",
    "--factors",
    "2,2",
    "--batch-size",
    "16",
];

#[test]
fn help_prints_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(dir.path(), &["train-ae", "--help"]);
    assert!(text.contains("[default: 200"), "{text}");
    assert!(text.contains("16,32,32,48"), "{text}");
    let text = ok(dir.path(), &["train-encoder", "--help"]);
    assert!(text.contains("[default: 130"), "{text}");
}

#[test]
fn full_workflow_on_toy_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, DATASET);
    assert!(out.join("dataset/manifest.json").is_file());
    assert_eq!(fs::read_dir(out.join("dataset/meshes")).unwrap().count(), 100);

    ok(out, AE);
    let csv = fs::read_to_string(out.join("ae_metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    let train_l1: Vec<f64> = csv
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(1) == Some("train"))
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(
        train_l1.last() < train_l1.first(),
        "train L1 did not fall: {train_l1:?}"
    );

    let decoder_before = fs::read(out.join("ae.gmm")).unwrap();
    ok(out, &["train-encoder", "--epochs", "2", "--hidden", "16"]);
    assert_eq!(
        fs::read(out.join("ae.gmm")).unwrap(),
        decoder_before,
        "decoder checkpoint changed"
    );
    assert!(out.join("encoder.gmm").is_file());

    let report = ok(
        out,
        &[
            "eval",
            "--encoder",
            out.join("encoder.gmm").to_str().unwrap(),
            "--latency-runs",
            "5",
        ],
    );
    let v: serde_json::Value = serde_json::from_str(report.trim()).unwrap();
    assert!(v["mesh_l1_mm"].as_f64().unwrap().is_finite());
    assert!(v["decoder_params"].as_u64().unwrap() > 0);
    assert!(out.join("eval.csv").is_file());

    let a = out.join("dataset/meshes/000001.obj");
    let b = out.join("dataset/meshes/000002.obj");
    ok(
        out,
        &["interpolate", "--a", a.to_str().unwrap(), "--b", b.to_str().unwrap()],
    );
    ok(out, &["reconstruct", "--input", a.to_str().unwrap()]);
    assert_eq!(
        fs::read(out.join("interp_00.obj")).unwrap(),
        fs::read(out.join("reconstruction.obj")).unwrap(),
        "interpolation endpoint differs from a direct reconstruction"
    );
    assert!(out.join("interp_10.obj").is_file());

    ok(out, &["sample", "--count", "3"]);
    assert!(out.join("sample_002.obj").is_file());

    ok(
        out,
        &[
            "pose-study",
            "--epochs",
            "1",
            "--latent",
            "4",
            "--filters",
            "8,8",
            "--factors",
            "2,2",
        ],
    );
    let study = fs::read_to_string(out.join("pose_study.csv")).unwrap();
    assert_eq!(study.lines().count(), 3);
}

#[test]
fn identical_seeds_give_identical_files() {
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            ok(dir.path(), DATASET);
            ok(dir.path(), AE);
            dir
        })
        .collect();
    for f in [
        "dataset/manifest.json",
        "dataset/meshes/000042.obj",
        "ae.gmm",
        "ae_metrics.csv",
    ] {
        assert_eq!(
            fs::read(runs[0].path().join(f)).unwrap(),
            fs::read(runs[1].path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn missing_decoder_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let o = gmm(dir.path(), &["train-encoder", "--decoder", "/nonexistent/ae.gmm"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("/nonexistent/ae.gmm"), "{err}");
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = out.join("cfg.json");
    fs::write(
        &cfg,
        r#"{"gen-dataset": {"count": 30, "rig": "finger", "corpus": 50, "clusters": 2, "registrations": 10}}"#,
    )
    .unwrap();
    ok(
        out,
        &["--config", cfg.to_str().unwrap(), "gen-dataset", "--count", "20"],
    );
    assert_eq!(fs::read_dir(out.join("dataset/meshes")).unwrap().count(), 20);

    fs::write(&cfg, r#"{"gen-dataset": {"bogus": 1}}"#).unwrap();
    let o = gmm(out, &["--config", cfg.to_str().unwrap(), "gen-dataset"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}
