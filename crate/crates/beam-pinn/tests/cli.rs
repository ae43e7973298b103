//! Black-box tests of the command-line binary: artifact layout, exit codes,
//! and rerun determinism.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_beam-pinn"))
}

fn tiny_train_args(out: &Path) -> Vec<String> {
    vec![
        "train".into(),
        "--harmonics".into(),
        "2".into(),
        "--points".into(),
        "30,15,5".into(),
        "--grid".into(),
        "11x11".into(),
        "--config".into(),
        write_tiny_config(out).display().to_string(),
        "--out".into(),
        out.display().to_string(),
    ]
}

/// Short two-phase schedule so the binary runs in seconds.
fn write_tiny_config(dir: &Path) -> std::path::PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let path = dir.join("train_config.json");
    let cfg = serde_json::json!({
        "phase1": {
            "max_epochs": 3,
            "lr": 0.01,
            "clip_norm": 1.0,
            "plateau_patience": 200,
            "batch_size": null,
            "scheduler": { "factor": 0.5, "patience": 100, "min_lr": 1e-5, "threshold": 1e-4 }
        },
        "phase2": { "enabled": true, "max_iters": 3, "grad_tol": 1e-9, "memory": 20 },
        "lambda_reg": 0.0,
        "seed": 0
    });
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn train_writes_expected_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let status = bin().args(tiny_train_args(&out)).status().unwrap();
    assert!(status.success());
    for f in ["config.json", "checkpoint.json", "history.csv", "metrics.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let hist = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert!(hist.starts_with("phase,step,lr,"));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["l2_rel"].as_f64().unwrap().is_finite());
    let config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(config["command"], "train");
    assert_eq!(config["seed"], 42);
}

#[test]
fn train_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(bin().args(tiny_train_args(&a)).status().unwrap().success());
    assert!(bin().args(tiny_train_args(&b)).status().unwrap().success());
    let ca = std::fs::read(a.join("checkpoint.json")).unwrap();
    let cb = std::fs::read(b.join("checkpoint.json")).unwrap();
    assert_eq!(ca, cb, "checkpoints differ between identical runs");
    let ma = std::fs::read(a.join("metrics.json")).unwrap();
    let mb = std::fs::read(b.join("metrics.json")).unwrap();
    assert_eq!(ma, mb);
}

#[test]
fn invalid_harmonics_fails_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bad");
    let output = bin()
        .args([
            "train",
            "--harmonics",
            "0",
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(!out.join("checkpoint.json").exists());
    assert!(!out.join("metrics.json").exists());
}

#[test]
fn eval_round_trips_and_rejects_geometry_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(bin().args(tiny_train_args(&out)).status().unwrap().success());

    let eval_out = dir.path().join("eval");
    let status = bin()
        .args([
            "eval",
            "--checkpoint",
            out.join("checkpoint.json").to_str().unwrap(),
            "--grid",
            "11x11",
            "--out",
            eval_out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let errors = std::fs::read_to_string(eval_out.join("errors.csv")).unwrap();
    assert!(errors.starts_with("t,x,w_pred,w_exact,abs_err"));
    assert_eq!(errors.lines().count(), 1 + 11 * 11);

    // a problem with different geometry must be rejected
    let problem_path = dir.path().join("other.json");
    std::fs::write(
        &problem_path,
        r#"{"L": 5.0, "T": 1.0, "c": 1.0, "ic_disp": [1.0], "ic_vel": []}"#,
    )
    .unwrap();
    let output = bin()
        .args([
            "eval",
            "--checkpoint",
            out.join("checkpoint.json").to_str().unwrap(),
            "--problem",
            problem_path.to_str().unwrap(),
            "--out",
            dir.path().join("eval2").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("does not match"), "stderr: {stderr}");
}

#[test]
fn sweep_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let cfg = write_tiny_config(&out);
    let status = bin()
        .args([
            "sweep",
            "--harmonics-list",
            "10",
            "--points",
            "30,15,5",
            "--grid",
            "11x11",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let row = csv.lines().nth(1).unwrap();
    assert!(row.starts_with("10,"));
    assert!(row.ends_with("1.94e-7"), "reference column missing: {row}");
    assert!(out.join("checkpoint_n10.json").exists());
}

#[test]
fn check_command_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("check");
    let output = bin()
        .args(["check", "--eps", "1e-5", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(output.status.success(), "stdout: {stdout}");
    assert!(stdout.contains("PASS jet"));
    assert!(stdout.contains("PASS gradient"));
    assert!(stdout.contains("PASS residual"));
    assert!(stdout.contains("PASS lhs"));
    assert!(stdout.contains("PASS replay"));
    assert!(stdout.contains("PASS boundary"));
    assert!(!stdout.contains("FAIL"));

    // out-of-range eps must be rejected
    let output = bin()
        .args(["check", "--eps", "1e-2", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!output.status.success());
}
