//! End-to-end checks against the built binary: artifact layout, header
//! stamping, reproducibility and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dm-mppi"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary should spawn");
    assert!(
        out.status.success(),
        "command {args:?} failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

fn smoke_offline(dir: &Path) {
    run_ok(&[
        "offline",
        "--n",
        "2",
        "--k",
        "4",
        "--m",
        "8",
        "--calib-steps",
        "3",
        "--calib-k",
        "8",
        "--out",
        dir.to_str().unwrap(),
    ]);
}

#[test]
fn offline_smoke_writes_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    smoke_offline(tmp.path());

    let dataset = std::fs::read_to_string(tmp.path().join("dataset.csv")).unwrap();
    let lines = data_lines(&dataset);
    assert_eq!(lines[0], "instance,rollout,c_total,c_viol,c_mean,c_std,theta");
    assert_eq!(lines.len() - 1, 2 * 4, "n=2 instances of k=4 rollouts");
    assert!(dataset.contains("# k = 4"));
    assert!(dataset.contains("# m = 8"));

    assert!(tmp.path().join("model.bin").exists());
    assert!(tmp.path().join("model.bin.meta").exists());

    let log = std::fs::read_to_string(tmp.path().join("training_log.csv")).unwrap();
    assert_eq!(data_lines(&log)[0], "epoch,train_loss,val_loss");
    assert_eq!(data_lines(&log).len() - 1, 1000, "one row per epoch");

    let report = std::fs::read_to_string(tmp.path().join("report.txt")).unwrap();
    assert!(report.contains("dataset rows"));
}

#[test]
fn offline_same_seed_gives_identical_artifacts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    smoke_offline(a.path());
    smoke_offline(b.path());
    for name in ["dataset.csv", "model.bin", "training_log.csv", "report.txt"] {
        let fa = std::fs::read(a.path().join(name)).unwrap();
        let fb = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(fa, fb, "{name} should be byte-identical across reruns");
    }
}

#[test]
fn run_standard_writes_trajectories_and_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = tmp.path().join("demo.scn");
    std::fs::write(&scenario, "k = 8\nsteps = 99\n").unwrap();
    run_ok(&[
        "run",
        "--mode",
        "standard",
        "--scenario",
        scenario.to_str().unwrap(),
        "--set",
        "steps=5",
        "--seeds",
        "0,1",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);

    let traj = std::fs::read_to_string(tmp.path().join("trajectory_standard_k8_seed0.csv")).unwrap();
    let lines = data_lines(&traj);
    assert_eq!(lines[0], "t,px,py,psi,v,delta,a");
    assert_eq!(lines.len() - 1, 5, "one row per control step");
    assert!(traj.contains("# k = 8"), "scenario file value survives");
    assert!(traj.contains("# steps = 5"), "--set overrides the scenario file");
    assert!(traj.contains("# seed = 0"));

    let diag = std::fs::read_to_string(tmp.path().join("diagnostics_standard_k8_seed1.csv")).unwrap();
    assert_eq!(data_lines(&diag)[0], "step,rho,r_viol,kept,k_eff,ms");
    assert_eq!(data_lines(&diag).len() - 1, 5);

    let metrics = std::fs::read_to_string(tmp.path().join("metrics_standard_k8.csv")).unwrap();
    assert_eq!(data_lines(&metrics).len() - 1, 2, "one row per seed");
    let summary = std::fs::read_to_string(tmp.path().join("summary_standard_k8.txt")).unwrap();
    assert!(summary.contains("pos_rmse"));
    assert!(summary.contains("\u{00b1}"));
}

#[test]
fn zero_step_run_writes_header_only_files() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(&[
        "run",
        "--k",
        "8",
        "--steps",
        "0",
        "--seeds",
        "0",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    let traj = std::fs::read_to_string(tmp.path().join("trajectory_standard_k8_seed0.csv")).unwrap();
    assert_eq!(data_lines(&traj), vec!["t,px,py,psi,v,delta,a"]);
    assert!(!tmp.path().join("metrics_standard_k8.csv").exists());
}

#[test]
fn dm_mode_without_model_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--mode", "dm-fixed", "--steps", "2", "--seeds", "0"])
        .args(["--out", tmp.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--model"), "stderr was: {stderr}");
}

#[test]
fn unknown_scenario_key_is_a_named_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--set", "warp_factor=9"])
        .args(["--out", tmp.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warp_factor"));
}

#[test]
fn sweep_smoke_grid_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    smoke_offline(tmp.path());
    let model = tmp.path().join("model.bin");

    let sweep = |dir: &Path| {
        run_ok(&[
            "sweep",
            "--k-grid",
            "10,20",
            "--modes",
            "standard,dm-fixed",
            "--seeds",
            "0,1",
            "--steps",
            "4",
            "--model",
            model.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
        ]);
    };
    let a = tempfile::tempdir().unwrap();
    sweep(a.path());

    let csv = std::fs::read_to_string(a.path().join("sweep.csv")).unwrap();
    let lines = data_lines(&csv);
    assert_eq!(lines[0], "k,mode,seed,pos_rmse,heading_rmse,min_clearance,mean_r_viol,mean_iter_ms");
    assert_eq!(lines.len() - 1, 2 * 2 * 2, "|grid| x |modes| x |seeds|");
    assert!(csv.contains("\n10,standard,0,"));
    assert!(csv.contains("\n20,dm-fixed,1,"));

    let svg_a = std::fs::read_to_string(a.path().join("sweep.svg")).unwrap();
    assert!(svg_a.contains("<svg "));
    assert!(svg_a.contains("position RMSE"));

    // same inputs, new process: the plot bytes must not change
    let b = tempfile::tempdir().unwrap();
    sweep(b.path());
    let svg_b = std::fs::read_to_string(b.path().join("sweep.svg")).unwrap();
    assert_eq!(svg_a, svg_b);
}

#[test]
fn validate_passes_and_writes_its_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_ok(&["validate", "--out", tmp.path().to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[pass]"));
    assert!(!stdout.contains("[FAIL] mask"), "gated checks must pass");
    let report = std::fs::read_to_string(tmp.path().join("validation.txt")).unwrap();
    assert!(report.contains("subset-mask-independence"));
    assert!(report.contains("lasso-matches-normal-equations"));
    assert!(report.contains("checks passed"));
}
