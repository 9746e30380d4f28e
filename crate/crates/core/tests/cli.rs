use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use apportion::cli::{load_concentrations, read_matrix};
use apportion::estimator::{apportion, EstimatorConfig};
use apportion::evaluation::score;
use apportion::synthgen::{make_ground_truth, Process, RngSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_apportion"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn manifest_without_timestamp(dir: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("created_unix_seconds");
    v
}

fn declared_files_exist(dir: &Path) {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    for f in v["files"].as_array().unwrap() {
        assert!(dir.join(f.as_str().unwrap()).is_file(), "missing {f}");
    }
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--process", "ar1", "--n", "300", "--J", "8", "--K", "3", "--seed", "7", "--out", p(dir)];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn simulate_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate(&a, &[]);
    simulate(&b, &[]);
    for f in ["Y.csv", "W.csv", "H.csv", "mu.csv", "phi_true.csv", "phi_sample.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(manifest_without_timestamp(&a), manifest_without_timestamp(&b));
    declared_files_exist(&a);
}

#[test]
fn estimate_then_evaluate_matches_in_process_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (sim, est, ev) = (tmp.path().join("sim"), tmp.path().join("est"), tmp.path().join("ev"));
    simulate(&sim, &[]);
    ok(&["estimate", "--input", p(&sim.join("Y.csv")), "--K", "3", "--out", p(&est)]);
    ok(&[
        "evaluate",
        "--truth",
        p(&sim.join("phi_true.csv")),
        "--estimate",
        p(&est.join("phi_hat.csv")),
        "--out",
        p(&ev),
    ]);

    let (y, truth) = make_ground_truth(300, 8, 3, Process::Ar1, RngSpec::replicate(7, 0), Default::default()).unwrap();
    let in_process = apportion(&y, &EstimatorConfig::new(3)).unwrap();
    let s = score(truth.phi_true.values(), in_process.phi_hat.values()).unwrap();

    let text = fs::read_to_string(ev.join("metrics.csv")).unwrap();
    let fields: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let metrics: Vec<f64> = fields[..3].iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(metrics[0], s.nrmse);
    assert_eq!(metrics[1], s.nfd);
    assert_eq!(metrics[2], s.alignment.total_sq_distance);

    let (_, _, phi_file) = read_matrix(&est.join("phi_hat.csv"), false).unwrap();
    assert_eq!(&phi_file, in_process.phi_hat.values());
    let (_, _, h_file) = read_matrix(&est.join("h_star_hat.csv"), false).unwrap();
    assert_eq!(h_file, in_process.h_star_hat);
    for f in ["m_tilde.csv", "diagnostics.json", "hull_scatter.csv"] {
        assert!(est.join(f).is_file());
    }
}

#[test]
fn estimate_with_truth_aligns_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let (sim, est) = (tmp.path().join("sim"), tmp.path().join("est"));
    simulate(&sim, &["--plant-corners"]);
    ok(&[
        "estimate",
        "--input",
        p(&sim.join("Y.csv")),
        "--K",
        "3",
        "--truth",
        p(&sim.join("phi_sample.csv")),
        "--out",
        p(&est),
    ]);
    let (_, _, truth) = read_matrix(&sim.join("phi_sample.csv"), false).unwrap();
    let (_, _, phi) = read_matrix(&est.join("phi_hat.csv"), false).unwrap();
    let diff = (truth - phi).abs().max();
    assert!(diff <= 1e-8, "{diff}");
    let metrics = fs::read_to_string(est.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("nrmse,nfd,total_sq_distance,permutation\n"));
    let diag: serde_json::Value = serde_json::from_str(&fs::read_to_string(est.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["aligned_to_truth"], true);
    assert_eq!(diag["diagnostics"]["r_b"], 2);
}

#[test]
fn simulated_matrix_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), &[]);
    let y = load_concentrations(&tmp.path().join("Y.csv")).unwrap();
    let (expected, _) = make_ground_truth(300, 8, 3, Process::Ar1, RngSpec::replicate(7, 0), Default::default()).unwrap();
    for (a, b) in y.values().iter().zip(expected.values().iter()) {
        assert!((a - b).abs() <= 1e-12 * b.abs());
    }
    assert_eq!(y.pollutant_names(), expected.pollutant_names());
}

#[test]
fn convergence_study_writes_one_row_per_replicate() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("study");
    ok(&[
        "convergence-study",
        "--process",
        "ar1",
        "--J",
        "8",
        "--K",
        "3",
        "--n-grid",
        "100,300",
        "--replicates",
        "50",
        "--search",
        "greedy",
        "--seed",
        "1",
        "--out",
        p(&out),
    ]);
    let text = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "n,replicate,nrmse,nfd,runtime_seconds,search_used");
    assert_eq!(lines.count(), 100);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    declared_files_exist(&out);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["design"]["master_seed"], 1);
    assert_eq!(m["config"]["design"]["n_grid"], serde_json::json!([100, 300]));
}

#[test]
fn worker_count_does_not_change_study_output() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let base = ["convergence-study", "--n-grid", "100,200", "--replicates", "5", "--seed", "3"];
    let mut args_a = base.to_vec();
    args_a.extend(["--out", p(&a)]);
    let out = bin().args(&args_a).env("APPORTION_WORKERS", "1").output().unwrap();
    assert!(out.status.success());
    let mut args_b = base.to_vec();
    args_b.extend(["--workers", "4", "--out", p(&b)]);
    let out = bin().args(&args_b).env("APPORTION_WORKERS", "1").output().unwrap();
    assert!(out.status.success());
    let drop_runtime = |dir: &Path| -> Vec<String> {
        fs::read_to_string(dir.join("metrics.csv"))
            .unwrap()
            .lines()
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                [f[0], f[1], f[2], f[3], f[5]].join(",")
            })
            .collect()
    };
    assert_eq!(drop_runtime(&a), drop_runtime(&b));
    let ma = manifest_without_timestamp(&a);
    let mb = manifest_without_timestamp(&b);
    assert_eq!(ma["config"]["workers"], 1);
    assert_eq!(mb["config"]["workers"], 4);
    assert_eq!(ma["config"]["design"], mb["config"]["design"]);
}

#[test]
fn errors_exit_nonzero_with_one_category_line() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "a,b\n1,2\n3,-1\n").unwrap();
    let out = run(&["estimate", "--input", p(&bad), "--K", "1", "--out", p(&tmp.path().join("x"))]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("negative_value: "), "{err}");
    assert!(err.contains("line 3, column 2"));

    let out = run(&["estimate", "--input", p(&tmp.path().join("missing.csv")), "--K", "1", "--out", p(tmp.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("io_error: "));

    let flat = tmp.path().join("flat.csv");
    fs::write(&flat, "a,b,c\n1,1,1\n2,2,2\n3,3,3\n").unwrap();
    let out = run(&["estimate", "--input", p(&flat), "--K", "2", "--out", p(&tmp.path().join("y"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("degenerate_cloud: candidates: "));

    let out = run(&["simulate", "--n", "10", "--J", "3", "--K", "3", "--out", p(tmp.path())]);
    assert!(!out.status.success());

    let out = run(&["estimate", "--K", "2"]);
    assert!(!out.status.success());
}
