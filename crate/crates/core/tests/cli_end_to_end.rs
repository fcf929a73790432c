use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::json;

fn mmsb(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mmsb"))
        .args(args)
        .env_remove("MMSB_THREADS")
        .output()
        .expect("binary runs");
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    (out.status.code().unwrap_or(-1), stderr)
}

fn ok(args: &[&str]) {
    let (code, err) = mmsb(args);
    assert_eq!(code, 0, "mmsb {args:?} failed: {err}");
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth_config(dir: &Path, d: usize, seed: u64) -> PathBuf {
    let means: Vec<Vec<f64>> = (0..3).map(|c| (0..d).map(|k| (c + k) as f64).collect()).collect();
    let cfg = json!({
        "spec": {
            "n": 30, "d": d, "n_c": 3,
            "cycle_mean_durations": [0.1, 0.12, 0.1],
            "cycle_jitter_std": 0.005,
            "regime_means": means,
            "regime_noise_std": vec![0.3; d],
            "sample_period": 0.002,
            "seed": seed,
            "shifts": [{"cycle": 2, "at_fraction": 0.5, "offset": vec![1.5; d]}]
        },
        "reference_path": {"x_min": 0, "x_max": 10, "num_points": 20, "variance": 4, "length_scale": 2, "seed": 3}
    });
    let path = dir.join(format!("synth_d{d}_{seed}.json"));
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

/// Runs the whole chain under `root` and returns the directory.
fn pipeline(root: &Path) -> PathBuf {
    let cfg = synth_config(root, 3, 11);
    let (data, held, snaps, held_snaps) = (root.join("data"), root.join("held"), root.join("snaps"), root.join("held_snaps"));
    let (sol, pred, eval) = (root.join("sol"), root.join("pred"), root.join("eval"));
    ok(&["synth", "--config", p(&cfg), "--out", p(&data)]);
    ok(&["synth", "--config", p(&cfg), "--out", p(&held), "--seed", "12"]);
    ok(&["snapshot", "--input", p(&data), "--out", p(&snaps), "--s-int", "2"]);
    ok(&["snapshot", "--input", p(&held), "--out", p(&held_snaps), "--s-int", "2", "--query-cycles", "1,2,3"]);
    ok(&["solve", "--snapshots", p(&snaps), "--out", p(&sol), "--eps", "0.1", "--tol", "1e-8"]);
    ok(&["predict", "--solution", p(&sol), "--query-cycle", "2", "--out", p(&pred)]);
    ok(&["evaluate", "--solution", p(&sol), "--held-out", p(&held_snaps), "--out", p(&eval), "--emit-plan"]);
    root.to_path_buf()
}

fn csv_files(dir: &Path, out: &mut Vec<PathBuf>) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            csv_files(&path, out);
        } else if path.extension().is_some_and(|e| e == "csv") {
            out.push(path);
        }
    }
    out.sort();
}

#[test]
fn full_pipeline_writes_expected_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let root = pipeline(tmp.path());
    assert!(root.join("data/profiles/p00000.csv").is_file());
    assert!(root.join("data/cycles.csv").is_file());
    assert!(root.join("data/phys.csv").is_file());
    // s = 1 + n_c (s_int + 1) = 10 snapshots.
    assert!(root.join("snaps/snapshot_010.csv").is_file());
    assert!(!root.join("snaps/snapshot_011.csv").exists());
    assert!(root.join("sol/u_010.csv").is_file());
    assert!(root.join("sol/diagnostics.csv").is_file());
    for q in 1..=3 {
        let text = fs::read_to_string(root.join(format!("pred/q{q}/prediction.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "xi_1,xi_2,xi_3,weight");
        assert_eq!(lines.count(), 900);
        assert!(root.join(format!("pred/q{q}/prediction_meta.json")).is_file());
    }
    let report = fs::read_to_string(root.join("eval/report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next().unwrap(), "tau,sigma,lambda,wasserstein_distance");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r[3] >= 0.0 && r[3].is_finite()));
    assert!(root.join("eval/plan_q1.csv").is_file());
    assert!(root.join("eval/report_table.txt").is_file());
    let solution: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("sol/solution.json")).unwrap()).unwrap();
    assert_eq!(solution["converged"], json!(true));
}

#[test]
fn identical_seeds_give_identical_data_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    let (mut fa, mut fb) = (Vec::new(), Vec::new());
    csv_files(a.path(), &mut fa);
    csv_files(b.path(), &mut fb);
    assert_eq!(fa.len(), fb.len());
    assert!(fa.len() > 100);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.strip_prefix(a.path()).unwrap(), y.strip_prefix(b.path()).unwrap());
        assert!(fs::read(x).unwrap() == fs::read(y).unwrap(), "{} differs", x.display());
    }
}

#[test]
fn usage_and_validation_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let cfg = synth_config(root, 3, 1);
    let data = root.join("data");
    ok(&["synth", "--config", p(&cfg), "--out", p(&data)]);

    // Unknown flag.
    assert_eq!(mmsb(&["solve", "--bogus"]).0, 2);
    // Window narrower than half the sample period.
    let (code, err) = mmsb(&["snapshot", "--input", p(&data), "--out", p(&root.join("s0")), "--window", "0.0001"]);
    assert_eq!(code, 2, "{err}");

    let snaps = root.join("snaps");
    ok(&["snapshot", "--input", p(&data), "--out", p(&snaps), "--s-int", "1"]);
    // Nonpositive regularization.
    assert_eq!(mmsb(&["solve", "--snapshots", p(&snaps), "--out", p(&root.join("x")), "--eps", "0"]).0, 2);

    let sol = root.join("sol");
    ok(&["solve", "--snapshots", p(&snaps), "--out", p(&sol)]);

    // Unknown context id in the library.
    let manifest = root.join("library.json");
    let entries = json!([{"id": "ctx-a", "cyber": [15, 15], "phys_file": "data/phys.csv", "archive_dir": "snaps", "solution_dir": "sol"}]);
    fs::write(&manifest, entries.to_string()).unwrap();
    let pred = root.join("pred");
    let (code, _) = mmsb(&["predict", "--library", p(&manifest), "--context-id", "nope", "--tau", "0.1", "--out", p(&pred)]);
    assert_eq!(code, 2);
    ok(&["predict", "--library", p(&manifest), "--context-id", "ctx-a", "--tau", "0.1", "--out", p(&pred)]);
    ok(&[
        "predict", "--library", p(&manifest), "--context-cyber", "14,16", "--context-phys", p(&data.join("phys.csv")),
        "--tau", "0.1", "--out", p(&pred),
    ]);
    // Query beyond the last snapshot.
    assert_eq!(mmsb(&["predict", "--solution", p(&sol), "--tau", "99", "--out", p(&pred)]).0, 2);

    // Held-out data of another dimension.
    let cfg2 = synth_config(root, 2, 5);
    let data2 = root.join("data2");
    let held2 = root.join("held2");
    ok(&["synth", "--config", p(&cfg2), "--out", p(&data2)]);
    ok(&["snapshot", "--input", p(&data2), "--out", p(&held2), "--s-int", "1", "--query-cycles", "1"]);
    let (code, err) = mmsb(&["evaluate", "--solution", p(&sol), "--held-out", p(&held2), "--out", p(&root.join("e"))]);
    assert_eq!(code, 2, "{err}");

    // Query time without a measured snapshot.
    let held = root.join("held");
    ok(&["snapshot", "--input", p(&data), "--out", p(&held), "--s-int", "1", "--query-cycles", "1"]);
    let (code, _) =
        mmsb(&["evaluate", "--solution", p(&sol), "--held-out", p(&held), "--tau", "0.2345", "--out", p(&root.join("e"))]);
    assert_eq!(code, 2);
}

#[test]
fn non_convergence_exits_with_one_and_keeps_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let cfg = synth_config(root, 3, 2);
    let (data, snaps, sol) = (root.join("data"), root.join("snaps"), root.join("sol"));
    ok(&["synth", "--config", p(&cfg), "--out", p(&data)]);
    ok(&["snapshot", "--input", p(&data), "--out", p(&snaps), "--s-int", "1"]);
    let (code, _) = mmsb(&["solve", "--snapshots", p(&snaps), "--out", p(&sol), "--max-iterations", "2"]);
    assert_eq!(code, 1);
    assert!(sol.join("diagnostics.csv").is_file());
    // Predicting from an unconverged archive is a state error.
    assert_eq!(mmsb(&["predict", "--solution", p(&sol), "--tau", "0.1", "--out", p(&root.join("p"))]).0, 2);
}
