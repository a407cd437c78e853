use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use stokes_recon::synthetic;
use stokes_recon::validation;
use stokes_recon::ExampleId;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stokes-recon"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn status(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn forward_writes_one_snapshot_per_time_node() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested").join("fwd");
    let o = run(&["forward", "--example", "1", "--out", path(&out)]);
    assert_eq!(status(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let snapshots = fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("snapshot_"))
        .count();
    // dt = 0.07 on [0, 1]: nodes 0..=14.
    assert_eq!(snapshots, 15);
    for f in ["config.toml", "mesh.vtk", "norms.csv", "observations.bin", "observations.json", "summary.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let norms = fs::read_to_string(out.join("norms.csv")).unwrap();
    assert_eq!(norms.lines().next(), Some("t,l2_u,l2_p"));
    assert_eq!(norms.lines().count(), 16);
    let vtk = fs::read_to_string(out.join("snapshot_0003.vtk")).unwrap();
    assert!(vtk.starts_with("# vtk DataFile Version 3.0\n"));
    assert!(vtk.contains("VECTORS velocity double") && vtk.contains("SCALARS pressure double 1"));
}

#[test]
fn zero_source_gives_zero_norms() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["forward", "--zero-source", "--h", "0.3", "--out", path(dir.path())]);
    assert_eq!(status(&o), 0);
    let norms = fs::read_to_string(dir.path().join("norms.csv")).unwrap();
    for line in norms.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(&cols[1..], &[0.0, 0.0]);
    }
    assert_eq!(json(&dir.path().join("observations.json"))["example_id"], serde_json::Value::Null);
}

#[test]
fn config_echo_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let o = run(&["reconstruct", "--h", "0.3", "--k-max", "3", "--c", "0.02", "--seed", "5", "--out", path(&first)]);
    assert_eq!(status(&o), 0);
    let echo = first.join("config.toml");
    let text = fs::read_to_string(&echo).unwrap();
    assert!(text.contains("c = 0.02") && text.contains("seed = 5"));
    let second = dir.path().join("b");
    let o = run(&["reconstruct", "--config", path(&echo), "--out", path(&second)]);
    assert_eq!(status(&o), 0);
    assert_eq!(
        fs::read_to_string(first.join("err_history.csv")).unwrap(),
        fs::read_to_string(second.join("err_history.csv")).unwrap()
    );
}

#[test]
fn stored_observations_reproduce_inline_reconstruction() {
    let dir = tempfile::tempdir().unwrap();
    let fwd = dir.path().join("fwd");
    assert_eq!(status(&run(&["forward", "--example", "2", "--h", "0.2", "--out", path(&fwd)])), 0);
    let a = dir.path().join("stored");
    let b = dir.path().join("inline");
    let obs = fwd.join("observations.bin");
    let o = run(&["reconstruct", "--h", "0.2", "--k-max", "5", "--force-k", "--observations", path(&obs), "--out", path(&a)]);
    assert_eq!(status(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(status(&run(&["reconstruct", "--example", "2", "--h", "0.2", "--k-max", "5", "--force-k", "--out", path(&b)])), 0);
    assert_eq!(fs::read(a.join("err_history.csv")).unwrap(), fs::read(b.join("err_history.csv")).unwrap());
    assert_eq!(fs::read(a.join("f_final.vtk")).unwrap(), fs::read(b.join("f_final.vtk")).unwrap());
    // A mesh mismatch is a configuration error.
    let o = run(&["reconstruct", "--h", "0.3", "--observations", path(&obs), "--out", path(&a)]);
    assert_eq!(status(&o), 2);
}

#[test]
fn reconstruct_summary_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["reconstruct", "--example", "3", "--k-max", "30", "--force-k", "--c", "0.01", "--out", path(dir.path())]);
    assert_eq!(status(&o), 0);
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(s["k"], 30);
    let cfg = synthetic::benchmark_config();
    let lib = validation::table_check(ExampleId::Cosine, 0.1, &cfg, validation::BENCHMARK_MODE, 1.0).unwrap();
    assert_eq!(s["final_err"].as_f64().unwrap(), lib.errors.last().unwrap().1);
    let hist = fs::read_to_string(dir.path().join("err_history.csv")).unwrap();
    assert_eq!(hist.lines().next(), Some("k,rel_change,err_vs_true,J_lambda"));
    assert_eq!(hist.lines().count(), 31);
}

#[test]
fn infinite_tau_stops_after_one_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["reconstruct", "--tau", "inf", "--h", "0.3", "--out", path(dir.path())]);
    assert_eq!(status(&o), 0);
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(s["k"], 1);
    assert_eq!(s["converged"], true);
}

#[test]
fn sweep_orders_first_updates_and_rejects_empty_lists() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["sweep", "--example", "3", "--h", "0.3", "--k-max", "3", "--c-values", "0.001,0.01,0.1", "--out", path(dir.path())]);
    assert_eq!(status(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = json(&dir.path().join("summary.json"));
    let norms: Vec<f64> = rows.as_array().unwrap().iter().map(|r| r["first_update_norm"].as_f64().unwrap()).collect();
    assert!(norms[0] > norms[1] && norms[1] > norms[2], "{norms:?}");
    assert!(fs::read_to_string(dir.path().join("sweep.csv")).unwrap().starts_with("c,final_err,k,first_update_norm,error"));

    let single = dir.path().join("single");
    assert_eq!(status(&run(&["sweep", "--example", "3", "--h", "0.3", "--k-max", "3", "--c-values", "0.01", "--out", path(&single)])), 0);
    let rec = dir.path().join("rec");
    assert_eq!(status(&run(&["reconstruct", "--example", "3", "--h", "0.3", "--k-max", "3", "--out", path(&rec)])), 0);
    assert_eq!(json(&single.join("summary.json"))[0]["final_err"], json(&rec.join("summary.json"))["final_err"]);

    let o = run(&["sweep", "--out", path(&dir.path().join("empty"))]);
    assert_eq!(status(&o), 2);
}

#[test]
fn validate_quick_passes_and_detects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["validate", "--quick", "--out", path(dir.path())]);
    assert_eq!(status(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
    let o = run(&["validate", "--quick", "--corrupt", "--out", path(dir.path())]);
    assert_eq!(status(&o), 4);
    let checks = json(&dir.path().join("validation.json"));
    assert_eq!(checks[0]["passed"], false);
}

#[test]
fn counterexample_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["counterexample", "--h", "0.2", "--dt", "0.05", "--out", path(dir.path())]);
    assert_eq!(status(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&dir.path().join("counterexample.json"));
    for kind in ["separated", "general"] {
        assert!(r[kind]["ratio"].as_f64().unwrap() < 0.1);
        assert_eq!(r[kind]["degenerate"], false);
    }
}

#[test]
fn exit_codes_for_bad_input_and_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path());
    assert_eq!(status(&run(&["forward", "--dt", "-1", "--out", out])), 2);
    assert_eq!(status(&run(&["forward", "--example", "9", "--out", out])), 2);
    assert_eq!(status(&run(&["reconstruct", "--observations", "/nonexistent/obs.bin", "--out", out])), 2);
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "viscosity = 2\n").unwrap();
    assert_eq!(status(&run(&["forward", "--config", path(&cfg), "--out", out])), 2);
    assert_eq!(status(&run(&["frobnicate"])), 2);
    // c + lambda ~ 0 blows the update up: reported as a solver failure.
    let o = run(&["reconstruct", "--h", "0.3", "--c", "1e-300", "--lambda", "0", "--force-k", "--out", out]);
    assert_eq!(status(&o), 3);
}
