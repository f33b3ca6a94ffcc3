use std::path::Path;
use std::process::{Command, Output};

fn cpfm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpfm"))
        .args(args)
        .current_dir(dir)
        .env_remove("CPFM_THREADS")
        .output()
        .expect("spawn cpfm")
}

fn cpfm_threads(args: &[&str], dir: &Path, threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpfm"))
        .args(args)
        .current_dir(dir)
        .env("CPFM_THREADS", threads)
        .output()
        .expect("spawn cpfm")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const SMALL: &str = r#"{"epochs": 2, "hidden": [16, 16], "eval_runs": 2, "delta": 0.005, "seed": 4}"#;

fn setup(n: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(&cpfm(&["synth", "--n", &n.to_string(), "--seed", "1", "--out", "d.csv"], dir.path()));
    std::fs::write(dir.path().join("c.json"), SMALL).unwrap();
    dir
}

fn read(dir: &Path, rel: &str) -> Vec<u8> {
    std::fs::read(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

#[test]
fn pipeline_writes_every_stage() {
    let dir = setup(48);
    let d = dir.path();
    ok(&cpfm(&["pipeline", "--config", "c.json", "--data", "d.csv", "--out", "run"], d));
    for f in [
        "gram.csv",
        "factor/phi.csv",
        "factor/weights.csv",
        "factor/factor.json",
        "gwot/plan.csv",
        "gwot/trace.csv",
        "gwot/summary.json",
        "gwot/embeddings.csv",
        "gwot/subset.csv",
        "model.ckpt",
        "train_log.csv",
        "eval.json",
    ] {
        assert!(d.join("run").join(f).exists(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&read(d, "run/gwot/summary.json")).unwrap();
    assert_eq!(summary["n"], 48);
    assert!(summary["final_epsilon"].as_f64().unwrap() > 0.0);
    let eval: serde_json::Value = serde_json::from_slice(&read(d, "run/eval.json")).unwrap();
    let reports = eval.as_array().unwrap();
    assert_eq!(reports.len(), 2);
    for r in reports {
        assert_eq!(r["R"], 2);
        assert!(r["mean"].as_f64().unwrap().is_finite());
        assert!(r["std"].as_f64().unwrap() >= 0.0);
        assert_eq!(r["config"]["seed"], 4);
    }
    let log = String::from_utf8(read(d, "run/train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,mean_loss_x,mean_loss_y,wall_seconds"));
    assert_eq!(log.lines().count(), 3);
}

#[test]
fn seeded_runs_are_byte_identical() {
    let dir = setup(40);
    let d = dir.path();
    ok(&cpfm(&["pipeline", "--config", "c.json", "--data", "d.csv", "--out", "a"], d));
    ok(&cpfm_threads(&["pipeline", "--config", "c.json", "--data", "d.csv", "--out", "b"], d, "1"));
    for f in ["gwot/plan.csv", "gwot/embeddings.csv", "model.ckpt", "train_log.csv", "eval.json"] {
        assert_eq!(read(d, &format!("a/{f}")), read(d, &format!("b/{f}")), "{f}");
    }
}

#[test]
fn rerun_from_a_later_stage_reuses_outputs() {
    let dir = setup(32);
    let d = dir.path();
    ok(&cpfm(&["pipeline", "--config", "c.json", "--data", "d.csv", "--out", "run"], d));
    let plan = read(d, "run/gwot/plan.csv");
    std::fs::remove_file(d.join("run/gram.csv")).unwrap();
    ok(&cpfm(&["pipeline", "--config", "c.json", "--data", "d.csv", "--out", "run", "--from", "train"], d));
    assert_eq!(read(d, "run/gwot/plan.csv"), plan);
    assert!(!d.join("run/gram.csv").exists());
}

#[test]
fn stage_commands_chain() {
    let dir = setup(30);
    let d = dir.path();
    ok(&cpfm(&["kernel", "--data", "d.csv", "--kernel", "image", "--out", "g.csv"], d));
    ok(&cpfm(&["factor", "--gram", "g.csv", "--eta", "0.9", "--out", "fac"], d));
    let header: serde_json::Value = serde_json::from_slice(&read(d, "fac/factor.json")).unwrap();
    assert_eq!(header["n"], 30);
    assert_eq!(header["eta"], 0.9);
    ok(&cpfm(
        &["gwot", "--data", "d.csv", "--factor", "fac", "--target", "circle", "--dim", "2", "--seed", "3", "--fixed-epsilon", "0.05", "--out", "gw"],
        d,
    ));
    let emb = String::from_utf8(read(d, "gw/embeddings.csv")).unwrap();
    for line in emb.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((v[0].hypot(v[1]) - 1.0).abs() < 1e-12);
    }
    ok(&cpfm(&["train", "--data", "d.csv", "--gwot", "gw", "--config", "c.json", "--out", "m.ckpt"], d));
    assert!(d.join("m.log.csv").exists());
    ok(&cpfm(&["embed", "--model", "m.ckpt", "--data", "d.csv", "--steps", "10", "--out", "y.csv"], d));
    ok(&cpfm(&["reconstruct", "--model", "m.ckpt", "--embeddings", "y.csv", "--steps", "10", "--out", "x.csv"], d));
    ok(&cpfm(&["grid", "--model", "m.ckpt", "--k", "3", "--lo", "-1", "--hi", "1", "--out", "grid.csv"], d));
    let rows = |f: &str| String::from_utf8(read(d, f)).unwrap().lines().count() - 1;
    assert_eq!(rows("y.csv"), 30);
    assert_eq!(rows("x.csv"), 30);
    assert_eq!(rows("grid.csv"), 9);
    let x = String::from_utf8(read(d, "x.csv")).unwrap();
    assert_eq!(x.lines().next().unwrap().split(',').count(), 10);
    let out = cpfm(&["eval", "--model", "m.ckpt", "--data", "d.csv", "--runs", "1", "--out", "e.json"], d);
    ok(&out);
    let report: serde_json::Value = serde_json::from_slice(&read(d, "e.json")).unwrap();
    assert_eq!(report["metric"], "wasserstein_gaussian");
    assert!(report["std"].is_null());
}

#[test]
fn molecule_pipeline_uses_clipped_factor() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&cpfm(&["synth", "--kind", "fingerprints", "--n", "24", "--bits", "16", "--out", "fp.csv"], d));
    std::fs::write(d.join("m.json"), r#"{"kernel": "molecule", "epochs": 1, "hidden": [8], "eval_runs": 2}"#).unwrap();
    let out = cpfm(&["pipeline", "--config", "m.json", "--data", "fp.csv", "--out", "run"], d);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("clipped_mass"));
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = setup(20);
    let d = dir.path();
    std::fs::write(d.join("bad.json"), r#"{"alpha": 1.2}"#).unwrap();
    let out = cpfm(&["gwot", "--data", "d.csv", "--config", "bad.json", "--out", "g"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));

    std::fs::write(d.join("nolabel.csv"), "f0,f1\n0,1\n1,0\n2,2\n").unwrap();
    let out = cpfm(&["kernel", "--data", "nolabel.csv", "--kernel", "image", "--out", "g.csv"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("label"));

    std::fs::write(d.join("broken.csv"), "f0,label\n0.5,0\nnope,1\n").unwrap();
    let out = cpfm(&["kernel", "--data", "broken.csv", "--out", "g.csv"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    assert_eq!(cpfm(&["bogus"], d).status.code(), Some(1));
    assert_eq!(cpfm(&["kernel", "--data", "d.csv", "--kernel", "cosine", "--out", "g.csv"], d).status.code(), Some(1));
    assert_eq!(cpfm_threads(&["oracle", "run-all"], d, "zero").status.code(), Some(1));
    let out = cpfm(&["eval", "--metric", "fid", "--model", "m.ckpt", "--data", "d.csv"], d);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(cpfm(&["--help"], d).status.code(), Some(0));
}

#[test]
fn numerical_failures_exit_with_two() {
    let dir = setup(20);
    let out = cpfm(&["gwot", "--data", "d.csv", "--fixed-epsilon", "1e-7", "--out", "g"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("precision"));
}

#[test]
fn oracle_table_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = cpfm(&["oracle", "run-all", "--seed", "5"], dir.path());
    ok(&out);
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.lines().filter(|l| l.ends_with("pass")).count(), 3);
    assert!(!table.contains("FAIL"));
}
