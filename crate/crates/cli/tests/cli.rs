use std::path::Path;
use std::process::{Command, Output};

fn ratdeconv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ratdeconv")).args(args).output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn generate_then_solve_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = ratdeconv(&["generate", "-t", "8", "--filter", "a", "--seed", "3", "--out", d]);
    assert!(out.status.success());
    let inst = dir.path().join("instance.json");
    let inst = inst.to_str().unwrap();

    let relax = json(&ratdeconv(&["relax", "--instance", inst, "--order", "2"]));
    let r = &relax["relaxations"][0];
    assert_eq!(r["status"], "optimal");
    let bound = r["bound"].as_f64().unwrap();
    assert!(bound <= r["objective"].as_f64().unwrap() + 1e-6);

    for init in ["zero", "d", "l1", "truth"] {
        let iht = json(&ratdeconv(&["iht", "--instance", inst, "--init", init]));
        assert!(iht["objective"].as_f64().unwrap() >= bound - 1e-6);
    }
    let l1 = json(&ratdeconv(&["l1", "--instance", inst]));
    assert_eq!(l1["x"].as_array().unwrap().len(), 8);
}

#[test]
fn experiment_writes_reproducible_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let out = ratdeconv(&[
            "experiment", "-t", "6", "-n", "3", "--order", "2", "--seed", "5", "--out", dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        for f in ["report.csv", "timings.csv", "aggregate.json", "roc.csv", "trace/r0_k2.csv"] {
            assert!(dir.join(f).exists(), "{f}");
        }
    }
    let read = |p: &Path| std::fs::read(p.join("report.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_eq!(std::fs::read(a.path().join("roc.csv")).unwrap(), std::fs::read(b.path().join("roc.csv")).unwrap());

    let rep = ratdeconv(&["report", "--out", a.path().to_str().unwrap()]);
    assert!(rep.status.success());
    let text = String::from_utf8_lossy(&rep.stdout);
    assert!(text.contains("iht_init_relax") && text.contains("order 2"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(ratdeconv(&["generate", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(ratdeconv(&["generate", "--regime", "complex"]).status.code(), Some(2));
    assert_eq!(ratdeconv(&["generate", "--filter", "z"]).status.code(), Some(2));
    assert_eq!(ratdeconv(&["relax", "-t", "4", "--order", "0"]).status.code(), Some(2));
    assert_eq!(ratdeconv(&["experiment", "-n", "1"]).status.code(), Some(2));
    assert_eq!(ratdeconv(&["bogus"]).status.code(), Some(2));
}

#[test]
fn partial_config_file_is_merged_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{ "gen": { "T": 5, "regime": "real_valued" }, "orders": [2] }"#).unwrap();
    let inst = json(&ratdeconv(&["generate", "--config", cfg.to_str().unwrap()]));
    assert_eq!(inst["spec"]["T"], 5);
    assert_eq!(inst["spec"]["regime"], "real_valued");
}
