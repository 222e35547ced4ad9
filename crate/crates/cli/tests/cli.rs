use std::path::Path;
use std::process::{Command, Output};

fn leap(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leap"))
        .args(args)
        .current_dir(cwd)
        .env_remove("LEAP_OUT_DIR")
        .output()
        .expect("run leap")
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

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn staged_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&leap(&["gen", "--seed", "3", "--clients", "16", "--edges", "4", "--classes", "8", "--shards", "2", "--out", "s"], d));
    let scenario = json(&d.join("s/scenario.json"));
    assert_eq!(scenario["schema_version"], 1);
    assert_eq!(scenario["clients"].as_array().unwrap().len(), 16);

    ok(&leap(&["coalition", "--scenario", "s/scenario.json", "--seed", "1", "--out", "c", "--format", "csv"], d));
    let partition = json(&d.join("c/partition.json"));
    assert_eq!(partition["schema_version"], 1);
    let trace_rows = partition["game_trace"]["entries"].as_array().unwrap().len();
    let csv = std::fs::read_to_string(d.join("c/game_trace.csv")).unwrap();
    assert!(csv.starts_with("# schema_version: 1\niteration,client,from,to,avg_js\n"));
    assert_eq!(csv.lines().count(), trace_rows + 2);

    ok(&leap(
        &["allocate", "--scenario", "s/scenario.json", "--partition", "c/partition.json", "--out", "a", "--strict"],
        d,
    ));
    let plan = json(&d.join("a/plan.json"));
    assert_eq!(plan["plan"]["feasible"], true);

    ok(&leap(
        &["simulate", "--scenario", "s/scenario.json", "--partition", "c/partition.json", "--rounds", "2", "--out", "h", "--format", "csv"],
        d,
    ));
    let acc = std::fs::read_to_string(d.join("h/accuracy.csv")).unwrap();
    assert!(acc.starts_with("# schema_version: 1\nround,accuracy,avg_js\n"));
    assert_eq!(acc.lines().count(), 4);
}

#[test]
fn compare_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = leap(&["compare", "--clients", "12", "--edges", "3", "--seed", "5", "--methods", "leap,rb_rp", "--out", "r"], d);
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("rb_rp / leap transmission energy"));
    let report = json(&d.join("r/report.json"));
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["methods"].as_array().unwrap().len(), 2);
    assert_eq!(report["lambda1"], 1.0);

    let out = leap(&["report", "--input", "r/report.json", "--out", "p", "--format", "csv"], d);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("audit: largest relative deviation"));
    for name in ["game_trace.csv", "gp_trace.csv", "energy.csv"] {
        let text = std::fs::read_to_string(d.join("p").join(name)).unwrap();
        assert!(text.starts_with("# schema_version: 1\n"), "{name}");
    }
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for out in ["x", "y"] {
        ok(&leap(&["compare", "--clients", "10", "--edges", "2", "--seed", "9", "--out", out], d));
    }
    let x = std::fs::read(d.join("x/report.json")).unwrap();
    let y = std::fs::read(d.join("y/report.json")).unwrap();
    assert_eq!(x, y);
    ok(&leap(&["--sequential", "compare", "--clients", "10", "--edges", "2", "--seed", "9", "--out", "z"], d));
    assert_eq!(x, std::fs::read(d.join("z/report.json")).unwrap());
}

#[test]
fn env_var_sets_default_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_leap"))
        .args(["gen", "--clients", "6", "--edges", "2"])
        .current_dir(dir.path())
        .env("LEAP_OUT_DIR", "from-env")
        .output()
        .unwrap();
    ok(&out);
    assert!(dir.path().join("from-env/scenario.json").exists());
}

#[test]
fn strict_mode_fails_on_infeasible_plan() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = ["compare", "--clients", "10", "--edges", "2", "--deadline", "1", "--methods", "leap", "--out", "o"];
    ok(&leap(&args, d));
    let mut strict = args.to_vec();
    strict.push("--strict");
    let out = leap(&strict, d);
    assert_eq!(out.status.code(), Some(2));
    assert!(d.join("o/report.json").exists());
}

#[test]
fn bad_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = leap(&["gen", "--clients", "1", "--edges", "2"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = leap(&["compare", "--methods", "kmeans"], d);
    assert!(!out.status.success());
    let out = leap(&["gen", "--shards", "2", "--dirichlet", "0.5"], d);
    assert!(!out.status.success());
}
