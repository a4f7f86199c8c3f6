//! End-to-end runs of the `popflex` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn popflex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_popflex")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn corpus(file: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(file).display().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn validate_reports_exit_codes() {
    let ok = popflex(&["validate", "--task", &corpus("elevator.sas"), "--plan", &corpus("elevator.plan")]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("9 steps, cost 9"));

    // A well-formed plan that does not reach the goal.
    let dir = tempfile::tempdir().unwrap();
    let short = dir.path().join("short.plan");
    std::fs::write(&short, "(move_down e1 n3 n2)\n").unwrap();
    let invalid = popflex(&["validate", "--task", &corpus("elevator.sas"), "--plan", short.to_str().unwrap()]);
    assert_eq!(invalid.status.code(), Some(1));

    let unparsable = dir.path().join("bad.plan");
    std::fs::write(&unparsable, "(fly e1)\n").unwrap();
    let error = popflex(&["validate", "--task", &corpus("elevator.sas"), "--plan", unparsable.to_str().unwrap()]);
    assert_eq!(error.status.code(), Some(2));

    assert_eq!(popflex(&["validate"]).status.code(), Some(2));
    assert_eq!(popflex(&["validate", "--example", "nowhere"]).status.code(), Some(2));
}

#[test]
fn example_list_names_the_corpus() {
    let out = popflex(&["validate", "--example", "list"]);
    assert!(out.status.success());
    let names: Vec<String> = stdout(&out).lines().map(str::to_owned).collect();
    assert!(names.iter().any(|n| n == "elevator"));
    assert!(names.iter().any(|n| n == "inverse-pair"));
}

#[test]
fn flex_of_the_elevator_stages() {
    let eog = popflex(&["flex", "--example", "elevator"]);
    assert!(eog.status.success());
    assert!(stdout(&eog).starts_with("0.0 "));
    let bd = popflex(&["flex", "--example", "elevator", "--stage", "bd"]);
    assert!(stdout(&bd).starts_with("0.4444 (16/36"));
}

#[test]
fn fibs_writes_report_plan_and_dot() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let plan = dir.path().join("plan.json");
    let dot = dir.path().join("plan.dot");
    let out = popflex(&[
        "fibs",
        "--example",
        "elevator",
        "--reduce",
        "gj",
        "--report",
        report.to_str().unwrap(),
        "-o",
        plan.to_str().unwrap(),
        "--dot",
        dot.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let r = read_json(&report);
    let phases: Vec<(&str, f64)> = r["phases"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| (p["phase"].as_str().unwrap(), p["flex_after"].as_f64().unwrap()))
        .collect();
    assert_eq!(phases, [("EOG", 0.0), ("SD1", 0.0), ("BD", 0.4444), ("SD2", 0.5357), ("REDUCE", 0.5714)]);
    assert_eq!(r["final"]["cost"], 7);
    assert_eq!(r["final"]["unordered_pairs"], 12);
    assert!(r["phases"][0].get("elapsed_s").is_none());

    assert!(read_json(&plan)["blocks"].is_array());
    assert!(std::fs::read_to_string(&dot).unwrap().starts_with("digraph"));
}

#[test]
fn reports_are_reproducible_and_csv_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let out = popflex(&["fibs", "--example", "elevator", "--criteria", "rco", "--report", path.to_str().unwrap(), "-o", "/dev/null"]);
        assert!(out.status.success());
        std::fs::read_to_string(path).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    assert!(a.starts_with("phase,"));
    assert_eq!(a.lines().count(), 5);
    assert!(!a.contains("elapsed"));

    let timed = dir.path().join("t.json");
    popflex(&["fibs", "--example", "chain", "--timings", "--report", timed.to_str().unwrap(), "-o", "/dev/null"]);
    assert!(read_json(&timed)["phases"][0]["elapsed_s"].is_number());
}

#[test]
fn encode_mr_writes_wcnf_and_decodes_models() {
    let dir = tempfile::tempdir().unwrap();
    let wcnf = dir.path().join("chain.wcnf");
    let solved = dir.path().join("solved.json");
    let out = popflex(&["encode-mr", "--example", "chain", "-o", wcnf.to_str().unwrap(), "--solve", solved.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&wcnf).unwrap();
    assert!(text.lines().any(|l| l.starts_with("p wcnf ")));
    assert!(text.contains("x(init)"));
    let s = read_json(&solved);
    assert!(s["cost"].is_number());

    // The all-false assignment drops every step, which cannot support the goal.
    let model = dir.path().join("model.txt");
    std::fs::write(&model, "s OPTIMUM FOUND\nv 0\n").unwrap();
    let bad = popflex(&["encode-mr", "--example", "chain", "-o", "/dev/null", "--model", model.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn lineate_prints_a_valid_plan() {
    let dir = tempfile::tempdir().unwrap();
    let out = popflex(&["lineate", "--example", "elevator", "--stage", "bd", "--seed", "3"]);
    assert!(out.status.success());
    let plan = dir.path().join("lin.plan");
    std::fs::write(&plan, stdout(&out)).unwrap();
    let check = popflex(&["validate", "--task", &corpus("elevator.sas"), "--plan", plan.to_str().unwrap()]);
    assert_eq!(check.status.code(), Some(0));
}

#[test]
fn reduce_and_block_deorder_emit_json() {
    for args in [
        &["block-deorder", "--example", "elevator"][..],
        &["reduce", "--example", "inverse-pair", "--mode", "gj"][..],
        &["eog", "--example", "chain"][..],
    ] {
        let out = popflex(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(v.is_object(), "{args:?}");
    }
}
