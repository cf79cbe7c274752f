//! End-to-end checks of the command-line interface.

use std::process::Command;

fn branchwalk() -> Command {
    Command::new(env!("CARGO_BIN_EXE_branchwalk"))
}

#[test]
fn walk_subcommand_estimates_a_single_step_event() {
    // P(S_1 >= 0) for the default law is the Pareto mass 0.25
    let out = branchwalk()
        .args([
            "walk",
            "--kind",
            "stays-above",
            "--n",
            "1",
            "--a",
            "0",
            "--reps",
            "50000",
            "--seed",
            "7",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let est: f64 = text
        .split(':')
        .nth(1)
        .and_then(|tail| tail.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((est - 0.25).abs() < 0.01, "estimate {est} from {text}");
}

#[test]
fn walk_rejects_unknown_kinds() {
    let out = branchwalk()
        .args(["walk", "--kind", "nonsense"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn simulate_writes_the_documented_csv_schema() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("runs.csv");
    let out = branchwalk()
        .args([
            "simulate",
            "--n-max",
            "4",
            "--replicas",
            "10",
            "--seed",
            "3",
            "--out",
            path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "n,M_n,W_n,W_n_beta,D_n,population,truncated_count,replica,seed"
    );
    assert!(text.lines().count() > 10);
}

#[test]
fn spine_emits_json_with_positions_and_broods() {
    let out = branchwalk()
        .args(["spine", "--n", "8", "--seed", "5"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["positions"].as_array().unwrap().len(), 9);
    assert_eq!(json["steps"].as_array().unwrap().len(), 8);
}

#[test]
fn experiment_and_verdict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("results");
    let run = branchwalk()
        .args([
            "experiment",
            "check-conditions",
            "--replicas",
            "30000",
            "--seed",
            "11",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let table = String::from_utf8_lossy(&run.stdout);
    assert!(table.contains("[PASS]"), "table: {table}");

    let verdict = branchwalk()
        .args(["verdict", out_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(verdict.status.success());
    let verdict_text = String::from_utf8_lossy(&verdict.stdout);
    // every verdict line of the original table is reproduced from the files
    for line in table.lines().filter(|l| l.trim_start().starts_with('[')) {
        assert!(
            verdict_text.contains(line.trim()),
            "line '{line}' missing from recomputed verdict:\n{verdict_text}"
        );
    }
}

#[test]
fn experiment_refuses_over_budget_configs() {
    let out = branchwalk()
        .args(["experiment", "lemma21", "--budget", "5"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cost guard"), "stderr: {err}");
}

#[test]
fn unknown_preset_is_an_error() {
    let out = branchwalk()
        .args(["experiment", "lemma99"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
