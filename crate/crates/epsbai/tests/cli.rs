use epsbai::cli::read_study_csv;
use epsbai::sim::read_results_csv;
use std::fs::{self, File};
use std::path::Path;
use std::process::{Command, Output};

fn epsbai(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epsbai"))
        .args(args)
        .env_remove("EPSBANDIT_WORKERS")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = epsbai(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn instance_run_summarize_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("hard.json");
    let csv = dir.path().join("results.csv");
    let cfg = dir.path().join("exp.json");
    ok(&[
        "instance",
        "--kind",
        "hard",
        "--d",
        "2",
        "--two-arm",
        "--out",
        s(&inst),
    ]);

    let ct: serde_json::Value =
        serde_json::from_str(&ok(&["chartime", "--instance", s(&inst)])).unwrap();
    assert!(
        (ct["t_eps"].as_f64().unwrap() - 28.055).abs() < 0.01,
        "{ct}"
    );
    assert_eq!(ct["n_points"], 500);

    let config = serde_json::json!({
        "instance": {"kind": "file", "path": s(&inst)},
        "sampler": {"kind": "fixed_oracle"},
        "candidate": "instant_furthest",
        "n_runs": 20,
        "output": s(&csv),
    });
    fs::write(&cfg, config.to_string()).unwrap();
    ok(&["run", "--config", s(&cfg), "--workers", "2"]);

    let text = fs::read_to_string(&csv).unwrap();
    assert!(!text.contains('\r'));
    assert!(text.starts_with(
        "algo_tag,candidate_tag,schedule_tag,threshold_kind,mode,epsilon,delta,seed,tau,"
    ));
    let records = read_results_csv(File::open(&csv).unwrap()).unwrap();
    assert_eq!(records.len(), 20);
    assert!(records
        .iter()
        .all(|r| r.correct && r.per_arm_counts.iter().sum::<u64>() == r.tau));

    let table = ok(&["summarize", s(&csv)]);
    assert!(
        table.contains("fixed") && table.contains("instant_furthest"),
        "{table}"
    );
}

#[test]
fn study_answers_writes_one_row_per_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("study.csv");
    ok(&[
        "study-answers",
        "--eps",
        "0.05,0.1",
        "--draws",
        "40",
        "--points",
        "500",
        "--out",
        s(&out),
    ]);
    let rows = read_study_csv(File::open(&out).unwrap()).unwrap();
    assert_eq!(
        rows.iter().map(|r| r.epsilon).collect::<Vec<_>>(),
        vec![0.05, 0.1]
    );
    assert!(rows.iter().all(|r| r.n_draws == 40 && r.n_disagree <= 40));
}

#[test]
fn bad_input_exit_codes() {
    assert_eq!(epsbai(&["run"]).status.code(), Some(2));
    assert_eq!(
        epsbai(&["instance", "--kind", "hard", "--d", "3", "--two-arm"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        epsbai(&["summarize", "/nonexistent/results.csv"])
            .status
            .code(),
        Some(1)
    );
}
