//! End-to-end tests of the `hbvm` binary: exit codes, file outputs and
//! config round-trips.

use std::path::PathBuf;
use std::process::{Command, Output};

fn hbvm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hbvm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn temp_path(name: &str) -> PathBuf {
    let mut path = std::env::temp_dir();
    path.push(format!("hbvm-cli-test-{}-{name}", std::process::id()));
    path
}

#[test]
fn tableau_midpoint() {
    let output = hbvm(&["tableau", "--k", "1", "--s", "1", "--form", "rk"]);
    assert!(output.status.success());
    assert_eq!(stdout(&output), "0.5,0.5\n,1\n");
    assert!(stderr(&output).contains("operator identity residuals"));
}

#[test]
fn tableau_two_stage_gauss_json() {
    let output = hbvm(&["tableau", "--k", "2", "--s", "2", "--format", "json"]);
    assert!(output.status.success());
    let doc: serde_json::Value = serde_json::from_str(&stdout(&output)).unwrap();
    assert_eq!(doc["k"], 2);
    assert_eq!(doc["s"], 2);
    let a00 = doc["A"][0][0].as_f64().unwrap();
    assert!((a00 - 0.25).abs() < 1e-14);
    assert!(doc["Abar"].is_array() && doc["bbar"].is_array());
}

#[test]
fn tableau_rejects_k_below_s() {
    let output = hbvm(&["tableau", "--k", "1", "--s", "2"]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("k must be >= s"));
}

#[test]
fn integrate_writes_one_row_per_boundary() {
    let out = temp_path("pendulum.csv");
    let output = hbvm(&[
        "integrate",
        "--problem",
        "pendulum",
        "--s",
        "2",
        "--k",
        "4",
        "--tf",
        "5",
        "--steps",
        "100",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    assert!(stdout(&output).contains("steps=100"));
    assert!(stdout(&output).contains("max_energy_drift="));
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 102); // header + initial point + 100 steps
    assert!(lines[0].starts_with("t,y_1,yd_1,H"));
    std::fs::remove_file(&out).ok();
}

#[test]
fn integrate_unknown_problem_lists_registry() {
    let output = hbvm(&[
        "integrate",
        "--problem",
        "nope",
        "--s",
        "2",
        "--k",
        "2",
        "--tf",
        "1",
        "--steps",
        "10",
    ]);
    assert_eq!(output.status.code(), Some(2));
    let err = stderr(&output);
    assert!(err.contains("unknown problem"));
    assert!(err.contains("harmonic") && err.contains("kepler"));
}

#[test]
fn integrate_solver_failure_flags_partial_output() {
    let out = temp_path("aborted.csv");
    let output = hbvm(&[
        "integrate",
        "--problem",
        "pendulum",
        "--s",
        "2",
        "--k",
        "2",
        "--tf",
        "1",
        "--steps",
        "10",
        "--max-iters",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(3));
    assert!(stderr(&output).contains("aborted at step 0"));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv
        .lines()
        .last()
        .unwrap()
        .starts_with("# aborted at step 0"));
    std::fs::remove_file(&out).ok();
}

#[test]
fn order_study_prints_expected_slope() {
    let output = hbvm(&[
        "order-study",
        "--problem",
        "harmonic",
        "--s",
        "2",
        "--k",
        "3",
        "--tf",
        "2",
        "--base-steps",
        "5",
        "--rungs",
        "5",
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    let body = stdout(&output);
    assert!(body.starts_with("h,error,slope\n"));
    let err = stderr(&output);
    let slope: f64 = err
        .lines()
        .find_map(|l| l.strip_prefix("final slope: "))
        .expect("slope line")
        .parse()
        .unwrap();
    assert!((3.8..=4.2).contains(&slope), "slope {slope}");
}

#[test]
fn order_study_rejects_empty_ladder() {
    let output = hbvm(&[
        "order-study",
        "--problem",
        "harmonic",
        "--s",
        "2",
        "--k",
        "3",
        "--tf",
        "2",
        "--base-steps",
        "5",
        "--rungs",
        "0",
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("h-ladder"));
}

#[test]
fn energy_drift_comparison_ratio() {
    let out = temp_path("drift.csv");
    let output = hbvm(&[
        "energy-drift",
        "--problem",
        "henon-heiles",
        "--s",
        "2",
        "--k",
        "3",
        "--compare-k",
        "2",
        "--tf",
        "100",
        "--steps",
        "1000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    let body = stdout(&output);
    let ratio: f64 = body
        .lines()
        .find_map(|l| l.strip_prefix("drift ratio (k=2 vs k=3): "))
        .expect("ratio line")
        .parse()
        .unwrap();
    assert!(ratio >= 100.0, "ratio {ratio}");
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("t,drift\n"));
    std::fs::remove_file(&out).ok();
}

#[test]
fn dump_config_round_trip_is_bit_identical() {
    let flags = [
        "integrate",
        "--problem",
        "harmonic",
        "--s",
        "2",
        "--k",
        "3",
        "--tf",
        "2.5",
        "--steps",
        "40",
        "--scheme",
        "simplified-newton",
    ];
    let dumped = hbvm(&[&flags[..], &["--dump-config"]].concat());
    assert!(dumped.status.success());
    let config_path = temp_path("config.json");
    std::fs::write(&config_path, stdout(&dumped)).unwrap();

    let out_a = temp_path("run-a.csv");
    let out_b = temp_path("run-b.csv");
    let run_a = hbvm(&[
        "integrate",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
    ]);
    assert!(run_a.status.success(), "{}", stderr(&run_a));
    let run_b = hbvm(&[&flags[..], &["--out", out_b.to_str().unwrap()]].concat());
    assert!(run_b.status.success(), "{}", stderr(&run_b));

    let bytes_a = std::fs::read(&out_a).unwrap();
    let bytes_b = std::fs::read(&out_b).unwrap();
    assert_eq!(bytes_a, bytes_b);
    for path in [&config_path, &out_a, &out_b] {
        std::fs::remove_file(path).ok();
    }
}

#[test]
fn config_with_unknown_keys_is_rejected() {
    let config_path = temp_path("bad-config.json");
    std::fs::write(
        &config_path,
        r#"{"problem": "harmonic", "k": 3, "s": 2, "tf": 1.0, "steps": 10, "typo-key": 1}"#,
    )
    .unwrap();
    let output = hbvm(&["integrate", "--config", config_path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("typo-key"));
    std::fs::remove_file(&config_path).ok();
}
