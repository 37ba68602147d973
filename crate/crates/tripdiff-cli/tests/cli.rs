//! End-to-end tests of the `tripdiff` binary: exit codes, output files and
//! the documented example values.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_tripdiff");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn run_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(BIN)
        .args(args)
        .env(key, value)
        .output()
        .expect("binary runs")
}

fn fixture_csv(dir: &Path) -> String {
    let path = dir.join("panel.csv");
    fs::write(
        &path,
        "s,r,t,y,d\n\
         1,1,1,1,0\n1,1,2,5,1\n1,2,1,0,0\n1,2,2,1,0\n\
         2,1,1,2,0\n2,1,2,3,0\n2,2,1,4,0\n2,2,2,4,0\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

fn read_json(path: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn estimate_fixture_values() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture_csv(dir.path());
    let out = dir.path().join("run");
    let output = run(&["estimate", "--input", &input, "--out", out.to_str().unwrap()]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let report = read_json(out.join("estimate.json"));
    assert!((report["tdr_estimate"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!((report["imputation_att"].as_f64().unwrap() - 2.0).abs() < 1e-8);
    assert!(out.join("run.json").exists());
    let manifest = read_json(out.join("run.json"));
    assert_eq!(manifest["subcommand"], "estimate");
}

#[test]
fn estimate_weighting_does_not_change_tau() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture_csv(dir.path());
    let mut taus = Vec::new();
    for weighting in ["uniform", "cohort-size"] {
        let out = dir.path().join(weighting);
        let output = run(&[
            "estimate",
            "--input",
            &input,
            "--out",
            out.to_str().unwrap(),
            "--weighting",
            weighting,
        ]);
        assert!(output.status.success());
        taus.push(read_json(out.join("estimate.json"))["tdr_estimate"].as_f64().unwrap());
    }
    assert_eq!(taus[0], taus[1]);
}

#[test]
fn malformed_csv_exits_2_with_error_name() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    fs::write(&input, "s,r,t,y,d\n1,1,1,1,0\n1,1,1,2,0\n").unwrap();
    let out = dir.path().join("run");
    let output = run(&[
        "estimate",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("DuplicateCell"));
}

#[test]
fn decompose_fixture_single_valid_term() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture_csv(dir.path());
    let out = dir.path().join("run");
    let output = run(&[
        "decompose",
        "--input",
        &input,
        "--out",
        out.to_str().unwrap(),
        "--term-dump",
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let report = read_json(out.join("decomposition.json"));
    assert_eq!(report["categories"]["valid_primary_valid_placebo"]["terms"], 1);
    assert!((report["tau_reconstructed"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    let terms = fs::read_to_string(out.join("terms.csv")).unwrap();
    let mut lines = terms.lines();
    assert_eq!(lines.next().unwrap(), "s,s2,t,t2,r,r2,category,primary_did,placebo_did,value");
    assert_eq!(lines.next().unwrap(), "1,2,2,1,1,2,valid_primary_valid_placebo,3,1,2");
}

#[test]
fn decompose_all_control_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("ctrl.csv");
    fs::write(
        &input,
        "s,r,t,y,d\n1,1,1,1,0\n1,1,2,5,0\n1,2,1,0,0\n1,2,2,1,0\n\
         2,1,1,2,0\n2,1,2,3,0\n2,2,1,4,0\n2,2,2,4,0\n",
    )
    .unwrap();
    let out = dir.path().join("run");
    let output = run(&[
        "decompose",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&output.stderr).contains("DegenerateDesign"));
}

#[test]
fn tuple_cap_exceeded_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture_csv(dir.path());
    let out = dir.path().join("run");
    let output = run_env(
        &["decompose", "--input", &input, "--out", out.to_str().unwrap()],
        "TRIPDIFF_TUPLE_CAP",
        "1",
    );
    assert_eq!(output.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&output.stderr).contains("EnumerationCapExceeded"));
}

#[test]
fn simulate_unknown_design_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{"s_count":4,"r_count":2,"t_count":4,
            "adoption":{"kind":"named","design":"mystery"},
            "effect":{"kind":"constant","value":1.0},"seed":1}"#,
    )
    .unwrap();
    let out = dir.path().join("run");
    let output = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("UnknownDesign"));
}

#[test]
fn noiseless_simulate_estimate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{"s_count":6,"r_count":3,"t_count":6,
            "adoption":{"kind":"named","design":"cross-stratum-staggered"},
            "effect":{"kind":"constant","value":1.5},"seed":9}"#,
    )
    .unwrap();
    let sim = dir.path().join("sim");
    let output = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        sim.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let est = dir.path().join("est");
    let output = run(&[
        "estimate",
        "--input",
        sim.join("panel.csv").to_str().unwrap(),
        "--out",
        est.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let report = read_json(est.join("estimate.json"));
    assert!((report["imputation_att"].as_f64().unwrap() - 1.5).abs() < 1e-8);
    // Constant effects: even the regression coefficient is unbiased here.
    assert!((report["tdr_estimate"].as_f64().unwrap() - 1.5).abs() < 1e-8);
}

#[test]
fn event_study_excess_lags_flagged_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture_csv(dir.path());
    let out = dir.path().join("run");
    // The fixture adopter has internal g = 1; no placebo window exists.
    let output = run(&[
        "event-study",
        "--input",
        &input,
        "--out",
        out.to_str().unwrap(),
        "--max-pre",
        "2",
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let csv = fs::read_to_string(out.join("event_study.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("-1,,0,")));
    assert!(csv.lines().any(|l| l.starts_with("-2,,0,")));
    assert!(out.join("event_study.svg").exists());
}
