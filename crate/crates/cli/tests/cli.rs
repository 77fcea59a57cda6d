use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_padic-spectra"));
    c.env_remove("PADIC_SPECTRA_OUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn spectrum_table_shape() {
    let out = run(&["spectrum", "--p", "2", "--e", "1", "--f", "1", "--m-max", "3", "--n-max", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["command"], "spectrum");
    assert_eq!(v["params"], serde_json::json!({"p": 2, "e": 1, "f": 1}));
    let rows = v["results"].as_array().unwrap();
    assert_eq!(rows.len(), 24);
    let values: Vec<f64> = rows.iter().map(|r| r["value"].as_f64().unwrap()).collect();
    assert!(values.windows(2).all(|w| w[0] <= w[1]));
    for key in ["m", "n", "lambda", "value", "multiplicity"] {
        assert!(rows[0].get(key).is_some(), "missing {key}");
    }
    assert!(v["meta"]["version"].is_string());
    assert_eq!(v["meta"]["seed"], 7);
    assert!(v["meta"]["tolerances"].is_object());
}

#[test]
fn spectrum_csv_layout() {
    let out = run(&["spectrum", "--p", "2", "--m-max", "1", "--n-max", "1", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("m,n,lambda,value,multiplicity"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "0");
    assert_eq!(first[1], "0");
    // 17 significant digits
    assert!(first[2].starts_with("6.93102291650604") && first[2].ends_with("e-1"), "{}", first[2]);
    assert_eq!(first[2].split('e').next().unwrap().len(), 18);
    let parsed: f64 = first[2].parse().unwrap();
    assert!((parsed - 0.69310229165060436).abs() < 1e-15);
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn bracket_certified_for_ramified_params() {
    let out = run(&["spectrum", "--p", "2", "--e", "2", "--f", "1", "--n-max", "20"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_errors_exit_1_with_one_line() {
    for args in [
        vec!["spectrum", "--p", "4"],
        vec!["spectrum", "--p", "2", "--bogus"],
        vec!["zeta", "--p", "2", "--s", "-1"],
        vec!["zeta", "--p", "2", "--s", "1", "--n-roots", "0"],
        vec!["validate", "--p", "2", "--tol", "2"],
        vec!["validate", "--p", "2", "--depth", "3", "--k", "50"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(out.stdout.is_empty(), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.trim_end().lines().count(), 1, "{args:?}: {err}");
    }
}

#[test]
fn help_exits_0() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("spectrum"));
}

#[test]
fn zeta_grid_and_pole_rows() {
    let out = run(&["zeta", "--p", "2", "--s", "1,2,3,4,5,6,7,8"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let rows = v["results"].as_array().unwrap();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r["flag"] == "ok"));

    let out = run(&["zeta", "--p", "2", "--s", "0.5,1", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text.lines().next(),
        Some("s_re,s_im,zeta_re,zeta_im,tail_bound,n_roots_used,flag")
    );
    assert!(text.lines().nth(1).unwrap().ends_with("pole"));
    assert!(text.lines().nth(2).unwrap().ends_with("ok"));
}

#[test]
fn zeta_tail_bound_decreases_with_roots() {
    let out = run(&["zeta", "--p", "3", "--s", "1.5", "--s-im", "2", "--n-roots", "2,4,8,16"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let bounds: Vec<f64> = v["results"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["tail_bound"].as_f64().unwrap())
        .collect();
    assert!(bounds.windows(2).all(|w| w[1] < w[0]), "{bounds:?}");
}

#[test]
fn validate_default_suite_passes() {
    let out = run(&["validate", "--p", "2", "--e", "1", "--f", "1", "--depth", "10"]);
    let v = json(&out);
    let failed: Vec<&Value> = v["results"].as_array().unwrap().iter().filter(|r| r["passed"] != true).collect();
    assert!(failed.is_empty(), "{failed:?}");
    assert_eq!(out.status.code(), Some(0));
    let drift = v["results"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["check"] == "spectrum_drift_n_to_n_plus_2")
        .expect("drift row");
    assert!(drift["measured"].as_f64().unwrap() < 1e-8);
}

#[test]
fn corrupted_eigenvalue_exits_3() {
    let out = run(&["validate", "--p", "2", "--depth", "8", "--no-drift", "--corrupt-eigenvalue", "1e-3"]);
    assert_eq!(out.status.code(), Some(3));
    let v = json(&out);
    let row = &v["results"][0];
    assert_eq!(row["check"], "spectrum_rel_error");
    assert_eq!(row["passed"], false);
    assert!(String::from_utf8_lossy(&out.stderr).contains("spectrum_rel_error"));
}

#[test]
fn spectrum_json_round_trips_through_validate() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    let out = run(&[
        "spectrum", "--p", "2", "--m-max", "8", "--n-max", "7", "--out", spec.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let out = run(&[
        "validate", "--p", "2", "--depth", "8", "--no-drift", "--spectrum-json", spec.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    // a table for other parameters is rejected
    let out = run(&["validate", "--p", "3", "--depth", "6", "--spectrum-json", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("PADIC_SPECTRA_OUT_DIR", dir.path())
        .args(["zeta", "--p", "2", "--s", "1,2", "--format", "csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let written = std::fs::read_to_string(dir.path().join("zeta.csv")).unwrap();
    assert_eq!(written.lines().count(), 3);
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for (name, args) in [
        ("spectrum", vec!["spectrum", "--p", "3", "--m-max", "4", "--n-max", "6"]),
        ("zeta", vec!["zeta", "--p", "2", "--e", "2", "--s", "1.5,2,3", "--s-im", "0.5"]),
        ("validate", vec!["validate", "--p", "2", "--depth", "8", "--seed", "11"]),
    ] {
        for format in ["json", "csv"] {
            let mut files = Vec::new();
            for i in 0..2 {
                let path = dir.path().join(format!("{name}-{i}.{format}"));
                let mut a = args.clone();
                a.extend(["--format", format, "--out", path.to_str().unwrap()]);
                let out = run(&a);
                assert!(out.status.code().is_some());
                files.push(read(&path));
            }
            assert_eq!(files[0], files[1], "{name} {format}");
        }
    }
}
