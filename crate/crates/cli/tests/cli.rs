use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn traceforms(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_traceforms"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn with_threads(threads: &str, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_traceforms"))
        .env("TRACEFORMS_THREADS", threads)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn path_str(name: &str) -> String {
    fixture(name).display().to_string()
}

#[test]
fn trace_report_has_expected_keys_and_values() {
    let f = path_str("path3.json");
    let r = json(&traceforms(&["trace", "--form", &f, "--lambda", "1", "--path", "kkt"]));
    for key in ["lambda", "T", "operator", "path", "residuals"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    assert_eq!(r["path"], "kkt");
    let t00 = r["T"][0][0].as_f64().unwrap();
    assert!((t00 - 5.0 / 3.0).abs() < 1e-12);
}

#[test]
fn limit_report_shape() {
    let f = path_str("path3.json");
    let r = json(&traceforms(&["limit", "--form", &f, "--schedule", "geometric:1:0.5:40", "--tol", "1e-8"]));
    assert_eq!(r["converged"], true);
    assert!(r["schedule"][0]["lambda"].is_f64());
    assert!(r["schedule"][0].get("decrement").is_some());
    let t0 = &r["T0"];
    assert!((t0[0][0].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((t0[0][1].as_f64().unwrap() + 0.5).abs() < 1e-12);
}

#[test]
fn harmonic_report_shape() {
    let f = path_str("dense_trace.json");
    let r = json(&traceforms(&["harmonic", "--form", &f]));
    assert_eq!(r["direct_sum_ok"], true);
    assert!(r["quadharm_residual"].as_f64().unwrap() < 1e-10);
    assert!(r["v_lambda_spread"].as_f64().unwrap() < 1e-10);
    assert_eq!(r["elliptic"]["flag"], true);
    assert!(r["elliptic"]["alpha"].is_f64());
    assert!(r["elliptic"]["beta"].is_f64());
    assert_eq!(r["e_har_form"].as_array().unwrap().len(), 3);
}

#[test]
fn dirichlet_check_passes_on_laplacian_and_fails_on_positive_coupling() {
    let ok = traceforms(&[
        "dirichlet-check",
        "--form",
        &path_str("path3.json"),
        "--lambda",
        "1",
        "--alphas",
        "0.5,1,2",
        "--samples",
        "500",
        "--seed",
        "42",
    ]);
    assert_eq!(json(&ok)["pass"], true);
    let bad = traceforms(&["dirichlet-check", "--form", &path_str("positive_coupling.json"), "--samples", "200"]);
    assert_eq!(bad.status.code(), Some(4));
    let r: Value = serde_json::from_slice(&bad.stdout).unwrap();
    assert_eq!(r["form"]["structural"]["pass"], false);
}

#[test]
fn dirichlet_check_rejects_dense_mass() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("dense_mass.json");
    std::fs::write(
        &f,
        r#"{"dim": 2, "A": [[1, -1], [-1, 1]], "M": [[2, 0.5], [0.5, 2]], "J": {"restrict": [0]}, "W": "identity"}"#,
    )
    .unwrap();
    let out = traceforms(&["dirichlet-check", "--form", f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mosco_sequence_run_converges() {
    let r = json(&traceforms(&["mosco", "--sequence", &path_str("sequence.json"), "--lambda", "1"]));
    assert_eq!(r["pass"], true);
    assert_eq!(r["labels"].as_array().unwrap().len(), 9);
    let slope = r["distance_slope"].as_f64().unwrap();
    assert!((slope + 1.0).abs() <= 0.3, "slope {slope}");
}

#[test]
fn mosco_counterexample_demo_flags_failed_assumption() {
    let r = json(&traceforms(&["mosco", "--demo", "counterexample", "--n", "1,4,16,64", "--fem", "128"]));
    assert_eq!(r["assumption_failure_flagged"], true);
    assert_eq!(r["run"]["assumptions"]["a1_finite"], false);
    assert_eq!(r["comparison"]["pass"], true);
}

#[test]
fn oracle_values() {
    let chain = json(&traceforms(&["oracle", "chain", "--lambda", "1"]));
    let s = 1.0_f64;
    assert!((chain["c_off"].as_f64().unwrap() - s / s.sinh()).abs() < 1e-15);
    let half = json(&traceforms(&["oracle", "halfspace", "--xi", "1", "--lambda", "0"]));
    assert_eq!(half["value"].as_f64().unwrap(), 1.0);
    let ce = json(&traceforms(&["oracle", "counterexample", "--n", "4", "--lambda", "0", "--a", "1", "--b", "0"]));
    assert!((ce["value"].as_f64().unwrap() - 1.25).abs() < 1e-12);
}

#[test]
fn demos_emit_comparison_reports() {
    for args in [
        vec!["demo", "chain", "--lambda", "1", "--half-width", "4", "--nodes-per-unit", "32"],
        vec!["demo", "halfstrip", "--xi", "2", "--lambda", "1", "--cells", "1024"],
        vec!["demo", "counterexample", "--n", "1,4", "--lambda", "1", "--fem", "256"],
        vec!["demo", "grid2d", "--outer", "13", "--offset", "4", "--size", "5"],
    ] {
        let r = json(&traceforms(&args));
        for key in ["computed", "oracle", "rel_gap", "pass"] {
            assert!(r.get(key).is_some(), "{args:?} lacks {key}");
        }
        assert_eq!(r["pass"], true, "{args:?}");
    }
}

#[test]
fn grid_demo_rejects_box_touching_the_boundary() {
    let out = traceforms(&["demo", "grid2d", "--outer", "9", "--offset", "0", "--size", "5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_is_byte_identical_across_runs_and_thread_counts() {
    let f = path_str("dense_trace.json");
    let args = ["dirichlet-check", "--form", f.as_str(), "--samples", "300", "--seed", "7"];
    let a = with_threads("1", &args);
    let b = with_threads("1", &args);
    let c = with_threads("4", &args);
    assert!(!a.stdout.is_empty());
    assert_eq!(a.status.code(), c.status.code());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn out_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let f = path_str("path3.json");
    let to_file = traceforms(&["limit", "--form", &f, "--out", out.to_str().unwrap()]);
    assert!(to_file.status.success());
    assert!(to_file.stdout.is_empty());
    let to_stdout = traceforms(&["limit", "--form", &f]);
    assert_eq!(std::fs::read(&out).unwrap(), to_stdout.stdout);
}

#[test]
fn csv_flattens_the_matrix() {
    let out = traceforms(&["trace", "--form", &path_str("path3.json"), "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "i,j,value");
    assert_eq!(lines.len(), 5);
    assert!(lines[2].starts_with("0,1,"));
}

#[test]
fn coo_duplicates_are_summed() {
    let r = json(&traceforms(&["trace", "--form", &path_str("coo.json")]));
    assert!((r["T"][0][0].as_f64().unwrap() - 2.5).abs() < 1e-14);
    assert!((r["operator"][0][0].as_f64().unwrap() - 5.0).abs() < 1e-13);
}

#[test]
fn exit_codes() {
    let bad = traceforms(&["trace", "--form", &path_str("bad_index.json")]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("`J`"));

    let missing = traceforms(&["trace", "--form", "/nonexistent/form.json"]);
    assert_eq!(missing.status.code(), Some(2));

    let negative = traceforms(&["trace", "--form", &path_str("path3.json"), "--lambda", "-1"]);
    assert_eq!(negative.status.code(), Some(2));

    let schur_on_dense = traceforms(&["trace", "--form", &path_str("dense_trace.json"), "--path", "schur"]);
    assert_eq!(schur_on_dense.status.code(), Some(2));

    let bad_schedule = traceforms(&["limit", "--form", &path_str("path3.json"), "--schedule", "1,2"]);
    assert_eq!(bad_schedule.status.code(), Some(2));

    let bad_threads = with_threads("many", &["oracle", "chain"]);
    assert_eq!(bad_threads.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("ill.json");
    std::fs::write(&f, r#"{"dim": 2, "A": [[1e20, 0], [0, 0]], "M": "identity", "J": [[1, 1e-9]], "W": "identity"}"#).unwrap();
    let out = traceforms(&["trace", "--form", f.to_str().unwrap(), "--lambda", "1e-12", "--path", "kkt"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("numerically singular"));
}

#[test]
fn harmonic_without_direct_sum_reports_nulls() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("zero.json");
    std::fs::write(&f, r#"{"dim": 3, "A": [[0,0,0],[0,0,0],[0,0,0]], "M": "identity", "J": {"restrict": [0]}, "W": "identity"}"#)
        .unwrap();
    let r = json(&traceforms(&["harmonic", "--form", f.to_str().unwrap()]));
    assert_eq!(r["direct_sum_ok"], false);
    assert!(r["e_har_form"].is_null());
    assert_eq!(r["elliptic"]["flag"], false);
}

#[test]
fn unknown_top_level_key_is_rejected_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("extra.json");
    std::fs::write(
        &f,
        "{\n  \"dim\": 1,\n  \"A\": [[1]],\n  \"M\": \"identity\",\n  \"J\": {\"restrict\": [0]},\n  \"W\": \"identity\",\n  \"colour\": 3\n}",
    )
    .unwrap();
    let out = traceforms(&["trace", "--form", f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 7"), "{err}");
    assert!(err.contains("colour"), "{err}");
}

#[test]
fn selftest_filter_and_fault_injection() {
    let ok = traceforms(&["selftest", "--filter", "markov"]);
    assert_eq!(ok.status.code(), Some(0));
    let text = String::from_utf8_lossy(&ok.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 2);
    assert!(!text.contains("chain oracle"));

    let broken = traceforms(&["selftest", "--filter", "chain", "--inject-fault", "chain-sign"]);
    assert_eq!(broken.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&broken.stdout).contains("[FAIL]"));

    let none = traceforms(&["selftest", "--filter", "nothing-matches"]);
    assert_eq!(none.status.code(), Some(2));
}
