use std::fs;
use std::path::{Path, PathBuf};

use delaylab::cli::main_with_args;
use delaylab::system::SystemSpec;
use delaylab::DelaySystem;

fn write_spec(dir: &Path, name: &str, a: [f64; 2], omega: [f64; 2]) -> PathBuf {
    let text = format!(
        r#"{{"n": 1, "m": 1, "delays": [1.0], "A": [[[{}]], [[{}]]], "B": [[[1.0]], [[0.0]]], "omega": {{"vertices": [[{}], [{}]]}}}}"#,
        a[0], a[1], omega[0], omega[1]
    );
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(sys: &Path, out: &Path, args: &[&str]) -> i32 {
    let mut all = vec!["delaylab"];
    all.extend(args);
    all.extend(["--system", sys.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    main_with_args(all)
}

#[test]
fn singular_ap_is_a_finding() {
    let dir = tempfile::tempdir().unwrap();
    let sys = write_spec(dir.path(), "sys.json", [-1.0, 0.0], [-1.0, 1.0]);
    assert_eq!(run(&sys, dir.path(), &["validate"]), 2);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("validate.json")).unwrap()).unwrap();
    let findings = report["result"]["findings"].as_array().unwrap();
    let inj = findings.iter().find(|f| f["check"] == "injectivity").unwrap();
    assert_eq!(inj["passed"], false);
    // other analyses still run
    assert_eq!(run(&sys, dir.path(), &["spectrum", "--n-collocation", "16"]), 0);
}

#[test]
fn blocked_analyses_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let critical = write_spec(dir.path(), "crit.json", [0.0, -std::f64::consts::FRAC_PI_2], [-1.0, 1.0]);
    assert_eq!(run(&critical, dir.path(), &["split"]), 2);
    assert_eq!(run(&critical, dir.path(), &["entire"]), 2);
    let shifted = write_spec(dir.path(), "shift.json", [-1.0, -0.5], [0.5, 1.0]);
    assert_eq!(run(&shifted, dir.path(), &["chainset", "--depth", "3"]), 2);
}

#[test]
fn hard_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let sys = write_spec(dir.path(), "sys.json", [-1.0, -0.5], [-1.0, 1.0]);
    assert_eq!(run(&dir.path().join("missing.json"), dir.path(), &["validate"]), 1);
    assert_eq!(run(&sys, dir.path(), &["simulate", "--horizon=-1"]), 1);
    assert_eq!(run(&sys, dir.path(), &["chainset", "--reduction", "fourier"]), 1);
    assert_eq!(run(&sys, dir.path(), &["simulate", "--control", "const:2"]), 1);
}

#[test]
fn chain_verify_reports_broken_chain() {
    let dir = tempfile::tempdir().unwrap();
    let sys = write_spec(dir.path(), "sys.json", [-1.0, -0.5], [-1.0, 1.0]);
    let seg = vec![vec![1.0]; 257];
    let chain = serde_json::json!({
        "epsilon": 0.01,
        "tau": 1.0,
        "legs": [
            {"duration": 1.0, "control_descriptor": {"t_start": 0.0, "dt": 0.0078125, "values": [[0.0]]},
             "node": {"head": [1.0], "segment": seg}},
            {"duration": 0.0, "control_descriptor": null, "node": {"head": [1.0], "segment": seg}}
        ]
    });
    let path = dir.path().join("chain.json");
    fs::write(&path, chain.to_string()).unwrap();
    let out = dir.path().join("out");
    assert_eq!(run(&sys, &out, &["chain-verify", "--chain", path.to_str().unwrap()]), 2);
    let report = fs::read_to_string(out.join("chain_verify.json")).unwrap();
    assert!(report.contains("\"valid\": false"));
}

#[test]
fn artifacts_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let sys = write_spec(dir.path(), "sys.json", [-1.0, -0.5], [-1.0, 1.0]);
    let out = dir.path().join("out");
    assert_eq!(run(&sys, &out, &["chainset", "--depth", "4"]), 0);
    let csv = fs::read_to_string(out.join("chainset.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("lo_1,hi_1"));
    assert!(csv.lines().count() > 2);
    assert_eq!(run(&sys, &out, &["lift", "--horizon", "1"]), 0);
    let eq = fs::read_to_string(out.join("equator.csv")).unwrap();
    assert_eq!(eq.lines().next(), Some("t,equator_distance"));
    let lift: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("lift.json")).unwrap()).unwrap();
    assert_eq!(lift["version"], delaylab::VERSION);
    assert_eq!(lift["config"]["command"]["name"], "lift");
    assert!(lift["result"]["min_equator_distance"].as_f64().unwrap() > 0.0);
}

#[test]
fn exported_spec_reingests() {
    let sys = DelaySystem::new(
        vec![nalgebra::DMatrix::from_row_slice(2, 2, &[0.1, -0.3, 1.0 / 3.0, 2.0]); 3],
        vec![nalgebra::DMatrix::from_row_slice(2, 1, &[0.7, -1e-17]); 3],
        vec![0.5, 1.0],
        vec![vec![-1.0], vec![0.25]],
    )
    .unwrap();
    let text = sys.to_spec().to_json();
    assert_eq!(DelaySystem::from_json(&text).unwrap(), sys);
    assert_eq!(SystemSpec::from_json(&text).unwrap(), sys.to_spec());
}
