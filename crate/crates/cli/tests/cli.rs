//! End-to-end exercises of the binary: exit codes, artifact contents, and
//! strict config parsing.

use std::path::Path;
use std::process::{Command, Output};

fn run_tq(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tq"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("failed to launch tq")
}

fn write(dir: &Path, name: &str, contents: &str) -> String {
    let file = dir.join(name);
    std::fs::write(&file, contents).unwrap();
    file.to_string_lossy().into_owned()
}

#[test]
fn spectrum_csv_matches_direct_substitution() {
    let dir = std::env::temp_dir().join("tq-spectrum-test");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = write(
        &dir,
        "job.json",
        r#"{"command":"spectrum","dimension":1,"n_max":2,
            "representation":{"lambda":[0.0]},"hamiltonian":"I1^2"}"#,
    );
    let out = run_tq(&["spectrum", "--config", &cfg, "--out", dir.to_str().unwrap()], &dir);
    assert!(out.status.success(), "{out:?}");
    let csv = std::fs::read_to_string(dir.join("spectrum.csv")).unwrap();
    let energies: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(energies, vec![0.0, 1.0, 1.0, 4.0, 4.0]);
}

#[test]
fn unknown_key_exits_with_validation_code() {
    let dir = std::env::temp_dir().join("tq-badkey-test");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = write(
        &dir,
        "job.json",
        r#"{"command":"spectrum","dimension":1,"n_max":2,
            "representation":{"lambda":[0.0]},"hamiltonian":"I1","lamda":[0.1]}"#,
    );
    let out = run_tq(&["spectrum", "--config", &cfg], &dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lamda"));
}

#[test]
fn analytic_domain_violation_exits_with_numeric_code() {
    let dir = std::env::temp_dir().join("tq-domain-test");
    std::fs::create_dir_all(&dir).unwrap();
    // sqrt(I1) is undefined on the negative half of the window
    let cfg = write(
        &dir,
        "job.json",
        r#"{"command":"spectrum","dimension":1,"n_max":3,
            "representation":{"lambda":[0.0]},"hamiltonian":"sqrt(I1)"}"#,
    );
    let out = run_tq(&["spectrum", "--config", &cfg], &dir);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn holonomy_loop_emits_identity_phases() {
    let dir = std::env::temp_dir().join("tq-holonomy-test");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = write(
        &dir,
        "job.json",
        r#"{"command":"holonomy","dimension":1,"n_max":2,
            "representation":{"lambda":[0.3]},
            "perturbation":{"controlled_axes":[1],"lambda":[["0.8"]]},
            "path":{"samples":[[0.0,0.0],[0.5,1.0],[1.0,0.0]]},
            "steps":512}"#,
    );
    let out = run_tq(&["holonomy", "--config", &cfg, "--out", dir.to_str().unwrap()], &dir);
    assert!(out.status.success(), "{out:?}");
    let phases = std::fs::read_to_string(dir.join("phases.json")).unwrap();
    let rows: serde_json::Value = serde_json::from_str(&phases).unwrap();
    for row in rows.as_array().unwrap() {
        let phase: f64 = row["phase"].as_str().unwrap().parse().unwrap();
        let magnitude: f64 = row["magnitude"].as_str().unwrap().parse().unwrap();
        assert!(phase.abs() < 1e-8, "loop phase {phase}");
        assert!((magnitude - 1.0).abs() < 1e-8);
    }
}

#[test]
fn invalid_tq_threads_rejected() {
    let dir = std::env::temp_dir().join("tq-threads-test");
    std::fs::create_dir_all(&dir).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tq"))
        .args(["check", "--seed", "1"])
        .env("TQ_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn classical_flow_writes_trajectory() {
    let dir = std::env::temp_dir().join("tq-flow-test");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = write(
        &dir,
        "job.json",
        r#"{"command":"classical-flow","dimension":1,
            "classical":{"hamiltonian":"(q1^2 + p1^2)/2",
                "first_integrals":["(q1^2 + p1^2)/2"],
                "initial":{"q":[1.0],"p":[0.0]},
                "t_end":1.0,"dt":0.001}}"#,
    );
    let out = run_tq(
        &["classical-flow", "--config", &cfg, "--out", dir.to_str().unwrap()],
        &dir,
    );
    assert!(out.status.success(), "{out:?}");
    let csv = std::fs::read_to_string(dir.join("flow.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    let fields: Vec<f64> = last.split(',').map(|v| v.parse().unwrap()).collect();
    assert!((fields[1] - 1f64.cos()).abs() < 1e-9);
    assert!((fields[2] + 1f64.sin()).abs() < 1e-9);
}
