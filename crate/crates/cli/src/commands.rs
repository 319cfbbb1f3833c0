//! Per-command execution: dispatch a validated job, write artifact files,
//! and assemble the run report.

use std::path::Path;

use tq_core::classical::{
    action_by_quadrature, extended_flow, first_integral_drift, hamilton_flow, turning_points,
    ClassicalState, ExtendedState,
};
use tq_core::error::{Error, Result};
use tq_core::fourier::{fmt_f64_17, TruncationWindow};
use tq_core::holonomy::{commutes_with_hamiltonian, holonomy_operator};
use tq_core::spectra::{evolve, quantize_hamiltonian, spectrum};

use crate::config::JobConfig;
use crate::report::RunReport;

fn validation(msg: impl Into<String>) -> Error {
    Error::ParseError(msg.into())
}

fn write_artifact(out_dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| validation(format!("cannot create {}: {e}", out_dir.display())))?;
    let file = out_dir.join(name);
    std::fs::write(&file, contents)
        .map_err(|e| validation(format!("cannot write {}: {e}", file.display())))
}

pub fn run(
    cfg: &JobConfig,
    config_dir: &Path,
    out_dir: &Path,
    seed: u64,
    format: &str,
) -> Result<RunReport> {
    match cfg.command.as_str() {
        "spectrum" => run_spectrum(cfg, out_dir, seed, format),
        "evolve" => run_evolve(cfg, out_dir, seed, format),
        "holonomy" => run_holonomy(cfg, config_dir, out_dir, seed),
        "classical-flow" => run_classical_flow(cfg, out_dir, seed),
        "action" => run_action(cfg, out_dir, seed),
        "check" => crate::check::run_check(seed),
        other => Err(validation(format!("unknown command '{other}'"))),
    }
}

fn run_spectrum(cfg: &JobConfig, out_dir: &Path, seed: u64, format: &str) -> Result<RunReport> {
    let m = cfg.dimension()?;
    let w = TruncationWindow::new(m, cfg.n_max()?);
    let rep = cfg.representation()?;
    let h = cfg.hamiltonian()?;
    let op = quantize_hamiltonian(&h, &rep, w)?;
    let entries = spectrum(&h, &rep, w)?;
    let mut report = RunReport::new("spectrum", seed);
    report.set_leakage(op.leakage);
    let artifact = if format == "csv" {
        let mut text = String::new();
        for k in 1..=m {
            text.push_str(&format!("n_{k},"));
        }
        text.push_str("E\n");
        for e in &entries {
            for nk in &e.n.0 {
                text.push_str(&format!("{nk},"));
            }
            text.push_str(&fmt_f64_17(e.energy));
            text.push('\n');
        }
        write_artifact(out_dir, "spectrum.csv", &text)?;
        "spectrum.csv"
    } else {
        let rows: Vec<serde_json::Value> = entries
            .iter()
            .map(|e| {
                serde_json::json!({
                    "n": e.n.0,
                    "energy": fmt_f64_17(e.energy),
                })
            })
            .collect();
        write_artifact(
            out_dir,
            "spectrum.json",
            &serde_json::to_string_pretty(&rows).unwrap(),
        )?;
        "spectrum.json"
    };
    report.artifacts.push(artifact.to_string());
    Ok(report)
}

fn run_evolve(cfg: &JobConfig, out_dir: &Path, seed: u64, format: &str) -> Result<RunReport> {
    let rep = cfg.representation()?;
    let h = cfg.hamiltonian()?;
    let t = cfg
        .time
        .ok_or_else(|| validation("config.time: missing"))?;
    let psi0 = cfg.initial_state()?;
    let norm0 = psi0.norm();
    let psi = evolve(&psi0, &h, &rep, t)?;
    let mut report = RunReport::new("evolve", seed);
    report.push_check("norm-preservation", (psi.norm() - norm0).abs(), 1e-12);
    let artifact = if format == "csv" {
        let m = cfg.dimension()?;
        let mut text = String::new();
        for k in 1..=m {
            text.push_str(&format!("n_{k},"));
        }
        text.push_str("re,im\n");
        for (n, c) in psi.poly.terms() {
            for nk in &n.0 {
                text.push_str(&format!("{nk},"));
            }
            text.push_str(&format!("{},{}\n", fmt_f64_17(c.re), fmt_f64_17(c.im)));
        }
        write_artifact(out_dir, "evolved.csv", &text)?;
        "evolved.csv"
    } else {
        write_artifact(out_dir, "evolved.json", &psi.poly.to_json_string())?;
        "evolved.json"
    };
    report.artifacts.push(artifact.to_string());
    Ok(report)
}

fn run_holonomy(
    cfg: &JobConfig,
    config_dir: &Path,
    out_dir: &Path,
    seed: u64,
) -> Result<RunReport> {
    let m = cfg.dimension()?;
    let w = TruncationWindow::new(m, cfg.n_max()?);
    let rep = cfg.representation()?;
    let path = cfg.parameter_path(config_dir)?;
    let p = cfg.perturbation(&path)?;
    let steps = cfg.steps.unwrap_or(4096);
    if steps == 0 {
        return Err(validation("config.steps: must be at least 1"));
    }
    let mut report = RunReport::new("holonomy", seed);
    if cfg.hamiltonian.is_some() {
        let h = cfg.hamiltonian()?;
        p.check_hamiltonian(&h)?;
        let norm = commutes_with_hamiltonian(&p, &h, &rep, w, &path)?;
        report.push_check("perturbation-commutes", norm, 1e-8);
    }
    let u = holonomy_operator(&p, &rep, w, &path, steps)?;
    write_artifact(out_dir, "holonomy.json", &u.to_json_string())?;
    report.artifacts.push("holonomy.json".to_string());

    // scalar report: per-basis-state phases when the operator is diagonal
    let mut offdiag = 0.0f64;
    for i in 0..w.size() {
        for j in 0..w.size() {
            if i != j {
                offdiag = offdiag.max(u.matrix[(i, j)].norm());
            }
        }
    }
    if offdiag <= 1e-10 {
        let mut rows = Vec::with_capacity(w.size());
        for (pos, d) in u.diagonal().iter().enumerate() {
            rows.push(serde_json::json!({
                "n": w.index_at(pos).0,
                "phase": fmt_f64_17(d.arg()),
                "magnitude": fmt_f64_17(d.norm()),
            }));
        }
        write_artifact(
            out_dir,
            "phases.json",
            &serde_json::to_string_pretty(&rows).unwrap(),
        )?;
        report.artifacts.push("phases.json".to_string());
    }
    report.set_leakage(u.leakage);
    Ok(report)
}

fn run_classical_flow(cfg: &JobConfig, out_dir: &Path, seed: u64) -> Result<RunReport> {
    let (sys, cc) = cfg.classical_system()?;
    let initial = cc
        .initial
        .as_ref()
        .ok_or_else(|| validation("config.classical.initial: missing"))?;
    if initial.q.len() != sys.m || initial.p.len() != sys.m {
        return Err(validation(
            "config.classical.initial: q/p lengths must match dimension",
        ));
    }
    let t_end = cc
        .t_end
        .ok_or_else(|| validation("config.classical.t_end: missing"))?;
    let dt = cc
        .dt
        .ok_or_else(|| validation("config.classical.dt: missing"))?;
    if dt <= 0.0 {
        return Err(validation("config.classical.dt: must be positive"));
    }
    let mut report = RunReport::new("classical-flow", seed);
    let mut text = String::from("t");
    for k in 1..=sys.m {
        text.push_str(&format!(",q_{k}"));
    }
    for k in 1..=sys.m {
        text.push_str(&format!(",p_{k}"));
    }
    let states: Vec<ClassicalState> = if cc.extended {
        text.push_str(",p0\n");
        let x0 = ExtendedState {
            t: initial.t0,
            q: initial.q.clone(),
            p: initial.p.clone(),
            p0: initial
                .p0
                .unwrap_or(-sys.eval_h(initial.t0, &initial.q, &initial.p)?),
        };
        let traj = extended_flow(&sys, &x0, t_end, dt)?;
        for s in &traj {
            text.push_str(&fmt_f64_17(s.t));
            for v in s.q.iter().chain(&s.p) {
                text.push_str(&format!(",{}", fmt_f64_17(*v)));
            }
            text.push_str(&format!(",{}\n", fmt_f64_17(s.p0)));
        }
        traj.into_iter()
            .map(|s| ClassicalState { t: s.t, q: s.q, p: s.p })
            .collect()
    } else {
        text.push('\n');
        let x0 = ClassicalState {
            t: initial.t0,
            q: initial.q.clone(),
            p: initial.p.clone(),
        };
        let traj = hamilton_flow(&sys, &x0, t_end, dt)?;
        for s in &traj {
            text.push_str(&fmt_f64_17(s.t));
            for v in s.q.iter().chain(&s.p) {
                text.push_str(&format!(",{}", fmt_f64_17(*v)));
            }
            text.push('\n');
        }
        traj
    };
    write_artifact(out_dir, "flow.csv", &text)?;
    report.artifacts.push("flow.csv".to_string());
    let duration = (t_end - initial.t0).abs().max(1.0);
    for (k, drift) in first_integral_drift(&sys, &states)?.iter().enumerate() {
        report.push_check(
            &format!("first-integral-{}-drift", k + 1),
            *drift,
            1e-8 * duration,
        );
    }
    Ok(report)
}

fn run_action(cfg: &JobConfig, out_dir: &Path, seed: u64) -> Result<RunReport> {
    let (sys, cc) = cfg.classical_system()?;
    if sys.m != 1 {
        return Err(validation("config.dimension: action command is 1-DOF only"));
    }
    let energy = cc
        .energy
        .ok_or_else(|| validation("config.classical.energy: missing"))?;
    let q_scan = cc.q_scan.unwrap_or(10.0);
    let t0 = cc.initial.as_ref().map_or(0.0, |i| i.t0);
    let orbit = turning_points(&sys, t0, energy, q_scan)?;
    let action = action_by_quadrature(&sys, t0, energy, q_scan)?;
    let doc = serde_json::json!({
        "energy": fmt_f64_17(energy),
        "action": fmt_f64_17(action),
        "q_minus": fmt_f64_17(orbit.q_minus),
        "q_plus": fmt_f64_17(orbit.q_plus),
    });
    write_artifact(out_dir, "action.json", &serde_json::to_string_pretty(&doc).unwrap())?;
    let mut report = RunReport::new("action", seed);
    report.artifacts.push("action.json".to_string());
    Ok(report)
}

/// Exit-code classes: 2 for validation problems, 3 for numeric guards.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::ParseError(_)
        | Error::DimensionMismatch { .. }
        | Error::RepresentationMismatch
        | Error::AxisOutOfRange { .. }
        | Error::WindowMismatch
        | Error::NotAffine
        | Error::AxisConsistencyError(_)
        | Error::PathDomainError(_) => 2,
        Error::AnalyticDomainViolation(_)
        | Error::NonCommutingPerturbation { .. }
        | Error::OpenOrbit
        | Error::QuadratureFailure(_)
        | Error::NonFiniteDerivative
        | Error::FitFailure(_) => 3,
    }
}
