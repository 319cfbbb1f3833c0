//! Strict JSON job configuration and its conversion to library types.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use tq_core::classical::SystemDef;
use tq_core::error::{Error, Result};
use tq_core::expr::{self, Expr};
use tq_core::fourier::{FourierPolynomial, MultiIndex, WaveFunction};
use tq_core::holonomy::{ParameterPath, PerturbationSpec};
use tq_core::quantum::Representation;
use tq_core::spectra::{HamiltonianKind, HamiltonianSpec};

fn validation(msg: impl Into<String>) -> Error {
    Error::ParseError(msg.into())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub command: String,
    #[serde(default)]
    pub dimension: Option<usize>,
    #[serde(default)]
    pub n_max: Option<i64>,
    #[serde(default)]
    pub representation: Option<RepresentationConfig>,
    #[serde(default)]
    pub hamiltonian: Option<String>,
    #[serde(default)]
    pub state: Option<Vec<StateTerm>>,
    #[serde(default)]
    pub time: Option<f64>,
    #[serde(default)]
    pub perturbation: Option<PerturbationConfig>,
    #[serde(default)]
    pub path: Option<PathConfig>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub classical: Option<ClassicalConfig>,
    #[serde(default)]
    pub format: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepresentationConfig {
    pub lambda: Vec<f64>,
    #[serde(default)]
    pub half_shift: Option<Vec<bool>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateTerm {
    pub n: Vec<i64>,
    pub re: f64,
    pub im: f64,
}

/// Coefficient rows are one expression per (controlled axis, path parameter)
/// over the symbols `s1..sp` and `phi1..phim`; axes are 1-based in config.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub controlled_axes: Vec<usize>,
    pub lambda: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    /// Inline samples, one row `[t, s_1, .., s_p]` per node.
    #[serde(default)]
    pub samples: Option<Vec<Vec<f64>>>,
    /// CSV file with the same rows, relative to the config file.
    #[serde(default)]
    pub csv: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalConfig {
    /// Expression over `t, q1..qm, p1..pm`.
    pub hamiltonian: String,
    #[serde(default)]
    pub first_integrals: Vec<String>,
    #[serde(default)]
    pub initial: Option<InitialState>,
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub energy: Option<f64>,
    #[serde(default)]
    pub q_scan: Option<f64>,
    /// Integrate the autonomous lift carrying p0 alongside (q, p).
    #[serde(default)]
    pub extended: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    #[serde(default)]
    pub t0: f64,
    #[serde(default)]
    pub p0: Option<f64>,
}

pub fn parse_config(text: &str) -> Result<JobConfig> {
    let cfg: JobConfig =
        serde_json::from_str(text).map_err(|e| validation(format!("config: {e}")))?;
    match cfg.command.as_str() {
        "spectrum" | "evolve" | "holonomy" | "classical-flow" | "action" | "check" => {}
        other => {
            return Err(validation(format!(
                "config.command: unknown command '{other}'"
            )))
        }
    }
    if let Some(f) = &cfg.format {
        if f != "csv" && f != "json" {
            return Err(validation(format!(
                "config.format: expected 'csv' or 'json', got '{f}'"
            )));
        }
    }
    Ok(cfg)
}

impl JobConfig {
    pub fn dimension(&self) -> Result<usize> {
        let m = self
            .dimension
            .ok_or_else(|| validation("config.dimension: missing"))?;
        if m == 0 {
            return Err(validation("config.dimension: must be at least 1"));
        }
        Ok(m)
    }

    pub fn n_max(&self) -> Result<i64> {
        let n = self.n_max.ok_or_else(|| validation("config.n_max: missing"))?;
        if n < 0 {
            return Err(validation("config.n_max: must be nonnegative"));
        }
        Ok(n)
    }

    pub fn representation(&self) -> Result<Representation> {
        let m = self.dimension()?;
        let rc = self
            .representation
            .as_ref()
            .ok_or_else(|| validation("config.representation: missing"))?;
        if rc.lambda.len() != m {
            return Err(validation(format!(
                "config.representation.lambda: length {} does not match dimension {m}",
                rc.lambda.len()
            )));
        }
        let half_shift = match &rc.half_shift {
            Some(hs) => {
                if hs.len() != m {
                    return Err(validation(format!(
                        "config.representation.half_shift: length {} does not match dimension {m}",
                        hs.len()
                    )));
                }
                hs.clone()
            }
            None => vec![false; m],
        };
        Representation::new(rc.lambda.clone(), half_shift)
    }

    /// Parses the Hamiltonian expression over `I1..Im` into either a
    /// polynomial or one of the supported analytic envelopes
    /// (`exp(p)`, `sqrt(p)`, `c/p`).
    pub fn hamiltonian(&self) -> Result<HamiltonianSpec> {
        let m = self.dimension()?;
        let text = self
            .hamiltonian
            .as_ref()
            .ok_or_else(|| validation("config.hamiltonian: missing"))?;
        let e = expr::parse(text).map_err(|err| validation(format!("config.hamiltonian: {err}")))?;
        let action_vars: Vec<String> = (1..=m).map(|k| format!("I{k}")).collect();
        for v in e.variables() {
            if !action_vars.contains(&v) {
                return Err(validation(format!(
                    "config.hamiltonian: variable '{v}' is not one of I1..I{m}"
                )));
            }
        }
        let kind_of = |inner: &Expr, kind: HamiltonianKind| -> Result<HamiltonianSpec> {
            Ok(HamiltonianSpec::analytic(
                kind,
                inner.to_polynomial(&action_vars)?,
            ))
        };
        match &e {
            Expr::Exp(inner) => kind_of(inner, HamiltonianKind::Exp),
            Expr::Sqrt(inner) => kind_of(inner, HamiltonianKind::Sqrt),
            Expr::Div(num, den) => {
                if let Expr::Const(c) = **num {
                    if c == 1.0 {
                        return kind_of(den, HamiltonianKind::Reciprocal);
                    }
                }
                Ok(HamiltonianSpec::polynomial(e.to_polynomial(&action_vars)?))
            }
            _ => Ok(HamiltonianSpec::polynomial(e.to_polynomial(&action_vars)?)),
        }
    }

    pub fn initial_state(&self) -> Result<WaveFunction> {
        let rep = self.representation()?;
        let n_max = self.n_max()?;
        let terms = self
            .state
            .as_ref()
            .ok_or_else(|| validation("config.state: missing"))?;
        let m = self.dimension()?;
        let mut pairs = Vec::with_capacity(terms.len());
        for t in terms {
            if t.n.len() != m {
                return Err(validation(format!(
                    "config.state: index {:?} does not match dimension {m}",
                    t.n
                )));
            }
            if t.n.iter().any(|&nk| nk.abs() > n_max) {
                return Err(validation(format!(
                    "config.state: index {:?} outside the window |n| <= {n_max}",
                    t.n
                )));
            }
            pairs.push((
                MultiIndex::new(t.n.clone()),
                num_complex::Complex64::new(t.re, t.im),
            ));
        }
        WaveFunction::new(
            FourierPolynomial::from_terms(m, pairs)?,
            rep.half_shift.clone(),
        )
    }

    pub fn parameter_path(&self, config_dir: &Path) -> Result<ParameterPath> {
        let pc = self
            .path
            .as_ref()
            .ok_or_else(|| validation("config.path: missing"))?;
        let rows: Vec<Vec<f64>> = match (&pc.samples, &pc.csv) {
            (Some(rows), None) => rows.clone(),
            (None, Some(file)) => read_path_csv(&config_dir.join(file))?,
            _ => {
                return Err(validation(
                    "config.path: provide exactly one of 'samples' or 'csv'",
                ))
            }
        };
        let mut samples = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() < 2 {
                return Err(validation(format!(
                    "config.path: row {i} needs at least t and one parameter"
                )));
            }
            samples.push((row[0], row[1..].to_vec()));
        }
        ParameterPath::new(samples)
    }

    pub fn perturbation(&self, path: &ParameterPath) -> Result<PerturbationSpec> {
        let m = self.dimension()?;
        let pc = self
            .perturbation
            .as_ref()
            .ok_or_else(|| validation("config.perturbation: missing"))?;
        let mut axes = Vec::with_capacity(pc.controlled_axes.len());
        for &a in &pc.controlled_axes {
            if a == 0 || a > m {
                return Err(validation(format!(
                    "config.perturbation.controlled_axes: axis {a} outside 1..{m}"
                )));
            }
            axes.push(a - 1);
        }
        let num_params = path.num_params();
        let num_nodes = path.samples().len();
        if pc.lambda.len() != axes.len() {
            return Err(validation(format!(
                "config.perturbation.lambda: {} rows for {} controlled axes",
                pc.lambda.len(),
                axes.len()
            )));
        }
        let mut coefficients = Vec::with_capacity(axes.len());
        for (slot, row) in pc.lambda.iter().enumerate() {
            if row.len() != num_params {
                return Err(validation(format!(
                    "config.perturbation.lambda[{slot}]: {} entries for {} path parameters",
                    row.len(),
                    num_params
                )));
            }
            let mut cols = Vec::with_capacity(num_params);
            for text in row {
                let e = expr::parse(text)
                    .map_err(|err| validation(format!("config.perturbation.lambda: {err}")))?;
                let mut nodes = Vec::with_capacity(num_nodes);
                for (_, s) in path.samples() {
                    let mut env = HashMap::new();
                    for (beta, &v) in s.iter().enumerate() {
                        env.insert(format!("s{}", beta + 1), v);
                    }
                    nodes.push(e.to_fourier(m, &env)?);
                }
                cols.push(nodes);
            }
            coefficients.push(cols);
        }
        PerturbationSpec::new(m, axes, coefficients, num_params, num_nodes)
    }

    pub fn classical_system(&self) -> Result<(SystemDef, &ClassicalConfig)> {
        let cc = self
            .classical
            .as_ref()
            .ok_or_else(|| validation("config.classical: missing"))?;
        let m = self.dimension()?;
        let h = expr::parse(&cc.hamiltonian)
            .map_err(|err| validation(format!("config.classical.hamiltonian: {err}")))?;
        let allowed: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=m).map(|k| format!("q{k}")))
            .chain((1..=m).map(|k| format!("p{k}")))
            .collect();
        for v in h.variables() {
            if !allowed.contains(&v) {
                return Err(validation(format!(
                    "config.classical.hamiltonian: variable '{v}' is not one of t, q1..q{m}, p1..p{m}"
                )));
            }
        }
        let mut integrals = Vec::with_capacity(cc.first_integrals.len());
        for (i, text) in cc.first_integrals.iter().enumerate() {
            integrals.push(
                expr::parse(text).map_err(|err| {
                    validation(format!("config.classical.first_integrals[{i}]: {err}"))
                })?,
            );
        }
        Ok((SystemDef::new(m, h, integrals), cc))
    }
}

fn read_path_csv(file: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| validation(format!("config.path.csv: cannot read {}: {e}", file.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        // tolerate a header row on the first line
        if i == 0 && line.chars().any(|c| c.is_ascii_alphabetic()) {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| validation(format!("config.path.csv row {}: {e}", i + 1)))?);
    }
    Ok(rows)
}
