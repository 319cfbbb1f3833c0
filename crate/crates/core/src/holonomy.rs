//! Parameter-driven perturbations affine in the actions, their quantization,
//! the factorized evolution, and the path-ordered holonomy operator computed
//! by midpoint product integration.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::{FourierPolynomial, TruncationWindow, WaveFunction};
use crate::quantum::{commutator, quantize_affine, AffineObservable, LinearOperator, Representation};
use crate::spectra::{evolve, quantize_hamiltonian, HamiltonianSpec};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Piecewise-linear curve `t -> s(t)` in parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterPath {
    samples: Vec<(f64, Vec<f64>)>,
}

impl ParameterPath {
    pub fn new(samples: Vec<(f64, Vec<f64>)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::PathDomainError(
                "a path needs at least 2 samples".into(),
            ));
        }
        let p = samples[0].1.len();
        for (i, (t, s)) in samples.iter().enumerate() {
            if s.len() != p {
                return Err(Error::PathDomainError(format!(
                    "sample {i} has {} parameter values, expected {p}",
                    s.len()
                )));
            }
            if !t.is_finite() || s.iter().any(|x| !x.is_finite()) {
                return Err(Error::PathDomainError(format!("non-finite sample {i}")));
            }
            if i > 0 && samples[i - 1].0 >= *t {
                return Err(Error::PathDomainError(
                    "sample times must be strictly increasing".into(),
                ));
            }
        }
        Ok(ParameterPath { samples })
    }

    pub fn samples(&self) -> &[(f64, Vec<f64>)] {
        &self.samples
    }

    pub fn num_params(&self) -> usize {
        self.samples[0].1.len()
    }

    pub fn t_start(&self) -> f64 {
        self.samples[0].0
    }

    pub fn t_end(&self) -> f64 {
        self.samples.last().unwrap().0
    }

    pub fn is_loop(&self) -> bool {
        self.samples[0].1 == self.samples.last().unwrap().1
    }

    fn segment_of(&self, t: f64) -> Result<usize> {
        if t < self.t_start() - 1e-12 || t > self.t_end() + 1e-12 {
            return Err(Error::PathDomainError(format!(
                "t={t} outside path domain [{}, {}]",
                self.t_start(),
                self.t_end()
            )));
        }
        // right-hand segment at breakpoints
        for i in 0..self.samples.len() - 1 {
            if t < self.samples[i + 1].0 {
                return Ok(i);
            }
        }
        Ok(self.samples.len() - 2)
    }

    pub fn value(&self, t: f64) -> Result<Vec<f64>> {
        let i = self.segment_of(t)?;
        let (t0, s0) = &self.samples[i];
        let (t1, s1) = &self.samples[i + 1];
        let u = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        Ok(s0
            .iter()
            .zip(s1)
            .map(|(a, b)| a + u * (b - a))
            .collect())
    }

    /// Piecewise-constant derivative; right-hand value at breakpoints.
    pub fn derivative(&self, t: f64) -> Result<Vec<f64>> {
        let i = self.segment_of(t)?;
        let (t0, s0) = &self.samples[i];
        let (t1, s1) = &self.samples[i + 1];
        Ok(s0
            .iter()
            .zip(s1)
            .map(|(a, b)| (b - a) / (t1 - t0))
            .collect())
    }

    /// Concatenation; `other` is shifted so its start meets this path's end.
    pub fn concat(&self, other: &ParameterPath) -> Result<ParameterPath> {
        if self.num_params() != other.num_params() {
            return Err(Error::PathDomainError("parameter dimensions differ".into()));
        }
        let offset = self.t_end() - other.t_start();
        let mut samples = self.samples.clone();
        for (t, s) in other.samples.iter().skip(1) {
            samples.push((t + offset, s.clone()));
        }
        ParameterPath::new(samples)
    }
}

/// Perturbation `Delta = Lambda^a_beta(s, phi^b) ds^beta/dt I_a` acting on a
/// controlled subset of action axes. Coefficient functions are sampled at
/// the path nodes and linearly interpolated along each segment.
#[derive(Debug, Clone)]
pub struct PerturbationSpec {
    pub dim: usize,
    pub controlled_axes: Vec<usize>,
    /// `lambda[(a_slot, beta)]` holds one Fourier polynomial per path node.
    coefficients: Vec<Vec<Vec<FourierPolynomial>>>,
}

impl PerturbationSpec {
    /// `coefficients[a_slot][beta][node]` is `Lambda^a_beta` at that node,
    /// where `a_slot` indexes into `controlled_axes`.
    pub fn new(
        dim: usize,
        controlled_axes: Vec<usize>,
        coefficients: Vec<Vec<Vec<FourierPolynomial>>>,
        num_params: usize,
        num_nodes: usize,
    ) -> Result<Self> {
        if controlled_axes.is_empty() {
            return Err(Error::AxisConsistencyError(
                "at least one controlled axis required".into(),
            ));
        }
        let mut seen = vec![false; dim];
        for &a in &controlled_axes {
            if a >= dim {
                return Err(Error::AxisOutOfRange { axis: a, dim });
            }
            if seen[a] {
                return Err(Error::AxisConsistencyError(format!(
                    "controlled axis {a} repeated"
                )));
            }
            seen[a] = true;
        }
        if coefficients.len() != controlled_axes.len() {
            return Err(Error::AxisConsistencyError(format!(
                "{} coefficient rows for {} controlled axes",
                coefficients.len(),
                controlled_axes.len()
            )));
        }
        for row in &coefficients {
            if row.len() != num_params {
                return Err(Error::AxisConsistencyError(format!(
                    "{} parameter columns, expected {num_params}",
                    row.len()
                )));
            }
            for nodes in row {
                if nodes.len() != num_nodes {
                    return Err(Error::AxisConsistencyError(format!(
                        "{} node samples, expected {num_nodes}",
                        nodes.len()
                    )));
                }
                for f in nodes {
                    if f.dim() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            got: f.dim(),
                        });
                    }
                    // Lambda may depend only on the controlled angles
                    for (n, _) in f.terms() {
                        for (axis, &nk) in n.0.iter().enumerate() {
                            if nk != 0 && !controlled_axes.contains(&axis) {
                                return Err(Error::AxisConsistencyError(format!(
                                    "coefficient depends on angle {axis} outside the controlled axes"
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(PerturbationSpec {
            dim,
            controlled_axes,
            coefficients,
        })
    }

    /// Largest index shift any coefficient can produce.
    pub fn bandwidth(&self) -> i64 {
        self.coefficients
            .iter()
            .flatten()
            .flatten()
            .map(|f| f.bandwidth())
            .max()
            .unwrap_or(0)
    }

    /// Checks that the base Hamiltonian carries no dependence on the
    /// controlled actions.
    pub fn check_hamiltonian(&self, h: &HamiltonianSpec) -> Result<()> {
        for &a in &self.controlled_axes {
            if !h.independent_of(a) {
                return Err(Error::AxisConsistencyError(format!(
                    "Hamiltonian depends on controlled action axis {a}"
                )));
            }
        }
        Ok(())
    }

    /// `Lambda^a_beta` at time `t` (node values interpolated by the segment
    /// fraction of the path).
    fn coefficient_at(
        &self,
        path: &ParameterPath,
        a_slot: usize,
        beta: usize,
        t: f64,
    ) -> Result<FourierPolynomial> {
        let i = path.segment_of(t)?;
        let (t0, _) = &path.samples()[i];
        let (t1, _) = &path.samples()[i + 1];
        let u = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        let f0 = &self.coefficients[a_slot][beta][i];
        let f1 = &self.coefficients[a_slot][beta][i + 1];
        f0.scale(Complex64::new(1.0 - u, 0.0))
            .add(&f1.scale(Complex64::new(u, 0.0)))
    }

    /// Frozen affine observable `Delta(t)` with `a^a = Lambda^a_beta ds^beta/dt`.
    pub fn affine_at(&self, path: &ParameterPath, t: f64) -> Result<AffineObservable> {
        if path.num_params() == 0 {
            return Err(Error::PathDomainError("path has no parameters".into()));
        }
        let sdot = path.derivative(t)?;
        let mut a = vec![FourierPolynomial::zero(self.dim); self.dim];
        for (slot, &axis) in self.controlled_axes.iter().enumerate() {
            for (beta, &sd) in sdot.iter().enumerate() {
                if sd == 0.0 {
                    continue;
                }
                let lam = self.coefficient_at(path, slot, beta, t)?;
                a[axis] = a[axis].add(&lam.scale(Complex64::new(sd, 0.0)))?;
            }
        }
        AffineObservable::new(a, FourierPolynomial::zero(self.dim))
    }
}

/// Instantaneous operator `Delta^(t)`, equal to the polarized quantization
/// of the frozen affine observable.
pub fn quantize_perturbation(
    p: &PerturbationSpec,
    rep: &Representation,
    w: TruncationWindow,
    path: &ParameterPath,
    t: f64,
) -> Result<LinearOperator> {
    if p.dim != w.m {
        return Err(Error::DimensionMismatch {
            expected: w.m,
            got: p.dim,
        });
    }
    let f = p.affine_at(path, t)?;
    quantize_affine(&f, rep, w)
}

/// Diagnostic: max-norm of `[Delta^(t), H^]` on the interior sub-window,
/// maximized over segment midpoints. At most `1e-10` when the Hamiltonian
/// is independent of every controlled action.
pub fn commutes_with_hamiltonian(
    p: &PerturbationSpec,
    h: &HamiltonianSpec,
    rep: &Representation,
    w: TruncationWindow,
    path: &ParameterPath,
) -> Result<f64> {
    let hop = quantize_hamiltonian(h, rep, w)?;
    let margin = p.bandwidth();
    let mut max = 0.0f64;
    for i in 0..path.samples().len() - 1 {
        let t_mid = 0.5 * (path.samples()[i].0 + path.samples()[i + 1].0);
        let delta = quantize_perturbation(p, rep, w, path, t_mid)?;
        let comm = commutator(&delta, &hop)?;
        max = max.max(comm.max_abs_on_interior_cols(margin));
    }
    Ok(max)
}

/// Sub-interval layout for product integration: steps are allocated across
/// path segments in proportion to parameter-space arc length, so the result
/// depends on the polyline geometry rather than its time parametrization.
fn segment_steps(path: &ParameterPath, steps: usize) -> Vec<usize> {
    let nseg = path.samples().len() - 1;
    let arcs: Vec<f64> = (0..nseg)
        .map(|i| {
            let (_, s0) = &path.samples()[i];
            let (_, s1) = &path.samples()[i + 1];
            s0.iter()
                .zip(s1)
                .map(|(a, b)| (b - a) * (b - a))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let total: f64 = arcs.iter().sum();
    if total == 0.0 {
        return vec![0; nseg];
    }
    arcs.iter()
        .map(|&a| {
            if a == 0.0 {
                0
            } else {
                ((steps as f64 * a / total).round() as usize).max(1)
            }
        })
        .collect()
}

/// Path-ordered displacement operator, approximated by the midpoint
/// exponential product over `steps` sub-intervals: factors `exp(-i Delta^ dt)`
/// multiplied right-to-left in time.
pub fn holonomy_operator(
    p: &PerturbationSpec,
    rep: &Representation,
    w: TruncationWindow,
    path: &ParameterPath,
    steps: usize,
) -> Result<LinearOperator> {
    assert!(steps >= 1);
    if p.dim != w.m {
        return Err(Error::DimensionMismatch {
            expected: w.m,
            got: p.dim,
        });
    }
    let mut u = LinearOperator::identity(w);
    for (i, &n_sub) in segment_steps(path, steps).iter().enumerate() {
        if n_sub == 0 {
            continue;
        }
        let t0 = path.samples()[i].0;
        let t1 = path.samples()[i + 1].0;
        let dt = (t1 - t0) / n_sub as f64;
        for j in 0..n_sub {
            let t_mid = t0 + (j as f64 + 0.5) * dt;
            let delta = quantize_perturbation(p, rep, w, path, t_mid)?;
            let factor = delta.scale(-I * dt).expm();
            u = factor.matmul(&u)?;
        }
    }
    Ok(u)
}

/// Direct time-ordered propagator of the full `H^ + Delta^` by midpoint
/// product integration, used to cross-check the factorized evolution.
pub fn direct_propagator(
    p: &PerturbationSpec,
    h: &HamiltonianSpec,
    rep: &Representation,
    w: TruncationWindow,
    path: &ParameterPath,
    steps: usize,
) -> Result<LinearOperator> {
    assert!(steps >= 1);
    let hop = quantize_hamiltonian(h, rep, w)?;
    let t0 = path.t_start();
    let t1 = path.t_end();
    let dt = (t1 - t0) / steps as f64;
    let mut u = LinearOperator::identity(w);
    for j in 0..steps {
        let t_mid = t0 + (j as f64 + 0.5) * dt;
        let delta = quantize_perturbation(p, rep, w, path, t_mid)?;
        let generator = hop.add(&delta)?;
        let factor = generator.scale(-I * dt).expm();
        u = factor.matmul(&u)?;
    }
    Ok(u)
}

/// Evolution factorized into the dynamic factor and the holonomy factor:
/// rejects perturbations whose commutator diagnostic exceeds `1e-8`.
pub fn factorized_evolution(
    psi0: &WaveFunction,
    h: &HamiltonianSpec,
    p: &PerturbationSpec,
    rep: &Representation,
    w: TruncationWindow,
    path: &ParameterPath,
    steps: usize,
) -> Result<WaveFunction> {
    let diag = commutes_with_hamiltonian(p, h, rep, w, path)?;
    if diag > 1e-8 {
        return Err(Error::NonCommutingPerturbation { norm: diag });
    }
    let t_span = path.t_end() - path.t_start();
    let dynamic = evolve(psi0, h, rep, t_span)?;
    let u = holonomy_operator(p, rep, w, path, steps)?;
    u.apply(&dynamic)
}
