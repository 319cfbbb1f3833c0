//! Classical companion used as a verification oracle: RK4 integration of the
//! time-dependent Hamilton equations, the autonomous extended lift with
//! conserved `H* = p0 + H`, 1-DOF action quadrature, action-angle charts,
//! the quantum-classical frequency correspondence, and canonical shift
//! transformations with a symplectic Jacobian check.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fourier::TruncationWindow;
use crate::quantum::Representation;
use crate::spectra::{quantize_hamiltonian, ActionPolynomial, HamiltonianSpec};

/// Point of the momentum phase space at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalState {
    pub t: f64,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

/// Point of the homogeneous phase space, carrying the momentum conjugate to
/// time. Along trajectories of the lift, `p0 + H(t,q,p)` is conserved.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    pub t: f64,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub p0: f64,
}

/// Hamiltonian system given by closed-form expression trees over the
/// symbols `t, q1..qm, p1..pm`, with symbolic partials precomputed.
#[derive(Debug, Clone)]
pub struct SystemDef {
    pub m: usize,
    pub hamiltonian: Expr,
    pub first_integrals: Vec<Expr>,
    dh_dq: Vec<Expr>,
    dh_dp: Vec<Expr>,
    dh_dt: Expr,
}

impl SystemDef {
    pub fn new(m: usize, hamiltonian: Expr, first_integrals: Vec<Expr>) -> Self {
        assert!(m >= 1);
        let dh_dq = (1..=m)
            .map(|k| hamiltonian.diff(&format!("q{k}")))
            .collect();
        let dh_dp = (1..=m)
            .map(|k| hamiltonian.diff(&format!("p{k}")))
            .collect();
        let dh_dt = hamiltonian.diff("t");
        SystemDef {
            m,
            hamiltonian,
            first_integrals,
            dh_dq,
            dh_dp,
            dh_dt,
        }
    }

    fn env(&self, t: f64, q: &[f64], p: &[f64]) -> HashMap<String, f64> {
        let mut vars = HashMap::with_capacity(2 * self.m + 1);
        vars.insert("t".to_string(), t);
        for k in 0..self.m {
            vars.insert(format!("q{}", k + 1), q[k]);
            vars.insert(format!("p{}", k + 1), p[k]);
        }
        vars
    }

    pub fn eval_h(&self, t: f64, q: &[f64], p: &[f64]) -> Result<f64> {
        self.hamiltonian.eval(&self.env(t, q, p))
    }

    /// Hamilton vector field: `(dq, dp) = (dH/dp, -dH/dq)`.
    fn field(&self, t: f64, q: &[f64], p: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let vars = self.env(t, q, p);
        let mut dq = Vec::with_capacity(self.m);
        let mut dp = Vec::with_capacity(self.m);
        for k in 0..self.m {
            let vq = self.dh_dp[k].eval(&vars)?;
            let vp = -self.dh_dq[k].eval(&vars)?;
            if !vq.is_finite() || !vp.is_finite() {
                return Err(Error::NonFiniteDerivative);
            }
            dq.push(vq);
            dp.push(vp);
        }
        Ok((dq, dp))
    }

    fn dh_dt(&self, t: f64, q: &[f64], p: &[f64]) -> Result<f64> {
        let v = self.dh_dt.eval(&self.env(t, q, p))?;
        if !v.is_finite() {
            return Err(Error::NonFiniteDerivative);
        }
        Ok(v)
    }
}

/// One classical RK4 step on a flat state vector.
fn rk4_step<F>(f: &F, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let k1 = f(t, y)?;
    let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
    let k2 = f(t + 0.5 * h, &y2)?;
    let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
    let k3 = f(t + 0.5 * h, &y3)?;
    let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
    let k4 = f(t + h, &y4)?;
    Ok(y
        .iter()
        .enumerate()
        .map(|(i, &yi)| yi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn rk4_integrate<F>(f: &F, t0: f64, y0: Vec<f64>, t_end: f64, dt: f64) -> Result<Vec<(f64, Vec<f64>)>>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    assert!(dt > 0.0);
    let mut out = vec![(t0, y0)];
    let mut t = t0;
    while t < t_end - 1e-15 * t_end.abs().max(1.0) {
        let h = dt.min(t_end - t);
        let (_, y) = out.last().unwrap();
        let y_next = rk4_step(f, t, y, h)?;
        t += h;
        out.push((t, y_next));
    }
    Ok(out)
}

/// Integrates the Hamilton equations with fixed-step RK4.
pub fn hamilton_flow(
    sys: &SystemDef,
    x0: &ClassicalState,
    t_end: f64,
    dt: f64,
) -> Result<Vec<ClassicalState>> {
    let m = sys.m;
    let f = |t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let (dq, dp) = sys.field(t, &y[..m], &y[m..2 * m])?;
        Ok(dq.into_iter().chain(dp).collect())
    };
    let mut y0 = x0.q.clone();
    y0.extend_from_slice(&x0.p);
    let traj = rk4_integrate(&f, x0.t, y0, t_end, dt)?;
    Ok(traj
        .into_iter()
        .map(|(t, y)| ClassicalState {
            t,
            q: y[..m].to_vec(),
            p: y[m..2 * m].to_vec(),
        })
        .collect())
}

/// Integrates the autonomous lift. The `(q,p)` components follow exactly the
/// same arithmetic path as `hamilton_flow`; `p0` obeys `dp0/dt = -dH/dt` so
/// that `p0 + H` is conserved.
pub fn extended_flow(
    sys: &SystemDef,
    x0: &ExtendedState,
    t_end: f64,
    dt: f64,
) -> Result<Vec<ExtendedState>> {
    let m = sys.m;
    let f = |t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let (dq, dp) = sys.field(t, &y[..m], &y[m..2 * m])?;
        let dp0 = -sys.dh_dt(t, &y[..m], &y[m..2 * m])?;
        Ok(dq.into_iter().chain(dp).chain(std::iter::once(dp0)).collect())
    };
    let mut y0 = x0.q.clone();
    y0.extend_from_slice(&x0.p);
    y0.push(x0.p0);
    let traj = rk4_integrate(&f, x0.t, y0, t_end, dt)?;
    Ok(traj
        .into_iter()
        .map(|(t, y)| ExtendedState {
            t,
            q: y[..m].to_vec(),
            p: y[m..2 * m].to_vec(),
            p0: y[2 * m],
        })
        .collect())
}

/// Per-integral maximum drift `|F_k(x(t)) - F_k(x(0))|` along a trajectory.
pub fn first_integral_drift(sys: &SystemDef, trajectory: &[ClassicalState]) -> Result<Vec<f64>> {
    assert!(!trajectory.is_empty());
    let mut drifts = vec![0.0f64; sys.first_integrals.len()];
    let mut initial = Vec::with_capacity(sys.first_integrals.len());
    for f in &sys.first_integrals {
        initial.push(f.eval(&sys.env(trajectory[0].t, &trajectory[0].q, &trajectory[0].p))?);
    }
    for state in trajectory {
        let vars = sys.env(state.t, &state.q, &state.p);
        for (k, f) in sys.first_integrals.iter().enumerate() {
            let v = f.eval(&vars)?;
            drifts[k] = drifts[k].max((v - initial[k]).abs());
        }
    }
    Ok(drifts)
}

// ---- 1-DOF action quadrature ------------------------------------------

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Legendre P_n(x) and derivative by recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        // recompute p0 for the weight
        let mut p0 = 1.0;
        let mut p1 = x;
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn gl_integrate<F>(f: &F, a: f64, b: f64, n: usize) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let (nodes, weights) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(&weights) {
        acc += w * f(mid + half * x)?;
    }
    Ok(acc * half)
}

fn bisect<F>(f: &F, mut a: f64, mut b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut fa = f(a)?;
    let fb = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa * fb > 0.0 {
        return Err(Error::QuadratureFailure(
            "bisection bracket does not straddle a root".into(),
        ));
    }
    while (b - a).abs() > tol {
        let mid = 0.5 * (a + b);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fa * fm < 0.0 {
            b = mid;
        } else {
            a = mid;
            fa = fm;
        }
    }
    Ok(0.5 * (a + b))
}

/// Orbit geometry of a closed 1-DOF level set `H(t0, q, p) = E`.
#[derive(Debug, Clone)]
pub struct OrbitGeometry {
    pub energy: f64,
    pub q_minus: f64,
    pub q_plus: f64,
}

/// Positive-branch momentum `p(q) >= 0` solving `H(t0, q, p) = E`.
fn momentum_at(sys: &SystemDef, t0: f64, energy: f64, q: f64) -> Result<f64> {
    let h0 = sys.eval_h(t0, &[q], &[0.0])?;
    if h0 > energy {
        // tolerate rounding right at a turning point
        if h0 - energy <= 1e-9 * energy.abs().max(1.0) {
            return Ok(0.0);
        }
        return Err(Error::QuadratureFailure(format!(
            "point q={q} outside the orbit at E={energy}"
        )));
    }
    let mut p_hi = 1.0;
    while sys.eval_h(t0, &[q], &[p_hi])? < energy {
        p_hi *= 2.0;
        if p_hi > 1e9 {
            return Err(Error::QuadratureFailure(
                "momentum bound not found (Hamiltonian unbounded in p?)".into(),
            ));
        }
    }
    bisect(&|p: f64| Ok(sys.eval_h(t0, &[q], &[p])? - energy), 0.0, p_hi, 1e-14)
}

/// Locates the turning points of the closed level set by scanning
/// `H(t0, q, 0) - E` for sign changes and bisecting to 1e-12 in q.
pub fn turning_points(sys: &SystemDef, t0: f64, energy: f64, q_scan: f64) -> Result<OrbitGeometry> {
    assert_eq!(sys.m, 1, "turning-point search is 1-DOF only");
    let g = |q: f64| -> Result<f64> { Ok(sys.eval_h(t0, &[q], &[0.0])? - energy) };
    let steps = 4000;
    let dq = 2.0 * q_scan / steps as f64;
    // find an interior grid point where the orbit region is open (g < 0),
    // preferring the well around the origin
    let mut interior = None;
    for i in 0..=steps {
        let q = -q_scan + i as f64 * dq;
        if g(q)? < 0.0 && (interior.is_none() || q.abs() < f64::abs(interior.unwrap())) {
            interior = Some(q);
        }
    }
    let q0 = interior.ok_or(Error::OpenOrbit)?;
    // march outward for sign changes
    let mut left = None;
    let mut q = q0;
    while q > -q_scan {
        let q_next = q - dq;
        if g(q_next)? >= 0.0 {
            left = Some(bisect(&g, q_next, q, 1e-12)?);
            break;
        }
        q = q_next;
    }
    let mut right = None;
    let mut q = q0;
    while q < q_scan {
        let q_next = q + dq;
        if g(q_next)? >= 0.0 {
            right = Some(bisect(&g, q, q_next, 1e-12)?);
            break;
        }
        q = q_next;
    }
    match (left, right) {
        (Some(q_minus), Some(q_plus)) => Ok(OrbitGeometry {
            energy,
            q_minus,
            q_plus,
        }),
        _ => Err(Error::OpenOrbit),
    }
}

/// Action `I = (1/2pi) closed-int p dq` of the closed 1-DOF orbit at the
/// given energy, by Gauss-Legendre quadrature under the substitution
/// `q = mid + half * sin(theta)` (which absorbs the turning-point
/// square-root behavior). Node count doubles until convergence.
pub fn action_by_quadrature(sys: &SystemDef, t0: f64, energy: f64, q_scan: f64) -> Result<f64> {
    let orbit = turning_points(sys, t0, energy, q_scan)?;
    let mid = 0.5 * (orbit.q_minus + orbit.q_plus);
    let half = 0.5 * (orbit.q_plus - orbit.q_minus);
    if half <= 0.0 {
        return Ok(0.0);
    }
    let integrand = |theta: f64| -> Result<f64> {
        let q = mid + half * theta.sin();
        let p = momentum_at(sys, t0, energy, q)?;
        Ok(p * half * theta.cos())
    };
    let mut prev = f64::NAN;
    let mut n = 64;
    while n <= 4096 {
        let val = gl_integrate(
            &integrand,
            -std::f64::consts::FRAC_PI_2,
            std::f64::consts::FRAC_PI_2,
            n,
        )? / std::f64::consts::PI;
        if prev.is_finite() && (val - prev).abs() <= 1e-11 * val.abs().max(1e-3) {
            return Ok(val);
        }
        prev = val;
        n *= 2;
    }
    Err(Error::QuadratureFailure(
        "action quadrature did not converge".into(),
    ))
}

// ---- action-angle chart -------------------------------------------------

/// Numerically constructed 1-DOF action-angle chart around a family of
/// closed orbits, with `H(I)` provided by a polynomial least-squares fit.
#[derive(Debug, Clone)]
pub struct ActionAngleChart {
    sys: SystemDef,
    t0: f64,
    q_scan: f64,
    /// `H(I)` fit coefficients, constant term first.
    pub h_in_actions: Vec<f64>,
}

impl ActionAngleChart {
    /// Builds the chart by sampling actions over the energy values and
    /// fitting `E = H(I)` with a polynomial of the given degree.
    pub fn build(
        sys: &SystemDef,
        t0: f64,
        energies: &[f64],
        fit_degree: usize,
        q_scan: f64,
    ) -> Result<Self> {
        assert_eq!(sys.m, 1);
        if energies.is_empty() {
            return Err(Error::FitFailure("empty energy range".into()));
        }
        let mut actions = Vec::with_capacity(energies.len());
        for &e in energies {
            actions.push(action_by_quadrature(sys, t0, e, q_scan)?);
        }
        let coeffs = polyfit(&actions, energies, fit_degree)?;
        Ok(ActionAngleChart {
            sys: sys.clone(),
            t0,
            q_scan,
            h_in_actions: coeffs,
        })
    }

    pub fn h_of_action(&self, action: f64) -> f64 {
        self.h_in_actions
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * action + c)
    }

    pub fn dh_d_action(&self, action: f64) -> f64 {
        self.h_in_actions
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (j, c)| acc * action + j as f64 * c)
    }

    /// Time of flight from the left turning point to `q` along the upper
    /// momentum branch.
    fn time_of_flight(&self, orbit: &OrbitGeometry, q_to: f64) -> Result<f64> {
        let mid = 0.5 * (orbit.q_minus + orbit.q_plus);
        let half = 0.5 * (orbit.q_plus - orbit.q_minus);
        // clamp into [-1,1] against rounding at the turning points
        let theta_to = ((q_to - mid) / half).clamp(-1.0, 1.0).asin();
        let value_at = |theta: f64| -> Result<f64> {
            let q = mid + half * theta.sin();
            let p = momentum_at(&self.sys, self.t0, orbit.energy, q)?;
            let vars = self.sys.env(self.t0, &[q], &[p]);
            let v = self.sys.dh_dp[0].eval(&vars)?;
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::QuadratureFailure(
                    "velocity not positive on the upper branch".into(),
                ));
            }
            Ok(half * theta.cos() / v)
        };
        let integrand = |theta: f64| -> Result<f64> {
            match value_at(theta) {
                Ok(v) => Ok(v),
                // quadrature nodes hugging a turning point can see the
                // momentum rounded to zero; the integrand is regular there,
                // so sample it a hair toward the interior instead
                Err(_) => value_at(theta - 1e-3 * theta.signum()),
            }
        };
        gl_integrate(&integrand, -std::f64::consts::FRAC_PI_2, theta_to, 160)
    }

    fn period(&self, orbit: &OrbitGeometry) -> Result<f64> {
        Ok(2.0 * self.time_of_flight(orbit, orbit.q_plus)?)
    }

    /// Forward chart map `(q, p) -> (phi, I)` with `phi in [0, 2pi)`.
    pub fn forward(&self, q: f64, p: f64) -> Result<(f64, f64)> {
        let energy = self.sys.eval_h(self.t0, &[q], &[p])?;
        let orbit = turning_points(&self.sys, self.t0, energy, self.q_scan)?;
        let action = action_by_quadrature(&self.sys, self.t0, energy, self.q_scan)?;
        let period = self.period(&orbit)?;
        let tau = self.time_of_flight(&orbit, q)?;
        let tau = if p >= 0.0 { tau } else { period - tau };
        let mut phi = 2.0 * std::f64::consts::PI * tau / period;
        if phi >= 2.0 * std::f64::consts::PI {
            phi -= 2.0 * std::f64::consts::PI;
        }
        Ok((phi, action))
    }

    /// Inverse chart map `(phi, I) -> (q, p)`, inverting the action fit for
    /// the energy and the time-of-flight for the position.
    pub fn inverse(&self, phi: f64, action: f64) -> Result<(f64, f64)> {
        let energy = self.h_of_action(action);
        let orbit = turning_points(&self.sys, self.t0, energy, self.q_scan)?;
        let period = self.period(&orbit)?;
        let phi = phi.rem_euclid(2.0 * std::f64::consts::PI);
        let (tau, upper) = if phi <= std::f64::consts::PI {
            (period * phi / (2.0 * std::f64::consts::PI), true)
        } else {
            (
                period - period * phi / (2.0 * std::f64::consts::PI),
                false,
            )
        };
        let q = bisect(
            &|q: f64| Ok(self.time_of_flight(&orbit, q)? - tau),
            orbit.q_minus,
            orbit.q_plus,
            1e-12,
        )?;
        let p = momentum_at(&self.sys, self.t0, energy, q)?;
        Ok((q, if upper { p } else { -p }))
    }
}

/// Least-squares polynomial fit `y approx sum_j c_j x^j` by normal
/// equations with a pivot-ratio condition guard.
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Result<Vec<f64>> {
    let n = degree + 1;
    if xs.len() < n {
        return Err(Error::FitFailure(format!(
            "{} samples cannot determine degree-{} fit",
            xs.len(),
            degree
        )));
    }
    let mut ata = vec![vec![0.0; n]; n];
    let mut atb = vec![0.0; n];
    for (&x, &y) in xs.iter().zip(ys) {
        let mut powers = vec![1.0; n];
        for j in 1..n {
            powers[j] = powers[j - 1] * x;
        }
        for i in 0..n {
            atb[i] += powers[i] * y;
            for j in 0..n {
                ata[i][j] += powers[i] * powers[j];
            }
        }
    }
    // Gaussian elimination with partial pivoting
    let mut max_pivot = 0.0f64;
    let mut min_pivot = f64::INFINITY;
    for col in 0..n {
        let (pivot_row, pivot_val) = (col..n)
            .map(|r| (r, ata[r][col].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if pivot_val == 0.0 {
            return Err(Error::FitFailure("singular normal equations".into()));
        }
        max_pivot = max_pivot.max(pivot_val);
        min_pivot = min_pivot.min(pivot_val);
        ata.swap(col, pivot_row);
        atb.swap(col, pivot_row);
        for row in (col + 1)..n {
            let factor = ata[row][col] / ata[col][col];
            for j in col..n {
                ata[row][j] -= factor * ata[col][j];
            }
            atb[row] -= factor * atb[col];
        }
    }
    if max_pivot / min_pivot > 1e12 {
        return Err(Error::FitFailure(format!(
            "normal equations ill-conditioned (pivot ratio {:e})",
            max_pivot / min_pivot
        )));
    }
    let mut coeffs = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = atb[row];
        for j in (row + 1)..n {
            acc -= ata[row][j] * coeffs[j];
        }
        coeffs[row] = acc / ata[row][row];
    }
    Ok(coeffs)
}

/// One row of the frequency-correspondence report.
#[derive(Debug, Clone)]
pub struct FrequencyRow {
    pub n: i64,
    pub classical_frequency: f64,
    pub quantum_spacing: f64,
}

#[derive(Debug, Clone)]
pub struct FrequencyReport {
    pub fit_coefficients: Vec<f64>,
    pub rows: Vec<FrequencyRow>,
    pub max_discrepancy: f64,
}

/// Compares the classical frequency `dH/dI` at the midpoint action against
/// the quantum level spacing of the fitted Hamiltonian on the window.
pub fn frequency_correspondence(
    sys: &SystemDef,
    rep: &Representation,
    w: TruncationWindow,
    energies: &[f64],
    fit_degree: usize,
    q_scan: f64,
) -> Result<FrequencyReport> {
    assert_eq!(sys.m, 1);
    assert_eq!(w.m, 1);
    if energies.is_empty() {
        return Err(Error::FitFailure("empty energy range".into()));
    }
    let chart = ActionAngleChart::build(sys, 0.0, energies, fit_degree, q_scan)?;
    let poly = ActionPolynomial::from_terms(
        1,
        chart
            .h_in_actions
            .iter()
            .enumerate()
            .map(|(j, &c)| (vec![j as u32], c)),
    );
    let h_fit = HamiltonianSpec::polynomial(poly);
    let hop = quantize_hamiltonian(&h_fit, rep, w)?;
    let diag = hop.diagonal();
    let mut rows = Vec::new();
    let mut max_disc = 0.0f64;
    for n in -w.n_max..w.n_max {
        let pos = w
            .position(&crate::fourier::MultiIndex::new(vec![n]))
            .unwrap();
        let pos_next = w
            .position(&crate::fourier::MultiIndex::new(vec![n + 1]))
            .unwrap();
        let spacing = diag[pos_next].re - diag[pos].re;
        let action_mid = n as f64 - rep.effective_offset(0) + 0.5;
        let freq = chart.dh_d_action(action_mid);
        max_disc = max_disc.max((freq - spacing).abs());
        rows.push(FrequencyRow {
            n,
            classical_frequency: freq,
            quantum_spacing: spacing,
        });
    }
    Ok(FrequencyReport {
        fit_coefficients: chart.h_in_actions,
        rows,
        max_discrepancy: max_disc,
    })
}

// ---- canonical shift ----------------------------------------------------

/// Point of the generalized action-angle chart `(x^a, phi^i, I_a, I_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint {
    pub x: Vec<f64>,
    pub phi: Vec<f64>,
    pub i_x: Vec<f64>,
    pub i_phi: Vec<f64>,
}

/// Canonical shift generated by smooth functions `F_a(I_1..I_m)` of the
/// torus actions: `x' = x`, `phi'^i = phi^i + x^a dF_a/dI_i`,
/// `I'_a = I_a - F_a`, `I'_i = I_i`.
#[derive(Debug, Clone)]
pub struct CanonicalShift {
    pub f: Vec<Expr>,
    df: Vec<Vec<Expr>>,
    m: usize,
}

impl CanonicalShift {
    /// `f[a]` are expressions in the symbols `I1..Im`.
    pub fn new(f: Vec<Expr>, m: usize) -> Self {
        let df = f
            .iter()
            .map(|fa| (1..=m).map(|i| fa.diff(&format!("I{i}"))).collect())
            .collect();
        CanonicalShift { f, df, m }
    }

    fn action_env(&self, i_phi: &[f64]) -> HashMap<String, f64> {
        i_phi
            .iter()
            .enumerate()
            .map(|(i, &v)| (format!("I{}", i + 1), v))
            .collect()
    }

    pub fn apply(&self, point: &ChartPoint) -> Result<ChartPoint> {
        assert_eq!(point.phi.len(), self.m);
        assert_eq!(point.x.len(), self.f.len());
        assert_eq!(point.i_x.len(), self.f.len());
        let vars = self.action_env(&point.i_phi);
        let mut phi = point.phi.clone();
        for (a, dfa) in self.df.iter().enumerate() {
            for (i, dfi) in dfa.iter().enumerate() {
                phi[i] += point.x[a] * dfi.eval(&vars)?;
            }
        }
        let mut i_x = point.i_x.clone();
        for (a, fa) in self.f.iter().enumerate() {
            i_x[a] -= fa.eval(&vars)?;
        }
        Ok(ChartPoint {
            x: point.x.clone(),
            phi,
            i_x,
            i_phi: point.i_phi.clone(),
        })
    }

    /// Max-norm residual of the symplectic Jacobian test `J^T Omega J - Omega`
    /// at the given point, with a central-difference Jacobian.
    pub fn symplectic_defect(&self, point: &ChartPoint, step: f64) -> Result<f64> {
        let l = self.f.len();
        let m = self.m;
        let dim = 2 * (l + m);
        let pack = |p: &ChartPoint| -> Vec<f64> {
            p.x.iter()
                .chain(&p.phi)
                .chain(&p.i_x)
                .chain(&p.i_phi)
                .copied()
                .collect()
        };
        let unpack = |z: &[f64]| -> ChartPoint {
            ChartPoint {
                x: z[..l].to_vec(),
                phi: z[l..l + m].to_vec(),
                i_x: z[l + m..2 * l + m].to_vec(),
                i_phi: z[2 * l + m..].to_vec(),
            }
        };
        let z0 = pack(point);
        let mut jac = vec![vec![0.0; dim]; dim];
        for j in 0..dim {
            let mut zp = z0.clone();
            zp[j] += step;
            let mut zm = z0.clone();
            zm[j] -= step;
            let fp = pack(&self.apply(&unpack(&zp))?);
            let fm = pack(&self.apply(&unpack(&zm))?);
            for i in 0..dim {
                jac[i][j] = (fp[i] - fm[i]) / (2.0 * step);
            }
        }
        // Omega for ordering (coords, momenta): [[0, Id], [-Id, 0]]
        let half = l + m;
        let omega = |i: usize, j: usize| -> f64 {
            if j == i + half {
                1.0
            } else if i == j + half {
                -1.0
            } else {
                0.0
            }
        };
        let mut max = 0.0f64;
        for a in 0..dim {
            for b in 0..dim {
                let mut acc = 0.0;
                for i in 0..dim {
                    for j in 0..dim {
                        acc += jac[i][a] * omega(i, j) * jac[j][b];
                    }
                }
                max = max.max((acc - omega(a, b)).abs());
            }
        }
        Ok(max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn oscillator() -> SystemDef {
        SystemDef::new(
            1,
            parse("0.5*(p1^2 + q1^2)").unwrap(),
            vec![parse("0.5*(p1^2 + q1^2)").unwrap()],
        )
    }

    #[test]
    fn oscillator_orbit_closes() {
        let sys = oscillator();
        let x0 = ClassicalState {
            t: 0.0,
            q: vec![1.0],
            p: vec![0.0],
        };
        let traj = hamilton_flow(&sys, &x0, 2.0 * std::f64::consts::PI, 1e-3).unwrap();
        let last = traj.last().unwrap();
        assert!((last.q[0] - 1.0).abs() < 1e-6);
        assert!(last.p[0].abs() < 1e-6);
    }

    #[test]
    fn zero_hamiltonian_constant_state() {
        let sys = SystemDef::new(1, Expr::constant(0.0), vec![]);
        let x0 = ClassicalState {
            t: 0.0,
            q: vec![0.3],
            p: vec![-0.7],
        };
        let traj = hamilton_flow(&sys, &x0, 1.0, 0.1).unwrap();
        for s in traj {
            assert_eq!(s.q[0], 0.3);
            assert_eq!(s.p[0], -0.7);
        }
    }

    #[test]
    fn free_particle_drift() {
        let sys = SystemDef::new(1, parse("0.5*p1^2").unwrap(), vec![]);
        let x0 = ClassicalState {
            t: 0.0,
            q: vec![0.0],
            p: vec![1.0],
        };
        let traj = hamilton_flow(&sys, &x0, 1.0, 1e-3).unwrap();
        let last = traj.last().unwrap();
        assert!((last.q[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn extended_flow_p0_constant_for_autonomous() {
        let sys = oscillator();
        let x0 = ExtendedState {
            t: 0.0,
            q: vec![1.0],
            p: vec![0.0],
            p0: -0.5,
        };
        let traj = extended_flow(&sys, &x0, 2.0, 1e-3).unwrap();
        for s in &traj {
            assert_eq!(s.p0, -0.5);
        }
    }

    #[test]
    fn extended_flow_hstar_conserved_driven() {
        // H = (p^2+q^2)/2 + 0.1 t: p0 drifts at rate -0.1, H* conserved
        let sys = SystemDef::new(1, parse("0.5*(p1^2 + q1^2) + 0.1*t").unwrap(), vec![]);
        let x0 = ExtendedState {
            t: 0.0,
            q: vec![1.0],
            p: vec![0.0],
            p0: 0.0,
        };
        let traj = extended_flow(&sys, &x0, 2.0, 1e-3).unwrap();
        let hstar0 = x0.p0 + sys.eval_h(0.0, &x0.q, &x0.p).unwrap();
        for s in &traj {
            let hstar = s.p0 + sys.eval_h(s.t, &s.q, &s.p).unwrap();
            assert!((hstar - hstar0).abs() < 1e-8);
        }
        let last = traj.last().unwrap();
        assert!((last.p0 - (-0.1 * 2.0)).abs() < 1e-8);
    }

    #[test]
    fn extended_flow_projects_onto_hamilton_flow() {
        let sys = SystemDef::new(1, parse("0.5*(p1^2 + q1^2) + 0.1*t").unwrap(), vec![]);
        let x0c = ClassicalState {
            t: 0.0,
            q: vec![0.4],
            p: vec![-0.2],
        };
        let x0e = ExtendedState {
            t: 0.0,
            q: vec![0.4],
            p: vec![-0.2],
            p0: 0.0,
        };
        let tc = hamilton_flow(&sys, &x0c, 1.5, 1e-3).unwrap();
        let te = extended_flow(&sys, &x0e, 1.5, 1e-3).unwrap();
        assert_eq!(tc.len(), te.len());
        for (a, b) in tc.iter().zip(&te) {
            assert!((a.q[0] - b.q[0]).abs() <= 1e-12);
            assert!((a.p[0] - b.p[0]).abs() <= 1e-12);
        }
    }

    #[test]
    fn first_integral_drift_energy_and_nonintegral() {
        let sys = SystemDef::new(
            1,
            parse("0.5*(p1^2 + q1^2)").unwrap(),
            vec![
                parse("0.5*(p1^2 + q1^2)").unwrap(),
                parse("3.5").unwrap(),
                parse("q1").unwrap(),
            ],
        );
        let x0 = ClassicalState {
            t: 0.0,
            q: vec![1.0],
            p: vec![0.0],
        };
        let traj = hamilton_flow(&sys, &x0, 2.0 * std::f64::consts::PI, 1e-3).unwrap();
        let drifts = first_integral_drift(&sys, &traj).unwrap();
        assert!(drifts[0] < 1e-8);
        assert_eq!(drifts[1], 0.0);
        // q swings across the full amplitude
        assert!((drifts[2] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn action_of_circular_oscillator_equals_energy() {
        let sys = oscillator();
        for e in [0.5, 1.0, 2.25] {
            let action = action_by_quadrature(&sys, 0.0, e, 10.0).unwrap();
            assert!(
                (action - e).abs() <= 1e-8 * e.max(1.0),
                "I({e}) = {action}"
            );
        }
    }

    #[test]
    fn action_vanishes_at_low_energy() {
        let sys = oscillator();
        let action = action_by_quadrature(&sys, 0.0, 1e-8, 10.0).unwrap();
        assert!(action < 1e-7);
    }

    #[test]
    fn open_orbit_detected() {
        let sys = SystemDef::new(1, parse("0.5*p1^2").unwrap(), vec![]);
        assert!(matches!(
            action_by_quadrature(&sys, 0.0, 1.0, 10.0),
            Err(Error::OpenOrbit)
        ));
    }

    #[test]
    fn quartic_action_positive_and_scaling() {
        // H = p^2/2 + q^4/4: exact I(E) proportional to E^(3/4)
        let sys = SystemDef::new(1, parse("0.5*p1^2 + 0.25*q1^4").unwrap(), vec![]);
        let i1 = action_by_quadrature(&sys, 0.0, 1.0, 10.0).unwrap();
        let i2 = action_by_quadrature(&sys, 0.0, 2.0, 10.0).unwrap();
        assert!(i1 > 0.0);
        assert!((i2 / i1 - 2f64.powf(0.75)).abs() < 1e-7);
    }

    #[test]
    fn chart_round_trip_and_linear_angle() {
        let sys = oscillator();
        let energies: Vec<f64> = (1..=8).map(|i| 0.25 * i as f64).collect();
        let chart = ActionAngleChart::build(&sys, 0.0, &energies, 2, 10.0).unwrap();
        // round trip
        for (q, p) in [(1.0, 0.0), (0.3, 0.8), (-0.5, -0.4)] {
            let (phi, action) = chart.forward(q, p).unwrap();
            let (q2, p2) = chart.inverse(phi, action).unwrap();
            assert!((q - q2).abs() < 1e-6, "q {q} vs {q2}");
            assert!((p - p2).abs() < 1e-6, "p {p} vs {p2}");
        }
        // push a trajectory through: action constant, angle linear
        let x0 = ClassicalState {
            t: 0.0,
            q: vec![1.0],
            p: vec![0.0],
        };
        let traj = hamilton_flow(&sys, &x0, 3.0, 1e-3).unwrap();
        let (phi0, i0) = chart.forward(traj[0].q[0], traj[0].p[0]).unwrap();
        let omega = chart.dh_d_action(i0);
        for s in traj.iter().step_by(400) {
            let (phi, action) = chart.forward(s.q[0], s.p[0]).unwrap();
            assert!((action - i0).abs() <= 1e-6);
            let expected = (phi0 + omega * s.t).rem_euclid(2.0 * std::f64::consts::PI);
            let mut diff = (phi - expected).abs();
            diff = diff.min((2.0 * std::f64::consts::PI - diff).abs());
            assert!(diff <= 1e-5, "angle residual {diff} at t={}", s.t);
        }
    }

    #[test]
    fn oscillator_frequency_correspondence() {
        let sys = oscillator();
        let rep = Representation::trivial(1);
        let w = TruncationWindow::new(1, 4);
        let energies: Vec<f64> = (1..=8).map(|i| 0.3 * i as f64).collect();
        let report = frequency_correspondence(&sys, &rep, w, &energies, 2, 10.0).unwrap();
        // H(I) = I exactly: frequency 1, spacing 1
        assert!(report.max_discrepancy < 1e-9);
    }

    #[test]
    fn empty_energy_range_errors() {
        let sys = oscillator();
        let rep = Representation::trivial(1);
        let w = TruncationWindow::new(1, 2);
        assert!(matches!(
            frequency_correspondence(&sys, &rep, w, &[], 2, 10.0),
            Err(Error::FitFailure(_))
        ));
    }

    #[test]
    fn canonical_shift_identity_when_f_zero() {
        let shift = CanonicalShift::new(vec![Expr::constant(0.0)], 1);
        let pt = ChartPoint {
            x: vec![0.7],
            phi: vec![1.2],
            i_x: vec![0.4],
            i_phi: vec![2.0],
        };
        assert_eq!(shift.apply(&pt).unwrap(), pt);
    }

    #[test]
    fn canonical_shift_rotating_frame() {
        // 1-DOF, F(I) = I, x = t: phi' = phi + t, I'_0 = I_0 - I
        let shift = CanonicalShift::new(vec![parse("I1").unwrap()], 1);
        let t = 0.9;
        let pt = ChartPoint {
            x: vec![t],
            phi: vec![0.3],
            i_x: vec![1.5],
            i_phi: vec![0.8],
        };
        let out = shift.apply(&pt).unwrap();
        assert!((out.phi[0] - (0.3 + t)).abs() < 1e-15);
        assert!((out.i_x[0] - (1.5 - 0.8)).abs() < 1e-15);
        assert_eq!(out.i_phi[0], 0.8);
    }

    #[test]
    fn canonical_shift_symplectic_jacobian() {
        let shift = CanonicalShift::new(
            vec![parse("I1^2 + 0.5*I2").unwrap(), parse("I1*I2").unwrap()],
            2,
        );
        let pt = ChartPoint {
            x: vec![0.2, -0.4],
            phi: vec![1.0, 2.0],
            i_x: vec![0.5, 0.1],
            i_phi: vec![1.3, -0.7],
        };
        let defect = shift.symplectic_defect(&pt, 1e-6).unwrap();
        assert!(defect <= 1e-9, "defect {defect}");
    }
}
