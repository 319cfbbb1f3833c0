//! Seeded invariant suites behind `tq check`, plus the random fixture
//! generators shared with the integration tests. All randomness flows from
//! one explicit seed, so a repeated run reproduces the report byte for byte.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tq_core::classical::{action_by_quadrature, CanonicalShift, ChartPoint, SystemDef};
use tq_core::expr::{self, Expr};
use tq_core::fourier::{FourierPolynomial, MultiIndex, TruncationWindow, WaveFunction};
use tq_core::holonomy::{holonomy_operator, ParameterPath, PerturbationSpec};
use tq_core::quantum::{
    apply_polarized, commutator, poisson_bracket, quantize_affine, AffineObservable,
    AnnulusFunction, LinearOperator, PrequantumOperator, Representation,
};
use tq_core::spectra::{evolve, ActionPolynomial, HamiltonianSpec};
use tq_core::Result;

use crate::report::RunReport;

/// Dyadic rational in [-1/2, 1/2] (a multiple of 1/64), so that linear
/// algebra over these inputs carries no rounding.
pub fn dyadic(rng: &mut impl Rng) -> f64 {
    rng.gen_range(-32i32..=32) as f64 / 64.0
}

/// Random real-valued Fourier polynomial with the given bandwidth: a few
/// random modes with dyadic coefficients, closed under conjugation.
pub fn random_real_fourier(rng: &mut impl Rng, m: usize, bandwidth: i64) -> FourierPolynomial {
    let mut f = FourierPolynomial::constant(m, Complex64::new(dyadic(rng), 0.0));
    for _ in 0..3 {
        let n: Vec<i64> = (0..m).map(|_| rng.gen_range(-bandwidth..=bandwidth)).collect();
        let c = Complex64::new(dyadic(rng), dyadic(rng));
        let neg = MultiIndex::new(n.iter().map(|x| -x).collect());
        let term = FourierPolynomial::basis(MultiIndex::new(n))
            .scale(c)
            .add(&FourierPolynomial::basis(neg).scale(c.conj()))
            .unwrap();
        f = f.add(&term).unwrap();
    }
    f
}

/// Random real affine observable `a^k(phi) I_k + b(phi)`.
pub fn random_affine(rng: &mut impl Rng, m: usize, bandwidth: i64) -> AffineObservable {
    let a = (0..m).map(|_| random_real_fourier(rng, m, bandwidth)).collect();
    let b = random_real_fourier(rng, m, bandwidth);
    AffineObservable::new(a, b).unwrap()
}

fn dirac_residual(rng: &mut impl Rng) -> Result<f64> {
    let m = 2;
    let w = TruncationWindow::new(m, 6);
    let rep = Representation::new(vec![0.3, 0.7], vec![false, false])?;
    let mut max = 0.0f64;
    for _ in 0..5 {
        let f = random_affine(rng, m, 2);
        let g = random_affine(rng, m, 2);
        let fh = quantize_affine(&f, &rep, w)?;
        let gh = quantize_affine(&g, &rep, w)?;
        let bracket = quantize_affine(&poisson_bracket(&f, &g)?, &rep, w)?;
        let residual = commutator(&fh, &gh)?
            .add(&bracket.scale(Complex64::new(0.0, 1.0)))?;
        let margin = f.bandwidth() + g.bandwidth();
        max = max.max(residual.max_abs_on_interior_cols(margin));
    }
    Ok(max)
}

fn prequantum_polarized_gap(rng: &mut impl Rng) -> Result<f64> {
    let m = 2;
    let rep = Representation::new(vec![0.25, 0.5], vec![false, false])?;
    let mut max = 0.0f64;
    for _ in 0..5 {
        let f = random_affine(rng, m, 2);
        let rho = random_real_fourier(rng, m, 2);
        let pre = PrequantumOperator::new(f.clone(), rep.clone())?
            .apply(&AnnulusFunction::from_fourier(rho.clone()))?;
        let mut half_form = FourierPolynomial::zero(m);
        for k in 0..m {
            half_form = half_form.add(&f.a[k].partial_phi(k)?)?;
        }
        let corrected = pre
            .term(&[0, 0])
            .sub(&half_form.scale(Complex64::new(0.0, 0.5)).multiply(&rho)?)?;
        let pol = apply_polarized(&f, &rep, &rho)?;
        let gap = corrected
            .sub(&pol)?
            .terms()
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max);
        max = max.max(gap);
    }
    Ok(max)
}

fn evolution_defects(rng: &mut impl Rng) -> Result<(f64, f64)> {
    let m = 1;
    let rep = Representation::new(vec![0.3], vec![false])?;
    let h = HamiltonianSpec::polynomial(ActionPolynomial::from_terms(
        m,
        vec![(vec![2], 1.0), (vec![1], 0.5)],
    ));
    let mut terms = Vec::new();
    for n in -3i64..=3 {
        terms.push((
            MultiIndex::new(vec![n]),
            Complex64::new(dyadic(rng), dyadic(rng)),
        ));
    }
    let psi = WaveFunction::new(FourierPolynomial::from_terms(m, terms)?, vec![false])?;
    let norm0 = psi.norm();
    let once = evolve(&evolve(&psi, &h, &rep, 0.7)?, &h, &rep, 0.5)?;
    let direct = evolve(&psi, &h, &rep, 1.2)?;
    let unitarity = (direct.norm() - norm0).abs();
    let group = once
        .poly
        .sub(&direct.poly)?
        .terms()
        .map(|(_, c)| c.norm())
        .fold(0.0, f64::max);
    Ok((unitarity, group))
}

fn holonomy_loop_defect() -> Result<f64> {
    let w = TruncationWindow::new(1, 3);
    let rep = Representation::new(vec![0.3], vec![false])?;
    let path = ParameterPath::new(vec![
        (0.0, vec![0.0]),
        (0.4, vec![1.0]),
        (1.0, vec![0.0]),
    ])?;
    let lam = vec![FourierPolynomial::constant(1, Complex64::new(0.8, 0.0)); 3];
    let p = PerturbationSpec::new(1, vec![0], vec![vec![lam]], 1, 3)?;
    let u = holonomy_operator(&p, &rep, w, &path, 1024)?;
    Ok(u.sub(&LinearOperator::identity(w))?.max_abs())
}

fn classical_action_defect() -> Result<f64> {
    let h = expr::parse("(q1^2 + p1^2)/2")?;
    let sys = SystemDef::new(1, h, vec![]);
    let mut max = 0.0f64;
    for &energy in &[0.5, 1.0, 2.0] {
        let action = action_by_quadrature(&sys, 0.0, energy, 4.0)?;
        max = max.max((action - energy).abs());
    }
    Ok(max)
}

fn symplectic_defect(rng: &mut impl Rng) -> Result<f64> {
    let m = 2;
    let mut max = 0.0f64;
    for _ in 0..5 {
        let f: Vec<Expr> = (0..2)
            .map(|_| {
                let c1 = dyadic(rng);
                let c2 = dyadic(rng);
                expr::parse(&format!("{c1}*I1^2 + {c2}*I1*I2")).unwrap()
            })
            .collect();
        let shift = CanonicalShift::new(f, m);
        let point = ChartPoint {
            x: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            phi: vec![rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0)],
            i_x: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            i_phi: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
        };
        max = max.max(shift.symplectic_defect(&point, 1e-5)?);
    }
    Ok(max)
}

/// Runs every invariant suite with the given seed and collects the report.
pub fn run_check(seed: u64) -> Result<RunReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = RunReport::new("check", seed);
    report.push_check("dirac-residual", dirac_residual(&mut rng)?, 1e-10);
    report.push_check(
        "prequantum-polarized-identity",
        prequantum_polarized_gap(&mut rng)?,
        0.0,
    );
    let (unitarity, group) = evolution_defects(&mut rng)?;
    report.push_check("evolution-unitarity", unitarity, 1e-12);
    report.push_check("evolution-group-law", group, 1e-12);
    report.push_check("holonomy-loop-identity", holonomy_loop_defect()?, 1e-8);
    report.push_check("classical-action-oscillator", classical_action_defect()?, 1e-8);
    report.push_check("canonical-shift-symplectic", symplectic_defect(&mut rng)?, 1e-9);
    Ok(report)
}
