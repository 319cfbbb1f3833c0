//! Quantization of Hamiltonians depending only on the actions: exact
//! spectra `E_(n) = H(n - lambda)`, degeneracy detection, and closed-form
//! time evolution by coefficient-wise phases.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::{FourierPolynomial, MultiIndex, TruncationWindow, WaveFunction};
use crate::quantum::{LinearOperator, Representation};

/// Real multivariate polynomial in the action variables, keyed by monomial
/// multi-degree.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionPolynomial {
    dim: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl ActionPolynomial {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1);
        ActionPolynomial {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn from_terms<I>(dim: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        let mut p = Self::new(dim);
        for (d, c) in terms {
            p.add_term(d, c);
        }
        p
    }

    pub fn add_term(&mut self, degree: Vec<u32>, coeff: f64) {
        assert_eq!(degree.len(), self.dim);
        let v = self.terms.get(&degree).copied().unwrap_or(0.0) + coeff;
        if v == 0.0 {
            self.terms.remove(&degree);
        } else {
            self.terms.insert(degree, v);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &f64)> {
        self.terms.iter()
    }

    pub fn eval(&self, actions: &[f64]) -> f64 {
        assert_eq!(actions.len(), self.dim);
        self.terms
            .iter()
            .map(|(d, c)| {
                c * d
                    .iter()
                    .zip(actions)
                    .map(|(&deg, &x)| x.powi(deg as i32))
                    .product::<f64>()
            })
            .sum()
    }

    /// Highest power of the action variable on `axis` across monomials.
    pub fn degree_in(&self, axis: usize) -> u32 {
        self.terms.keys().map(|d| d[axis]).max().unwrap_or(0)
    }

    /// Partial derivative with respect to the action on `axis`.
    pub fn partial(&self, axis: usize) -> ActionPolynomial {
        let mut out = ActionPolynomial::new(self.dim);
        for (d, c) in &self.terms {
            if d[axis] == 0 {
                continue;
            }
            let mut dd = d.clone();
            dd[axis] -= 1;
            out.add_term(dd, c * d[axis] as f64);
        }
        out
    }
}

/// Whitelisted analytic forms built on an inner action polynomial, with
/// explicit domain guards evaluated on the shifted lattice.
#[derive(Debug, Clone, PartialEq)]
pub enum HamiltonianKind {
    Polynomial,
    /// `exp(p(I))`
    Exp,
    /// `sqrt(p(I))`, defined only where the inner polynomial is nonnegative
    Sqrt,
    /// `1 / p(I)`, defined only where the inner polynomial does not vanish
    Reciprocal,
}

/// Hamiltonian depending only on the actions: a polynomial, or a
/// whitelisted analytic function of a polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSpec {
    pub kind: HamiltonianKind,
    pub inner: ActionPolynomial,
}

impl HamiltonianSpec {
    pub fn polynomial(p: ActionPolynomial) -> Self {
        HamiltonianSpec {
            kind: HamiltonianKind::Polynomial,
            inner: p,
        }
    }

    pub fn analytic(kind: HamiltonianKind, p: ActionPolynomial) -> Self {
        HamiltonianSpec { kind, inner: p }
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn eval(&self, actions: &[f64]) -> Result<f64> {
        let v = self.inner.eval(actions);
        match self.kind {
            HamiltonianKind::Polynomial => Ok(v),
            HamiltonianKind::Exp => Ok(v.exp()),
            HamiltonianKind::Sqrt => {
                if v < 0.0 {
                    Err(Error::AnalyticDomainViolation(format!(
                        "sqrt argument {v} < 0 at actions {actions:?}"
                    )))
                } else {
                    Ok(v.sqrt())
                }
            }
            HamiltonianKind::Reciprocal => {
                if v == 0.0 {
                    Err(Error::AnalyticDomainViolation(format!(
                        "reciprocal argument vanishes at actions {actions:?}"
                    )))
                } else {
                    Ok(1.0 / v)
                }
            }
        }
    }

    /// True when H has no dependence on the action along `axis`.
    pub fn independent_of(&self, axis: usize) -> bool {
        self.inner.degree_in(axis) == 0
    }

    fn check_rep(&self, rep: &Representation) -> Result<()> {
        if rep.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: rep.dim(),
            });
        }
        Ok(())
    }

    /// Energy at lattice index `n`: `H(n_k - lambda_k [+ 1/2])`.
    pub fn energy(&self, rep: &Representation, n: &MultiIndex) -> Result<f64> {
        self.check_rep(rep)?;
        if n.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: n.dim(),
            });
        }
        let actions: Vec<f64> = n
            .0
            .iter()
            .enumerate()
            .map(|(k, &nk)| nk as f64 - rep.effective_offset(k))
            .collect();
        self.eval(&actions)
    }
}

/// One spectral line: lattice index and its exact energy.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEntry {
    pub n: MultiIndex,
    pub energy: f64,
}

/// Diagonal operator with entries `E_(n)`; Hermitian and commuting with
/// every action operator by construction. The analytic domain guard runs
/// over the full shifted lattice at build time.
pub fn quantize_hamiltonian(
    h: &HamiltonianSpec,
    rep: &Representation,
    w: TruncationWindow,
) -> Result<LinearOperator> {
    if h.dim() != w.m {
        return Err(Error::DimensionMismatch {
            expected: w.m,
            got: h.dim(),
        });
    }
    let mut diag = Vec::with_capacity(w.size());
    for n in w.iter() {
        diag.push(Complex64::new(h.energy(rep, &n)?, 0.0));
    }
    Ok(LinearOperator::from_diagonal(w, &diag))
}

/// Spectrum over the window, sorted by energy then lattice index. Every
/// window index appears exactly once; no restriction to the classical
/// action domain is applied.
pub fn spectrum(
    h: &HamiltonianSpec,
    rep: &Representation,
    w: TruncationWindow,
) -> Result<Vec<SpectrumEntry>> {
    let mut entries = Vec::with_capacity(w.size());
    for n in w.iter() {
        let energy = h.energy(rep, &n)?;
        entries.push(SpectrumEntry { n, energy });
    }
    entries.sort_by(|a, b| {
        a.energy
            .total_cmp(&b.energy)
            .then_with(|| a.n.cmp(&b.n))
    });
    Ok(entries)
}

/// Groups spectral lines whose energies chain within `tol` of each other;
/// classes come back sorted by representative energy.
pub fn degeneracy_classes(entries: &[SpectrumEntry], tol: f64) -> Vec<Vec<SpectrumEntry>> {
    assert!(tol >= 0.0);
    let mut sorted: Vec<SpectrumEntry> = entries.to_vec();
    sorted.sort_by(|a, b| a.energy.total_cmp(&b.energy).then_with(|| a.n.cmp(&b.n)));
    let mut classes: Vec<Vec<SpectrumEntry>> = Vec::new();
    for e in sorted {
        match classes.last_mut() {
            Some(class) if (e.energy - class.last().unwrap().energy).abs() <= tol => {
                class.push(e);
            }
            _ => classes.push(vec![e]),
        }
    }
    classes
}

/// Closed-form Schroedinger evolution: `c_n -> exp(-i E_(n) t) c_n`.
pub fn evolve(
    psi0: &WaveFunction,
    h: &HamiltonianSpec,
    rep: &Representation,
    t: f64,
) -> Result<WaveFunction> {
    if psi0.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            got: psi0.dim(),
        });
    }
    if psi0.half_shift != rep.half_shift {
        return Err(Error::RepresentationMismatch);
    }
    let mut terms = Vec::new();
    for (n, c) in psi0.poly.terms() {
        let e = h.energy(rep, n)?;
        terms.push((n.clone(), c * Complex64::from_polar(1.0, -e * t)));
    }
    WaveFunction::new(
        FourierPolynomial::from_terms(psi0.dim(), terms)?,
        psi0.half_shift.clone(),
    )
}
