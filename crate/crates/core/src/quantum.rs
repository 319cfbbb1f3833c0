//! Quantized operators for the algebra of observables affine in the action
//! variables: diagonal action operators, multiplication (shift) operators,
//! the polarized operator for affine observables, the prequantum operator on
//! the polynomial-Fourier ring, commutators and the symbolic Poisson bracket.

use std::collections::BTreeMap;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::{fmt_f64_17, FourierPolynomial, TruncationWindow, WaveFunction};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Connection data selecting a representation of the quantum algebra: real
/// offsets `lambda_k` plus the per-axis metalinear half-shift flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub lambda: Vec<f64>,
    pub half_shift: Vec<bool>,
}

impl Representation {
    pub fn new(lambda: Vec<f64>, half_shift: Vec<bool>) -> Result<Self> {
        if lambda.len() != half_shift.len() {
            return Err(Error::DimensionMismatch {
                expected: lambda.len(),
                got: half_shift.len(),
            });
        }
        if lambda.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        Ok(Representation { lambda, half_shift })
    }

    pub fn trivial(m: usize) -> Self {
        Representation {
            lambda: vec![0.0; m],
            half_shift: vec![false; m],
        }
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    /// True when the two connections differ by an integer vector and share
    /// the same half-form bundle; such representations are gauge-conjugate.
    pub fn gauge_equivalent(&self, other: &Representation) -> bool {
        self.dim() == other.dim()
            && self.half_shift == other.half_shift
            && self
                .lambda
                .iter()
                .zip(&other.lambda)
                .all(|(a, b)| (a - b).fract().abs() < 1e-12 || ((a - b).fract().abs() - 1.0).abs() < 1e-12)
    }

    /// Effective action eigenvalue offset on axis `k`: `lambda_k` shifted by
    /// `-1/2` when the half-form bundle is nontrivial on that axis.
    pub fn effective_offset(&self, k: usize) -> f64 {
        self.lambda[k] - if self.half_shift[k] { 0.5 } else { 0.0 }
    }

    /// The unitarily equivalent representation with all half shifts absorbed
    /// into the connection offsets (`half_shift[j]` false, `lambda_j - 1/2`).
    pub fn absorb_half_shifts(&self) -> Representation {
        Representation {
            lambda: (0..self.dim()).map(|k| self.effective_offset(k)).collect(),
            half_shift: vec![false; self.dim()],
        }
    }
}

/// Observable affine in the actions: `f = a^k(phi) I_k + b(phi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineObservable {
    pub a: Vec<FourierPolynomial>,
    pub b: FourierPolynomial,
}

impl AffineObservable {
    pub fn new(a: Vec<FourierPolynomial>, b: FourierPolynomial) -> Result<Self> {
        let m = b.dim();
        if a.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: a.len(),
            });
        }
        for ak in &a {
            if ak.dim() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: ak.dim(),
                });
            }
        }
        Ok(AffineObservable { a, b })
    }

    /// The action coordinate `I_k` itself.
    pub fn action(m: usize, k: usize) -> Result<Self> {
        if k >= m {
            return Err(Error::AxisOutOfRange { axis: k, dim: m });
        }
        let mut a = vec![FourierPolynomial::zero(m); m];
        a[k] = FourierPolynomial::one(m);
        Ok(AffineObservable {
            a,
            b: FourierPolynomial::zero(m),
        })
    }

    /// Pure multiplication observable `b(phi)`.
    pub fn multiplication(b: FourierPolynomial) -> Self {
        let m = b.dim();
        AffineObservable {
            a: vec![FourierPolynomial::zero(m); m],
            b,
        }
    }

    pub fn dim(&self) -> usize {
        self.b.dim()
    }

    /// Largest index shift any component can produce.
    pub fn bandwidth(&self) -> i64 {
        self.a
            .iter()
            .map(|ak| ak.bandwidth())
            .chain(std::iter::once(self.b.bandwidth()))
            .max()
            .unwrap_or(0)
    }

    pub fn is_real(&self) -> bool {
        self.a.iter().all(|ak| ak.is_real_function()) && self.b.is_real_function()
    }

    fn check_dim(&self, other: &AffineObservable) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(())
    }
}

/// Dense finite carrier of an operator over an enumerated truncation window.
/// `leakage` accumulates the amplitude magnitude dropped at the window edge.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    pub window: TruncationWindow,
    pub matrix: Array2<Complex64>,
    pub leakage: f64,
}

impl LinearOperator {
    pub fn zeros(window: TruncationWindow) -> Self {
        let n = window.size();
        LinearOperator {
            window,
            matrix: Array2::from_elem((n, n), ZERO),
            leakage: 0.0,
        }
    }

    pub fn identity(window: TruncationWindow) -> Self {
        let mut op = Self::zeros(window);
        for i in 0..window.size() {
            op.matrix[(i, i)] = ONE;
        }
        op
    }

    pub fn from_diagonal(window: TruncationWindow, diag: &[Complex64]) -> Self {
        assert_eq!(diag.len(), window.size());
        let mut op = Self::zeros(window);
        for (i, d) in diag.iter().enumerate() {
            op.matrix[(i, i)] = *d;
        }
        op
    }

    pub fn dim(&self) -> usize {
        self.window.m
    }

    fn check_window(&self, other: &LinearOperator) -> Result<()> {
        if self.window != other.window {
            return Err(Error::WindowMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &LinearOperator) -> Result<LinearOperator> {
        self.check_window(other)?;
        Ok(LinearOperator {
            window: self.window,
            matrix: &self.matrix + &other.matrix,
            leakage: self.leakage + other.leakage,
        })
    }

    pub fn sub(&self, other: &LinearOperator) -> Result<LinearOperator> {
        self.check_window(other)?;
        Ok(LinearOperator {
            window: self.window,
            matrix: &self.matrix - &other.matrix,
            leakage: self.leakage + other.leakage,
        })
    }

    pub fn scale(&self, c: Complex64) -> LinearOperator {
        LinearOperator {
            window: self.window,
            matrix: self.matrix.mapv(|x| x * c),
            leakage: self.leakage,
        }
    }

    pub fn matmul(&self, other: &LinearOperator) -> Result<LinearOperator> {
        self.check_window(other)?;
        let n = self.window.size();
        let mut out = Array2::zeros((n, n));
        let lhs = self.matrix.as_standard_layout();
        let rhs = other.matrix.as_standard_layout();
        // complex GEMM; Complex64 is layout-compatible with [f64; 2]
        unsafe {
            matrixmultiply::zgemm(
                matrixmultiply::CGemmOption::Standard,
                matrixmultiply::CGemmOption::Standard,
                n,
                n,
                n,
                [1.0, 0.0],
                lhs.as_ptr() as *const [f64; 2],
                n as isize,
                1,
                rhs.as_ptr() as *const [f64; 2],
                n as isize,
                1,
                [0.0, 0.0],
                out.as_mut_ptr() as *mut [f64; 2],
                n as isize,
                1,
            );
        }
        Ok(LinearOperator {
            window: self.window,
            matrix: out,
            leakage: self.leakage + other.leakage,
        })
    }

    pub fn adjoint(&self) -> LinearOperator {
        LinearOperator {
            window: self.window,
            matrix: self.matrix.t().mapv(|x| x.conj()),
            leakage: self.leakage,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    /// Max entry magnitude over columns whose basis index is interior at the
    /// given margin. Columns that deep inside the window see no truncation.
    pub fn max_abs_on_interior_cols(&self, margin: i64) -> f64 {
        let cols = self.window.interior_positions(margin);
        let mut max = 0.0f64;
        for &q in &cols {
            for p in 0..self.window.size() {
                max = max.max(self.matrix[(p, q)].norm());
            }
        }
        max
    }

    /// `max |A - A^dagger|` over the interior-by-interior block.
    pub fn hermiticity_defect(&self, margin: i64) -> f64 {
        let idx = self.window.interior_positions(margin);
        let mut max = 0.0f64;
        for &p in &idx {
            for &q in &idx {
                max = max.max((self.matrix[(p, q)] - self.matrix[(q, p)].conj()).norm());
            }
        }
        max
    }

    pub fn is_hermitian(&self, margin: i64, tol: f64) -> bool {
        self.hermiticity_defect(margin) <= tol
    }

    /// Applies the operator to a wavefunction supported inside the window.
    pub fn apply(&self, psi: &WaveFunction) -> Result<WaveFunction> {
        if psi.dim() != self.window.m {
            return Err(Error::DimensionMismatch {
                expected: self.window.m,
                got: psi.dim(),
            });
        }
        let n = self.window.size();
        let mut vec = vec![ZERO; n];
        for (idx, c) in psi.poly.terms() {
            let pos = self.window.position(idx).ok_or(Error::WindowMismatch)?;
            vec[pos] = *c;
        }
        let mut out = vec![ZERO; n];
        for (p, o) in out.iter_mut().enumerate() {
            for (q, v) in vec.iter().enumerate() {
                if *v != ZERO {
                    *o += self.matrix[(p, q)] * v;
                }
            }
        }
        let poly = FourierPolynomial::from_terms(
            self.window.m,
            out.iter()
                .enumerate()
                .filter(|(_, c)| **c != ZERO)
                .map(|(pos, c)| (self.window.index_at(pos), *c)),
        )?;
        WaveFunction::new(poly, psi.half_shift.clone())
    }

    /// Matrix exponential by scaling-and-squaring with a Taylor kernel.
    pub fn expm(&self) -> LinearOperator {
        let n = self.window.size();
        let norm1 = self
            .matrix
            .columns()
            .into_iter()
            .map(|col| col.iter().map(|x| x.norm()).sum::<f64>())
            .fold(0.0, f64::max);
        let mut s = 0u32;
        while norm1 / 2f64.powi(s as i32) > 0.0625 {
            s += 1;
        }
        let a = self.matrix.mapv(|x| x / 2f64.powi(s as i32));
        // Taylor series; the scaled norm <= 1/16 so 18 terms land far below
        // machine epsilon.
        let mut result = Array2::from_elem((n, n), ZERO);
        for i in 0..n {
            result[(i, i)] = ONE;
        }
        let mut term = result.clone();
        for k in 1..=18 {
            term = term.dot(&a).mapv(|x| x / k as f64);
            result = &result + &term;
        }
        for _ in 0..s {
            result = result.dot(&result);
        }
        LinearOperator {
            window: self.window,
            matrix: result,
            leakage: self.leakage,
        }
    }

    /// Diagonal entries in window enumeration order.
    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.window.size())
            .map(|i| self.matrix[(i, i)])
            .collect()
    }

    /// Dense row-major JSON export with 17-significant-digit floats.
    pub fn to_json_string(&self) -> String {
        let n = self.window.size();
        let mut s = String::new();
        s.push_str(&format!(
            "{{\"dim\": {}, \"n_max\": {}, \"size\": {}, \"leakage\": {}, \"rows\": [",
            self.window.m,
            self.window.n_max,
            n,
            fmt_f64_17(self.leakage)
        ));
        for p in 0..n {
            if p > 0 {
                s.push_str(", ");
            }
            s.push('[');
            for q in 0..n {
                if q > 0 {
                    s.push_str(", ");
                }
                let z = self.matrix[(p, q)];
                s.push_str(&format!("[{}, {}]", fmt_f64_17(z.re), fmt_f64_17(z.im)));
            }
            s.push(']');
        }
        s.push_str("]}");
        s
    }

    /// Matrix Market coordinate-format export (complex general).
    pub fn to_matrix_market(&self) -> String {
        let n = self.window.size();
        let mut entries = Vec::new();
        for p in 0..n {
            for q in 0..n {
                let z = self.matrix[(p, q)];
                if z != ZERO {
                    entries.push((p + 1, q + 1, z));
                }
            }
        }
        let mut s = String::from("%%MatrixMarket matrix coordinate complex general\n");
        s.push_str(&format!("{} {} {}\n", n, n, entries.len()));
        for (p, q, z) in entries {
            s.push_str(&format!(
                "{} {} {} {}\n",
                p,
                q,
                fmt_f64_17(z.re),
                fmt_f64_17(z.im)
            ));
        }
        s
    }
}

/// Diagonal action operator `I_k -> -i d_k - lambda_k` with eigenvalue
/// `n_k - lambda_k` (`+ 1/2` on half-shifted axes).
pub fn action_operator(
    rep: &Representation,
    k: usize,
    w: TruncationWindow,
) -> Result<LinearOperator> {
    if k >= w.m {
        return Err(Error::AxisOutOfRange { axis: k, dim: w.m });
    }
    if rep.dim() != w.m {
        return Err(Error::DimensionMismatch {
            expected: w.m,
            got: rep.dim(),
        });
    }
    let diag: Vec<Complex64> = w
        .iter()
        .map(|n| Complex64::new(n.0[k] as f64 - rep.effective_offset(k), 0.0))
        .collect();
    Ok(LinearOperator::from_diagonal(w, &diag))
}

/// Shift matrix of multiplication by `f`: `psi_(n) -> sum_m f_m psi_(n+m)`,
/// with out-of-window targets dropped into the leakage accumulator.
pub fn multiplication_operator(f: &FourierPolynomial, w: TruncationWindow) -> Result<LinearOperator> {
    if f.dim() != w.m {
        return Err(Error::DimensionMismatch {
            expected: w.m,
            got: f.dim(),
        });
    }
    let mut op = LinearOperator::zeros(w);
    for q in 0..w.size() {
        let nq = w.index_at(q);
        for (shift, c) in f.terms() {
            let target = nq.add(shift);
            match w.position(&target) {
                Some(p) => op.matrix[(p, q)] += c,
                None => op.leakage += c.norm(),
            }
        }
    }
    Ok(op)
}

/// Diagonal of the momentum part `-i d_k` on the window basis:
/// eigenvalue `n_k` (`+ 1/2` on half-shifted axes).
fn momentum_diagonal(rep: &Representation, k: usize, w: TruncationWindow) -> LinearOperator {
    let hs = if rep.half_shift[k] { 0.5 } else { 0.0 };
    let diag: Vec<Complex64> = w
        .iter()
        .map(|n| Complex64::new(n.0[k] as f64 + hs, 0.0))
        .collect();
    LinearOperator::from_diagonal(w, &diag)
}

/// Polarized operator of an affine observable:
/// `f^ = -i a^k d_k - (i/2) d_k a^k - a^k lambda_k + b`.
pub fn quantize_affine(
    f: &AffineObservable,
    rep: &Representation,
    w: TruncationWindow,
) -> Result<LinearOperator> {
    if f.dim() != w.m {
        return Err(Error::DimensionMismatch {
            expected: w.m,
            got: f.dim(),
        });
    }
    if rep.dim() != w.m {
        return Err(Error::DimensionMismatch {
            expected: w.m,
            got: rep.dim(),
        });
    }
    let mut op = LinearOperator::zeros(w);
    // zeroth-order part: sum_k (-(i/2) d_k a^k - lambda_k a^k) + b
    let mut zeroth = f.b.clone();
    for k in 0..w.m {
        let deriv = f.a[k].partial_phi(k)?.scale(-0.5 * I);
        let offset = f.a[k].scale(Complex64::new(-rep.lambda[k], 0.0));
        zeroth = zeroth.add(&deriv)?.add(&offset)?;
    }
    op = op.add(&multiplication_operator(&zeroth, w)?)?;
    // first-order part: mult(a^k) . diag(-i d_k), applied as column scaling
    for k in 0..w.m {
        if f.a[k].is_zero() {
            continue;
        }
        let mut mult = multiplication_operator(&f.a[k], w)?;
        let mom = momentum_diagonal(rep, k, w).diagonal();
        for (col, &d) in mom.iter().enumerate() {
            for row in 0..w.size() {
                mult.matrix[(row, col)] *= d;
            }
        }
        op = op.add(&mult)?;
    }
    Ok(op)
}

/// `AB - BA`.
pub fn commutator(a: &LinearOperator, b: &LinearOperator) -> Result<LinearOperator> {
    a.matmul(b)?.sub(&b.matmul(a)?)
}

/// Exact symbolic Poisson bracket `{f,g} = d^i f d_i g - d_i f d^i g` on
/// affine observables; closed in the algebra.
pub fn poisson_bracket(f: &AffineObservable, g: &AffineObservable) -> Result<AffineObservable> {
    f.check_dim(g)?;
    let m = f.dim();
    let mut a_out = vec![FourierPolynomial::zero(m); m];
    let mut b_out = FourierPolynomial::zero(m);
    for i in 0..m {
        // d^i f = a_f^i ; d_i g = (d_i a_g^k) I_k + d_i b_g
        for (k, ao) in a_out.iter_mut().enumerate() {
            let term1 = f.a[i].multiply(&g.a[k].partial_phi(i)?)?;
            let term2 = g.a[i].multiply(&f.a[k].partial_phi(i)?)?;
            *ao = ao.add(&term1.sub(&term2)?)?;
        }
        let term1 = f.a[i].multiply(&g.b.partial_phi(i)?)?;
        let term2 = g.a[i].multiply(&f.b.partial_phi(i)?)?;
        b_out = b_out.add(&term1.sub(&term2)?)?;
    }
    AffineObservable::new(a_out, b_out)
}

/// Polynomial in the action variables with Fourier-polynomial coefficients:
/// a finite map from I-monomial multi-degree to coefficient function.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnulusFunction {
    dim: usize,
    terms: BTreeMap<Vec<u32>, FourierPolynomial>,
}

impl AnnulusFunction {
    pub fn zero(dim: usize) -> Self {
        assert!(dim >= 1);
        AnnulusFunction {
            dim,
            terms: BTreeMap::new(),
        }
    }

    /// An action-independent section (degree-zero term only).
    pub fn from_fourier(f: FourierPolynomial) -> Self {
        let dim = f.dim();
        let mut out = Self::zero(dim);
        out.set(vec![0; dim], f);
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn set(&mut self, degree: Vec<u32>, f: FourierPolynomial) {
        assert_eq!(degree.len(), self.dim);
        assert_eq!(f.dim(), self.dim);
        if f.is_zero() {
            self.terms.remove(&degree);
        } else {
            self.terms.insert(degree, f);
        }
    }

    pub fn term(&self, degree: &[u32]) -> FourierPolynomial {
        self.terms
            .get(degree)
            .cloned()
            .unwrap_or_else(|| FourierPolynomial::zero(self.dim))
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &FourierPolynomial)> {
        self.terms.iter()
    }

    pub fn is_action_independent(&self) -> bool {
        self.terms.keys().all(|d| d.iter().all(|&x| x == 0))
    }

    /// Maximum total degree in the action variables.
    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|d| d.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    pub fn add(&self, other: &AnnulusFunction) -> Result<AnnulusFunction> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut out = self.clone();
        for (d, f) in &other.terms {
            out.set(d.clone(), out.term(d).add(f)?);
        }
        Ok(out)
    }

    pub fn scale(&self, c: Complex64) -> AnnulusFunction {
        let mut out = AnnulusFunction::zero(self.dim);
        for (d, f) in &self.terms {
            out.set(d.clone(), f.scale(c));
        }
        out
    }

    pub fn multiply_fourier(&self, g: &FourierPolynomial) -> Result<AnnulusFunction> {
        let mut out = AnnulusFunction::zero(self.dim);
        for (d, f) in &self.terms {
            out.set(d.clone(), f.multiply(g)?);
        }
        Ok(out)
    }

    /// Multiplication by the action coordinate `I_k`.
    pub fn multiply_action(&self, k: usize) -> Result<AnnulusFunction> {
        if k >= self.dim {
            return Err(Error::AxisOutOfRange {
                axis: k,
                dim: self.dim,
            });
        }
        let mut out = AnnulusFunction::zero(self.dim);
        for (d, f) in &self.terms {
            let mut dd = d.clone();
            dd[k] += 1;
            out.set(dd, f.clone());
        }
        Ok(out)
    }

    /// Angle derivative of every coefficient.
    pub fn partial_phi(&self, k: usize) -> Result<AnnulusFunction> {
        let mut out = AnnulusFunction::zero(self.dim);
        for (d, f) in &self.terms {
            out.set(d.clone(), f.partial_phi(k)?);
        }
        Ok(out)
    }

    /// Polynomial derivative in the action variable `I_k`.
    pub fn partial_action(&self, k: usize) -> Result<AnnulusFunction> {
        if k >= self.dim {
            return Err(Error::AxisOutOfRange {
                axis: k,
                dim: self.dim,
            });
        }
        let mut out = AnnulusFunction::zero(self.dim);
        for (d, f) in &self.terms {
            if d[k] == 0 {
                continue;
            }
            let mut dd = d.clone();
            dd[k] -= 1;
            let scaled = f.scale(Complex64::new(d[k] as f64, 0.0));
            out.set(dd.clone(), out.term(&dd).add(&scaled).unwrap());
        }
        Ok(out)
    }

    /// Converts a degree-<=1 annulus function to an affine observable.
    pub fn to_affine(&self) -> Result<AffineObservable> {
        if self.degree() > 1 {
            return Err(Error::NotAffine);
        }
        let m = self.dim;
        let mut a = vec![FourierPolynomial::zero(m); m];
        let mut b = FourierPolynomial::zero(m);
        for (d, f) in &self.terms {
            match d.iter().position(|&x| x == 1) {
                Some(k) => a[k] = a[k].add(f)?,
                None => b = b.add(f)?,
            }
        }
        AffineObservable::new(a, b)
    }
}

/// Kostant-Souriau prequantization of an affine observable, acting exactly
/// on the polynomial-Fourier ring:
/// `f^ rho = -i a^k d_k rho + i (I_r d_k a^r + d_k b) drho/dI_k + (b - lambda_k a^k) rho`.
pub struct PrequantumOperator {
    pub observable: AffineObservable,
    pub representation: Representation,
}

impl PrequantumOperator {
    pub fn new(f: AffineObservable, rep: Representation) -> Result<Self> {
        if f.dim() != rep.dim() {
            return Err(Error::DimensionMismatch {
                expected: rep.dim(),
                got: f.dim(),
            });
        }
        Ok(PrequantumOperator {
            observable: f,
            representation: rep,
        })
    }

    pub fn apply(&self, rho: &AnnulusFunction) -> Result<AnnulusFunction> {
        let m = rho.dim();
        if m != self.observable.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.observable.dim(),
                got: m,
            });
        }
        let f = &self.observable;
        let mut out = AnnulusFunction::zero(m);
        // -i a^k d_k rho
        for k in 0..m {
            if f.a[k].is_zero() {
                continue;
            }
            out = out.add(
                &rho.partial_phi(k)?
                    .multiply_fourier(&f.a[k])?
                    .scale(-I),
            )?;
        }
        // + i (I_r d_k a^r + d_k b) drho/dI_k
        for k in 0..m {
            let drho = rho.partial_action(k)?;
            if drho.terms.is_empty() {
                continue;
            }
            for r in 0..m {
                let dak = f.a[r].partial_phi(k)?;
                if !dak.is_zero() {
                    out = out.add(
                        &drho
                            .multiply_fourier(&dak)?
                            .multiply_action(r)?
                            .scale(I),
                    )?;
                }
            }
            let dbk = f.b.partial_phi(k)?;
            if !dbk.is_zero() {
                out = out.add(&drho.multiply_fourier(&dbk)?.scale(I))?;
            }
        }
        // + (b - lambda_k a^k) rho
        let mut zeroth = f.b.clone();
        for k in 0..m {
            zeroth = zeroth.add(
                &f.a[k].scale(Complex64::new(-self.representation.lambda[k], 0.0)),
            )?;
        }
        out = out.add(&rho.multiply_fourier(&zeroth)?)?;
        Ok(out)
    }
}

/// Symbolic (coefficient-map) action of the polarized operator on a function
/// of the angles: `f^ rho = -i a^k d_k rho + (-(i/2) d_k a^k - lambda_k a^k + b) rho`.
pub fn apply_polarized(
    f: &AffineObservable,
    rep: &Representation,
    rho: &FourierPolynomial,
) -> Result<FourierPolynomial> {
    let m = rho.dim();
    if m != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: m,
        });
    }
    let mut out = FourierPolynomial::zero(m);
    for k in 0..m {
        if f.a[k].is_zero() {
            continue;
        }
        out = out.add(&rho.partial_phi(k)?.multiply(&f.a[k])?.scale(-I))?;
    }
    let mut zeroth = f.b.clone();
    for k in 0..m {
        zeroth = zeroth.add(&f.a[k].partial_phi(k)?.scale(-0.5 * I))?;
        zeroth = zeroth.add(&f.a[k].scale(Complex64::new(-rep.lambda[k], 0.0)))?;
    }
    out.add(&rho.multiply(&zeroth)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::MultiIndex;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn mi(v: &[i64]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    #[test]
    fn action_operator_eigenvalues() {
        let w = TruncationWindow::new(2, 3);
        let rep = Representation::new(vec![0.25, 0.0], vec![false, false]).unwrap();
        let op = action_operator(&rep, 0, w).unwrap();
        let pos = w.position(&mi(&[2, 1])).unwrap();
        assert_eq!(op.matrix[(pos, pos)], c(1.75, 0.0));
        // lambda = 0, n = 0 -> 0
        let rep0 = Representation::trivial(2);
        let op0 = action_operator(&rep0, 0, w).unwrap();
        let z = w.position(&mi(&[0, 0])).unwrap();
        assert_eq!(op0.matrix[(z, z)], c(0.0, 0.0));
        assert!(op.is_hermitian(0, 1e-12));
    }

    #[test]
    fn action_operator_half_shift() {
        let w = TruncationWindow::new(1, 2);
        let rep = Representation::new(vec![0.0], vec![true]).unwrap();
        let op = action_operator(&rep, 0, w).unwrap();
        let z = w.position(&mi(&[0])).unwrap();
        assert_eq!(op.matrix[(z, z)], c(0.5, 0.0));
    }

    #[test]
    fn action_operator_axis_range() {
        let w = TruncationWindow::new(1, 1);
        let rep = Representation::trivial(1);
        assert!(matches!(
            action_operator(&rep, 1, w),
            Err(Error::AxisOutOfRange { .. })
        ));
    }

    #[test]
    fn multiplication_operator_shift() {
        let w = TruncationWindow::new(2, 2);
        let f = FourierPolynomial::basis(mi(&[1, 0]));
        let op = multiplication_operator(&f, w).unwrap();
        let q = w.position(&mi(&[0, 0])).unwrap();
        let p = w.position(&mi(&[1, 0])).unwrap();
        assert_eq!(op.matrix[(p, q)], c(1.0, 0.0));
    }

    #[test]
    fn multiplication_operator_identity() {
        let w = TruncationWindow::new(1, 2);
        let op = multiplication_operator(&FourierPolynomial::one(1), w).unwrap();
        let id = LinearOperator::identity(w);
        assert_eq!(op.matrix, id.matrix);
        assert_eq!(op.leakage, 0.0);
    }

    #[test]
    fn multiplication_operator_leakage() {
        let w = TruncationWindow::new(1, 1);
        let f = FourierPolynomial::basis(mi(&[1]));
        let op = multiplication_operator(&f, w).unwrap();
        // only the n=1 column leaks, amplitude magnitude 1
        assert_eq!(op.leakage, 1.0);
    }

    #[test]
    fn quantize_action_reduces_to_action_operator() {
        let w = TruncationWindow::new(2, 3);
        let rep = Representation::new(vec![0.3, 0.7], vec![false, false]).unwrap();
        let f = AffineObservable::action(2, 0).unwrap();
        let q = quantize_affine(&f, &rep, w).unwrap();
        let a = action_operator(&rep, 0, w).unwrap();
        let diff = q.sub(&a).unwrap();
        assert_eq!(diff.max_abs(), 0.0);
    }

    #[test]
    fn quantize_pure_multiplication() {
        let w = TruncationWindow::new(1, 3);
        let rep = Representation::trivial(1);
        let b = FourierPolynomial::from_terms(
            1,
            vec![(mi(&[2]), c(1.0, 0.0)), (mi(&[-2]), c(1.0, 0.0))],
        )
        .unwrap();
        let f = AffineObservable::multiplication(b.clone());
        let q = quantize_affine(&f, &rep, w).unwrap();
        let m = multiplication_operator(&b, w).unwrap();
        assert_eq!(q.sub(&m).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn quantize_affine_matches_quadrature_oracle() {
        // f with a = 2 cos(phi) = psi_1 + psi_-1, b = 0, lambda = 0, 1-D.
        // Oracle: matrix elements by trapezoid quadrature of
        // (1/2pi) int conj(psi_p) [-i a d - (i/2) a'] psi_q dphi.
        let w = TruncationWindow::new(1, 4);
        let rep = Representation::trivial(1);
        let a = FourierPolynomial::from_terms(
            1,
            vec![(mi(&[1]), c(1.0, 0.0)), (mi(&[-1]), c(1.0, 0.0))],
        )
        .unwrap();
        let f = AffineObservable::new(vec![a.clone()], FourierPolynomial::zero(1)).unwrap();
        let op = quantize_affine(&f, &rep, w).unwrap();
        let da = a.partial_phi(0).unwrap();
        let grid = 256;
        for p in 0..w.size() {
            let np = w.index_at(p).0[0];
            for q in 0..w.size() {
                let nq = w.index_at(q).0[0];
                // skip boundary columns whose shifts leak out of the window
                if nq.abs() + 1 > w.n_max {
                    continue;
                }
                let mut acc = c(0.0, 0.0);
                for i in 0..grid {
                    let phi = [2.0 * std::f64::consts::PI * i as f64 / grid as f64];
                    let psi_q = Complex64::from_polar(1.0, nq as f64 * phi[0]);
                    let dpsi_q = c(0.0, nq as f64) * psi_q;
                    let integrand = (-I * a.evaluate(&phi) * dpsi_q
                        - 0.5 * I * da.evaluate(&phi) * psi_q)
                        * Complex64::from_polar(1.0, -(np as f64) * phi[0]);
                    acc += integrand;
                }
                acc /= grid as f64;
                assert!(
                    (op.matrix[(p, q)] - acc).norm() < 1e-10,
                    "mismatch at ({np},{nq}): {} vs {}",
                    op.matrix[(p, q)],
                    acc
                );
            }
        }
    }

    #[test]
    fn commutator_of_diagonals_vanishes() {
        let w = TruncationWindow::new(2, 2);
        let rep = Representation::new(vec![0.1, 0.9], vec![false, false]).unwrap();
        let i1 = action_operator(&rep, 0, w).unwrap();
        let i2 = action_operator(&rep, 1, w).unwrap();
        assert_eq!(commutator(&i1, &i2).unwrap().max_abs(), 0.0);
        assert_eq!(commutator(&i1, &i1).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn commutator_action_with_shift() {
        // [I_k^, mult(psi_n)] = n_k mult(psi_n) on the interior sub-window
        let w = TruncationWindow::new(2, 3);
        let rep = Representation::new(vec![0.4, -0.2], vec![false, false]).unwrap();
        let n = mi(&[2, -1]);
        let mult = multiplication_operator(&FourierPolynomial::basis(n.clone()), w).unwrap();
        for k in 0..2 {
            let ik = action_operator(&rep, k, w).unwrap();
            let comm = commutator(&ik, &mult).unwrap();
            let expect = mult.scale(c(n.0[k] as f64, 0.0));
            let diff = comm.sub(&expect).unwrap();
            assert!(diff.max_abs_on_interior_cols(2) < 1e-13);
        }
    }

    #[test]
    fn commutator_window_mismatch() {
        let a = LinearOperator::identity(TruncationWindow::new(1, 1));
        let b = LinearOperator::identity(TruncationWindow::new(1, 2));
        assert!(matches!(commutator(&a, &b), Err(Error::WindowMismatch)));
    }

    #[test]
    fn poisson_bracket_action_with_exponential() {
        // {I_1, psi_n} = i n_1 psi_n
        let f = AffineObservable::action(2, 0).unwrap();
        let n = mi(&[3, -2]);
        let g = AffineObservable::multiplication(FourierPolynomial::basis(n.clone()));
        let br = poisson_bracket(&f, &g).unwrap();
        assert!(br.a.iter().all(|ak| ak.is_zero()));
        assert_eq!(br.b.coeff(&n), c(0.0, 3.0));
        assert_eq!(br.b.num_terms(), 1);
    }

    #[test]
    fn poisson_bracket_actions_commute() {
        let f = AffineObservable::action(2, 0).unwrap();
        let g = AffineObservable::action(2, 1).unwrap();
        let br = poisson_bracket(&f, &g).unwrap();
        assert!(br.a.iter().all(|ak| ak.is_zero()) && br.b.is_zero());
    }

    #[test]
    fn poisson_bracket_hand_expansion() {
        // {a(phi) I_1, b(phi)} with a = b = psi_(1,0) in 2-D gives -i psi_(2,0)
        let psi10 = FourierPolynomial::basis(mi(&[1, 0]));
        let mut a = vec![FourierPolynomial::zero(2); 2];
        a[0] = psi10.clone();
        let f = AffineObservable::new(a, FourierPolynomial::zero(2)).unwrap();
        let g = AffineObservable::multiplication(psi10.clone());
        let br = poisson_bracket(&f, &g).unwrap();
        assert!(br.a.iter().all(|ak| ak.is_zero()));
        assert_eq!(br.b.coeff(&mi(&[2, 0])), c(0.0, 1.0));
        // grid evaluation of the bracket definition at sample points:
        // {f,g} = a^1 d_1 g (the d^i g term vanishes since g has no actions)
        for i in 0..8 {
            let phi = [0.7 * i as f64, 0.3 * i as f64];
            let lhs = br.b.evaluate(&phi);
            let rhs = psi10.evaluate(&phi) * psi10.partial_phi(0).unwrap().evaluate(&phi);
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn prequantum_action_on_basis() {
        // f = I_1, rho = psi_n: result (n_1 - lambda_1) psi_n
        let rep = Representation::new(vec![0.2, 0.0], vec![false, false]).unwrap();
        let f = AffineObservable::action(2, 0).unwrap();
        let op = PrequantumOperator::new(f, rep).unwrap();
        let n = mi(&[3, 1]);
        let rho = AnnulusFunction::from_fourier(FourierPolynomial::basis(n.clone()));
        let out = op.apply(&rho).unwrap();
        assert!(out.is_action_independent());
        assert_eq!(out.term(&[0, 0]).coeff(&n), c(3.0 - 0.2, 0.0));
    }

    #[test]
    fn prequantum_constant_observable() {
        let rep = Representation::trivial(1);
        let f = AffineObservable::multiplication(FourierPolynomial::constant(1, c(2.5, 0.0)));
        let op = PrequantumOperator::new(f, rep).unwrap();
        let mut rho = AnnulusFunction::zero(1);
        rho.set(vec![2], FourierPolynomial::basis(mi(&[1])));
        let out = op.apply(&rho).unwrap();
        assert_eq!(out.term(&[2]).coeff(&mi(&[1])), c(2.5, 0.0));
    }

    #[test]
    fn prequantum_vs_polarized_half_form_term() {
        // For rho independent of actions, prequantum minus polarized equals
        // +(i/2) d_k a^k acting by multiplication. A dyadic offset keeps both
        // evaluation routes bitwise identical.
        let rep = Representation::new(vec![0.25], vec![false]).unwrap();
        let a = FourierPolynomial::basis(mi(&[1]));
        let f = AffineObservable::new(vec![a.clone()], FourierPolynomial::zero(1)).unwrap();
        let rho_f = FourierPolynomial::basis(mi(&[2]));
        let rho = AnnulusFunction::from_fourier(rho_f.clone());
        let pre = PrequantumOperator::new(f.clone(), rep.clone())
            .unwrap()
            .apply(&rho)
            .unwrap();
        let pol = apply_polarized(&f, &rep, &rho_f).unwrap();
        let half_form = a.partial_phi(0).unwrap().scale(0.5 * I).multiply(&rho_f).unwrap();
        let diff = pre.term(&[0]).sub(&pol).unwrap();
        assert_eq!(diff, half_form);
    }

    #[test]
    fn annulus_to_affine_rejects_quadratic() {
        let mut rho = AnnulusFunction::zero(1);
        rho.set(vec![2], FourierPolynomial::one(1));
        assert!(matches!(rho.to_affine(), Err(Error::NotAffine)));
    }

    #[test]
    fn metalinear_equivalence_on_operators() {
        let w = TruncationWindow::new(2, 3);
        let rep_hs = Representation::new(vec![0.3, 0.7], vec![false, true]).unwrap();
        let rep_eq = rep_hs.absorb_half_shifts();
        assert_eq!(rep_eq.lambda[1], 0.7 - 0.5);
        let a = FourierPolynomial::from_terms(
            2,
            vec![(mi(&[1, 1]), c(1.0, 0.0)), (mi(&[-1, -1]), c(1.0, 0.0))],
        )
        .unwrap();
        let mut av = vec![FourierPolynomial::zero(2); 2];
        av[1] = a;
        let f = AffineObservable::new(av, FourierPolynomial::one(2)).unwrap();
        let op1 = quantize_affine(&f, &rep_hs, w).unwrap();
        let op2 = quantize_affine(&f, &rep_eq, w).unwrap();
        assert!(op1.sub(&op2).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn gauge_equivalence_predicate() {
        let r1 = Representation::new(vec![0.3, 0.7], vec![false, false]).unwrap();
        let r2 = Representation::new(vec![1.3, -2.3], vec![false, false]).unwrap();
        let r3 = Representation::new(vec![0.4, 0.7], vec![false, false]).unwrap();
        assert!(r1.gauge_equivalent(&r2));
        assert!(!r1.gauge_equivalent(&r3));
    }

    #[test]
    fn expm_of_diagonal() {
        let w = TruncationWindow::new(1, 2);
        let diag: Vec<Complex64> = (0..5).map(|i| c(0.0, -0.3 * i as f64)).collect();
        let op = LinearOperator::from_diagonal(w, &diag);
        let e = op.expm();
        for (i, d) in diag.iter().enumerate() {
            assert!((e.matrix[(i, i)] - d.exp()).norm() < 1e-14);
        }
    }

    #[test]
    fn operator_apply_to_wavefunction() {
        let w = TruncationWindow::new(1, 2);
        let op = multiplication_operator(&FourierPolynomial::basis(mi(&[1])), w).unwrap();
        let psi = WaveFunction::basis(mi(&[0]), vec![false]).unwrap();
        let out = op.apply(&psi).unwrap();
        assert_eq!(out.poly.coeff(&mi(&[1])), c(1.0, 0.0));
    }

    #[test]
    fn matrix_market_export_shape() {
        let w = TruncationWindow::new(1, 1);
        let op = LinearOperator::identity(w);
        let mm = op.to_matrix_market();
        assert!(mm.starts_with("%%MatrixMarket matrix coordinate complex general\n3 3 3\n"));
    }
}
