//! Truncated Fourier-lattice representation of smooth complex functions on
//! the torus `T^m`: multi-indices, trigonometric polynomials, wavefunctions
//! with optional half-integer basis shifts, inner products and pointwise
//! multiplication (coefficient convolution).

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Formats a float with 17 significant digits (exact f64 round-trip).
pub fn fmt_f64_17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Lattice label `(n_1, ..., n_m)` of a Fourier basis state.
///
/// Ordering is lexicographic (inherited from `Vec<i64>`), which fixes the
/// enumeration order of every truncation window and the serialization order
/// of polynomial terms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(pub Vec<i64>);

impl MultiIndex {
    pub fn new(entries: Vec<i64>) -> Self {
        assert!(!entries.is_empty(), "multi-index must have dimension >= 1");
        MultiIndex(entries)
    }

    pub fn zero(m: usize) -> Self {
        MultiIndex(vec![0; m])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn inf_norm(&self) -> i64 {
        self.0.iter().map(|n| n.abs()).max().unwrap_or(0)
    }
}

impl std::fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, ")")
    }
}

/// Finite symmetric block `|n_k| <= n_max` of the integer lattice, the
/// computational surrogate for the countable basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruncationWindow {
    pub m: usize,
    pub n_max: i64,
}

impl TruncationWindow {
    pub fn new(m: usize, n_max: i64) -> Self {
        assert!(m >= 1, "dimension must be >= 1");
        assert!(n_max >= 0, "n_max must be nonnegative");
        TruncationWindow { m, n_max }
    }

    /// Number of basis states, `(2 n_max + 1)^m`.
    pub fn size(&self) -> usize {
        let side = (2 * self.n_max + 1) as usize;
        side.pow(self.m as u32)
    }

    pub fn contains(&self, n: &MultiIndex) -> bool {
        n.dim() == self.m && n.0.iter().all(|&nk| nk.abs() <= self.n_max)
    }

    /// Flat position of `n` in lexicographic enumeration order.
    pub fn position(&self, n: &MultiIndex) -> Option<usize> {
        if !self.contains(n) {
            return None;
        }
        let side = (2 * self.n_max + 1) as usize;
        let mut pos = 0usize;
        for &nk in &n.0 {
            pos = pos * side + (nk + self.n_max) as usize;
        }
        Some(pos)
    }

    pub fn index_at(&self, mut pos: usize) -> MultiIndex {
        let side = (2 * self.n_max + 1) as usize;
        let mut entries = vec![0i64; self.m];
        for k in (0..self.m).rev() {
            entries[k] = (pos % side) as i64 - self.n_max;
            pos /= side;
        }
        MultiIndex(entries)
    }

    pub fn iter(&self) -> impl Iterator<Item = MultiIndex> + '_ {
        (0..self.size()).map(|pos| self.index_at(pos))
    }

    /// True when `n` sits at distance >= `margin` from every window edge.
    pub fn is_interior(&self, n: &MultiIndex, margin: i64) -> bool {
        self.contains(n) && n.0.iter().all(|&nk| nk.abs() <= self.n_max - margin)
    }

    pub fn interior_positions(&self, margin: i64) -> Vec<usize> {
        self.iter()
            .filter(|n| self.is_interior(n, margin))
            .map(|n| self.position(&n).unwrap())
            .collect()
    }
}

/// Finite complex linear combination of basis exponentials `exp(i n.phi)`.
///
/// Kept in normal form: no stored coefficient is exactly zero. Doubles as a
/// wavefunction component and as the coefficient functions of affine
/// observables.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierPolynomial {
    dim: usize,
    coeffs: BTreeMap<MultiIndex, Complex64>,
}

impl FourierPolynomial {
    pub fn zero(dim: usize) -> Self {
        assert!(dim >= 1);
        FourierPolynomial {
            dim,
            coeffs: BTreeMap::new(),
        }
    }

    /// The constant function 1, i.e. the basis element at index 0.
    pub fn one(dim: usize) -> Self {
        Self::basis(MultiIndex::zero(dim))
    }

    pub fn constant(dim: usize, c: Complex64) -> Self {
        let mut f = Self::zero(dim);
        f.insert(MultiIndex::zero(dim), c);
        f
    }

    /// Single basis exponential with unit coefficient.
    pub fn basis(n: MultiIndex) -> Self {
        let dim = n.dim();
        let mut coeffs = BTreeMap::new();
        coeffs.insert(n, Complex64::new(1.0, 0.0));
        FourierPolynomial { dim, coeffs }
    }

    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (MultiIndex, Complex64)>,
    {
        let mut f = Self::zero(dim);
        for (n, c) in terms {
            if n.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: n.dim(),
                });
            }
            let total = f.coeff(&n) + c;
            f.insert(n, total);
        }
        Ok(f)
    }

    fn insert(&mut self, n: MultiIndex, c: Complex64) {
        if c == Complex64::new(0.0, 0.0) {
            self.coeffs.remove(&n);
        } else {
            self.coeffs.insert(n, c);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, n: &MultiIndex) -> Complex64 {
        self.coeffs
            .get(n)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &Complex64)> {
        self.coeffs.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.coeffs.len()
    }

    /// Largest `|n|_inf` over stored terms (0 for the zero polynomial).
    pub fn bandwidth(&self) -> i64 {
        self.coeffs.keys().map(|n| n.inf_norm()).max().unwrap_or(0)
    }

    fn check_dim(&self, other: &FourierPolynomial) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &FourierPolynomial) -> Result<FourierPolynomial> {
        self.check_dim(other)?;
        let mut out = self.clone();
        for (n, c) in &other.coeffs {
            out.insert(n.clone(), out.coeff(n) + c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &FourierPolynomial) -> Result<FourierPolynomial> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: Complex64) -> FourierPolynomial {
        let mut out = FourierPolynomial::zero(self.dim);
        for (n, a) in &self.coeffs {
            out.insert(n.clone(), a * c);
        }
        out
    }

    /// Coefficient-space convolution: `(fg)_n = sum_m f_m g_{n-m}`.
    pub fn multiply(&self, other: &FourierPolynomial) -> Result<FourierPolynomial> {
        self.check_dim(other)?;
        let mut out = FourierPolynomial::zero(self.dim);
        for (n1, c1) in &self.coeffs {
            for (n2, c2) in &other.coeffs {
                let n = n1.add(n2);
                out.insert(n.clone(), out.coeff(&n) + c1 * c2);
            }
        }
        Ok(out)
    }

    /// Angle derivative along axis `k` (0-based): `c_n -> i n_k c_n`.
    pub fn partial_phi(&self, k: usize) -> Result<FourierPolynomial> {
        if k >= self.dim {
            return Err(Error::AxisOutOfRange {
                axis: k,
                dim: self.dim,
            });
        }
        let mut out = FourierPolynomial::zero(self.dim);
        for (n, c) in &self.coeffs {
            out.insert(n.clone(), Complex64::new(0.0, n.0[k] as f64) * c);
        }
        Ok(out)
    }

    pub fn evaluate(&self, phi: &[f64]) -> Complex64 {
        assert_eq!(phi.len(), self.dim);
        let mut acc = Complex64::new(0.0, 0.0);
        for (n, c) in &self.coeffs {
            let dot: f64 = n.0.iter().zip(phi).map(|(&nk, &pk)| nk as f64 * pk).sum();
            acc += c * Complex64::from_polar(1.0, dot);
        }
        acc
    }

    /// Complex conjugate of the function: `conj(f)_n = conj(f_{-n})`.
    pub fn conjugate(&self) -> FourierPolynomial {
        let mut out = FourierPolynomial::zero(self.dim);
        for (n, c) in &self.coeffs {
            out.insert(MultiIndex(n.0.iter().map(|x| -x).collect()), c.conj());
        }
        out
    }

    /// True when the function is real-valued, i.e. `c_{-n} = conj(c_n)` exactly.
    pub fn is_real_function(&self) -> bool {
        self.coeffs.iter().all(|(n, c)| {
            let neg = MultiIndex(n.0.iter().map(|x| -x).collect());
            self.coeff(&neg) == c.conj()
        })
    }

    /// JSON export: `{"dim": m, "terms": [{"n": [...], "re": x, "im": y}, ...]}`
    /// with terms in lexicographic index order and 17-significant-digit floats.
    pub fn to_json_string(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("{{\"dim\": {}, \"terms\": [", self.dim));
        for (i, (n, c)) in self.coeffs.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            let idx: Vec<String> = n.0.iter().map(|x| x.to_string()).collect();
            s.push_str(&format!(
                "{{\"n\": [{}], \"re\": {}, \"im\": {}}}",
                idx.join(", "),
                fmt_f64_17(c.re),
                fmt_f64_17(c.im)
            ));
        }
        s.push_str("]}");
        s
    }

    pub fn from_json_str(s: &str) -> Result<FourierPolynomial> {
        let v: serde_json::Value =
            serde_json::from_str(s).map_err(|e| Error::ParseError(e.to_string()))?;
        Self::from_json_value(&v)
    }

    pub fn from_json_value(v: &serde_json::Value) -> Result<FourierPolynomial> {
        let dim = v
            .get("dim")
            .and_then(|d| d.as_u64())
            .ok_or_else(|| Error::ParseError("missing integer field 'dim'".into()))?
            as usize;
        if dim == 0 {
            return Err(Error::ParseError("'dim' must be >= 1".into()));
        }
        let terms = v
            .get("terms")
            .and_then(|t| t.as_array())
            .ok_or_else(|| Error::ParseError("missing array field 'terms'".into()))?;
        let mut f = FourierPolynomial::zero(dim);
        for term in terms {
            let n = term
                .get("n")
                .and_then(|n| n.as_array())
                .ok_or_else(|| Error::ParseError("term missing array 'n'".into()))?;
            let entries: Option<Vec<i64>> = n.iter().map(|x| x.as_i64()).collect();
            let entries =
                entries.ok_or_else(|| Error::ParseError("non-integer lattice index".into()))?;
            if entries.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: entries.len(),
                });
            }
            let re = term
                .get("re")
                .and_then(|x| x.as_f64())
                .ok_or_else(|| Error::ParseError("term missing float 're'".into()))?;
            let im = term
                .get("im")
                .and_then(|x| x.as_f64())
                .ok_or_else(|| Error::ParseError("term missing float 'im'".into()))?;
            let idx = MultiIndex(entries);
            f.insert(idx.clone(), f.coeff(&idx) + Complex64::new(re, im));
        }
        Ok(f)
    }
}

/// Wavefunction on the torus: a trigonometric polynomial plus the per-axis
/// half-shift flags of a nontrivial half-form bundle. Axis `j` flagged true
/// means the basis exponent along `j` is `n_j + 1/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    pub poly: FourierPolynomial,
    pub half_shift: Vec<bool>,
}

impl WaveFunction {
    pub fn new(poly: FourierPolynomial, half_shift: Vec<bool>) -> Result<Self> {
        if half_shift.len() != poly.dim() {
            return Err(Error::DimensionMismatch {
                expected: poly.dim(),
                got: half_shift.len(),
            });
        }
        Ok(WaveFunction { poly, half_shift })
    }

    /// Basis state `psi_(n)` with integer part `n` (half shifts from flags).
    pub fn basis(n: MultiIndex, half_shift: Vec<bool>) -> Result<Self> {
        Self::new(FourierPolynomial::basis(n), half_shift)
    }

    pub fn dim(&self) -> usize {
        self.poly.dim()
    }

    fn check_compatible(&self, other: &WaveFunction) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        if self.half_shift != other.half_shift {
            return Err(Error::RepresentationMismatch);
        }
        Ok(())
    }

    /// Hermitian form `<a|b> = sum_n a_n conj(b_n)`, conjugate-linear in the
    /// second slot.
    pub fn inner_product(&self, other: &WaveFunction) -> Result<Complex64> {
        self.check_compatible(other)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for (n, c) in self.poly.terms() {
            acc += c * other.poly.coeff(n).conj();
        }
        Ok(acc)
    }

    pub fn norm(&self) -> f64 {
        self.poly
            .terms()
            .map(|(_, c)| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn evaluate(&self, phi: &[f64]) -> Complex64 {
        assert_eq!(phi.len(), self.dim());
        let mut acc = Complex64::new(0.0, 0.0);
        for (n, c) in self.poly.terms() {
            let dot: f64 = n
                .0
                .iter()
                .zip(phi)
                .zip(&self.half_shift)
                .map(|((&nk, &pk), &hs)| (nk as f64 + if hs { 0.5 } else { 0.0 }) * pk)
                .sum();
            acc += c * Complex64::from_polar(1.0, dot);
        }
        acc
    }

    /// Multiplication by an integer-index function; closed on the shifted
    /// basis since integer shifts preserve the half-integer offsets.
    pub fn multiply_by(&self, f: &FourierPolynomial) -> Result<WaveFunction> {
        Ok(WaveFunction {
            poly: self.poly.multiply(f)?,
            half_shift: self.half_shift.clone(),
        })
    }

    /// Angle derivative respecting half shifts: `c_n -> i (n_k + hs_k/2) c_n`.
    pub fn partial_phi(&self, k: usize) -> Result<WaveFunction> {
        if k >= self.dim() {
            return Err(Error::AxisOutOfRange {
                axis: k,
                dim: self.dim(),
            });
        }
        let shift = if self.half_shift[k] { 0.5 } else { 0.0 };
        let mut poly = FourierPolynomial::zero(self.dim());
        for (n, c) in self.poly.terms() {
            poly.insert(n.clone(), Complex64::new(0.0, n.0[k] as f64 + shift) * c);
        }
        Ok(WaveFunction {
            poly,
            half_shift: self.half_shift.clone(),
        })
    }

    pub fn add(&self, other: &WaveFunction) -> Result<WaveFunction> {
        self.check_compatible(other)?;
        Ok(WaveFunction {
            poly: self.poly.add(&other.poly)?,
            half_shift: self.half_shift.clone(),
        })
    }

    pub fn scale(&self, c: Complex64) -> WaveFunction {
        WaveFunction {
            poly: self.poly.scale(c),
            half_shift: self.half_shift.clone(),
        }
    }
}
