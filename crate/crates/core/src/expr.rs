//! Closed-form expression trees with exact symbolic partial derivatives,
//! plus the tiny grammar used by configuration files: `+ - * / ^` with
//! `cos`, `sin`, `exp`, `sqrt` over named symbols.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::spectra::ActionPolynomial;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    /// Integer power (negative exponents allowed).
    Pow(Box<Expr>, i64),
    Cos(Box<Expr>),
    Sin(Box<Expr>),
    Exp(Box<Expr>),
    Sqrt(Box<Expr>),
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn eval(&self, vars: &HashMap<String, f64>) -> Result<f64> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(name) => *vars.get(name).ok_or_else(|| {
                Error::ParseError(format!("unbound variable '{name}' in expression"))
            })?,
            Expr::Add(a, b) => a.eval(vars)? + b.eval(vars)?,
            Expr::Sub(a, b) => a.eval(vars)? - b.eval(vars)?,
            Expr::Mul(a, b) => a.eval(vars)? * b.eval(vars)?,
            Expr::Div(a, b) => a.eval(vars)? / b.eval(vars)?,
            Expr::Neg(a) => -a.eval(vars)?,
            Expr::Pow(a, k) => a.eval(vars)?.powi(*k as i32),
            Expr::Cos(a) => a.eval(vars)?.cos(),
            Expr::Sin(a) => a.eval(vars)?.sin(),
            Expr::Exp(a) => a.eval(vars)?.exp(),
            Expr::Sqrt(a) => a.eval(vars)?.sqrt(),
        };
        Ok(v)
    }

    /// Exact symbolic partial derivative with light zero/one folding.
    pub fn diff(&self, var: &str) -> Expr {
        use Expr::*;
        match self {
            Const(_) => Const(0.0),
            Var(name) => {
                if name == var {
                    Const(1.0)
                } else {
                    Const(0.0)
                }
            }
            Add(a, b) => add(a.diff(var), b.diff(var)),
            Sub(a, b) => sub(a.diff(var), b.diff(var)),
            Mul(a, b) => add(
                mul(a.diff(var), (**b).clone()),
                mul((**a).clone(), b.diff(var)),
            ),
            Div(a, b) => {
                // (a'b - ab') / b^2
                let num = sub(
                    mul(a.diff(var), (**b).clone()),
                    mul((**a).clone(), b.diff(var)),
                );
                div(num, Pow(b.clone(), 2))
            }
            Neg(a) => neg(a.diff(var)),
            Pow(a, k) => {
                if *k == 0 {
                    Const(0.0)
                } else {
                    mul(
                        mul(Const(*k as f64), Pow(a.clone(), k - 1)),
                        a.diff(var),
                    )
                }
            }
            Cos(a) => neg(mul(Sin(a.clone()), a.diff(var))),
            Sin(a) => mul(Cos(a.clone()), a.diff(var)),
            Exp(a) => mul(Exp(a.clone()), a.diff(var)),
            Sqrt(a) => div(a.diff(var), mul(Const(2.0), Sqrt(a.clone()))),
        }
    }

    /// Expands the expression into a polynomial over the given variable
    /// names. Fails when any non-polynomial node (trig, exp, division,
    /// negative power, foreign variable) is present.
    pub fn to_polynomial(&self, vars: &[String]) -> Result<ActionPolynomial> {
        let dim = vars.len();
        let mono = self.expand_poly(vars)?;
        let mut p = ActionPolynomial::new(dim);
        for (d, c) in mono {
            p.add_term(d, c);
        }
        Ok(p)
    }

    fn expand_poly(&self, vars: &[String]) -> Result<Vec<(Vec<u32>, f64)>> {
        let dim = vars.len();
        use Expr::*;
        match self {
            Const(c) => Ok(vec![(vec![0; dim], *c)]),
            Var(name) => {
                let k = vars.iter().position(|v| v == name).ok_or_else(|| {
                    Error::ParseError(format!("variable '{name}' is not a polynomial symbol here"))
                })?;
                let mut d = vec![0u32; dim];
                d[k] = 1;
                Ok(vec![(d, 1.0)])
            }
            Add(a, b) => {
                let mut out = a.expand_poly(vars)?;
                out.extend(b.expand_poly(vars)?);
                Ok(out)
            }
            Sub(a, b) => {
                let mut out = a.expand_poly(vars)?;
                out.extend(b.expand_poly(vars)?.into_iter().map(|(d, c)| (d, -c)));
                Ok(out)
            }
            Neg(a) => Ok(a
                .expand_poly(vars)?
                .into_iter()
                .map(|(d, c)| (d, -c))
                .collect()),
            Mul(a, b) => {
                let pa = a.expand_poly(vars)?;
                let pb = b.expand_poly(vars)?;
                let mut out = Vec::new();
                for (da, ca) in &pa {
                    for (db, cb) in &pb {
                        let d: Vec<u32> = da.iter().zip(db).map(|(x, y)| x + y).collect();
                        out.push((d, ca * cb));
                    }
                }
                Ok(out)
            }
            Pow(a, k) => {
                if *k < 0 {
                    return Err(Error::ParseError(
                        "negative powers are not polynomial".into(),
                    ));
                }
                let mut out = vec![(vec![0u32; dim], 1.0)];
                let pa = a.expand_poly(vars)?;
                for _ in 0..*k {
                    let mut next = Vec::new();
                    for (d1, c1) in &out {
                        for (d2, c2) in &pa {
                            let d: Vec<u32> = d1.iter().zip(d2).map(|(x, y)| x + y).collect();
                            next.push((d, c1 * c2));
                        }
                    }
                    out = next;
                }
                Ok(out)
            }
            Div(a, b) => {
                // allow division by a nonzero constant only
                match b.expand_poly(vars) {
                    Ok(pb) if pb.iter().all(|(d, _)| d.iter().all(|&x| x == 0)) => {
                        let denom: f64 = pb.iter().map(|(_, c)| c).sum();
                        if denom == 0.0 {
                            return Err(Error::ParseError("division by zero constant".into()));
                        }
                        Ok(a.expand_poly(vars)?
                            .into_iter()
                            .map(|(d, c)| (d, c / denom))
                            .collect())
                    }
                    _ => Err(Error::ParseError(
                        "division by a non-constant is not polynomial".into(),
                    )),
                }
            }
            Cos(_) | Sin(_) | Exp(_) | Sqrt(_) => Err(Error::ParseError(
                "transcendental function in polynomial context".into(),
            )),
        }
    }

    /// Expands into a Fourier polynomial over the angle symbols
    /// `phi1..phim`. Angles may appear only inside `cos`/`sin` of
    /// integer-coefficient linear combinations; every other variable must be
    /// bound numerically in `env`.
    pub fn to_fourier(
        &self,
        m: usize,
        env: &HashMap<String, f64>,
    ) -> Result<crate::fourier::FourierPolynomial> {
        use crate::fourier::{FourierPolynomial, MultiIndex};
        use num_complex::Complex64;
        type F = FourierPolynomial;
        let constant = |x: f64| F::constant(m, Complex64::new(x, 0.0));
        match self {
            Expr::Const(c) => Ok(constant(*c)),
            Expr::Var(name) => {
                if phi_axis(name, m).is_some() {
                    Err(Error::ParseError(format!(
                        "angle variable '{name}' may only appear inside cos/sin"
                    )))
                } else {
                    Ok(constant(*env.get(name).ok_or_else(|| {
                        Error::ParseError(format!("unbound variable '{name}' in expression"))
                    })?))
                }
            }
            Expr::Add(a, b) => a.to_fourier(m, env)?.add(&b.to_fourier(m, env)?),
            Expr::Sub(a, b) => a.to_fourier(m, env)?.sub(&b.to_fourier(m, env)?),
            Expr::Mul(a, b) => a.to_fourier(m, env)?.multiply(&b.to_fourier(m, env)?),
            Expr::Div(a, b) => {
                let d = b.eval_constant(env)?;
                if d == 0.0 {
                    return Err(Error::ParseError("division by zero in expression".into()));
                }
                Ok(a.to_fourier(m, env)?.scale(Complex64::new(1.0 / d, 0.0)))
            }
            Expr::Neg(a) => Ok(a.to_fourier(m, env)?.scale(Complex64::new(-1.0, 0.0))),
            Expr::Pow(a, k) => {
                if *k < 0 {
                    return Ok(constant(a.eval_constant(env)?.powi(*k as i32)));
                }
                let base = a.to_fourier(m, env)?;
                let mut out = F::one(m);
                for _ in 0..*k {
                    out = out.multiply(&base)?;
                }
                Ok(out)
            }
            Expr::Cos(arg) | Expr::Sin(arg) => {
                let (n, c) = arg.linear_phi_form(m, env)?;
                let plus = F::basis(MultiIndex::new(n.clone()))
                    .scale(Complex64::from_polar(1.0, c));
                let minus = F::basis(MultiIndex::new(n.iter().map(|x| -x).collect()))
                    .scale(Complex64::from_polar(1.0, -c));
                let half = Complex64::new(0.5, 0.0);
                match self {
                    Expr::Cos(_) => plus.add(&minus).map(|f| f.scale(half)),
                    _ => plus
                        .sub(&minus)
                        .map(|f| f.scale(half * Complex64::new(0.0, -1.0))),
                }
            }
            Expr::Exp(a) => Ok(constant(a.eval_constant(env)?.exp())),
            Expr::Sqrt(a) => {
                let v = a.eval_constant(env)?;
                if v < 0.0 {
                    return Err(Error::AnalyticDomainViolation(
                        "square root of a negative constant".into(),
                    ));
                }
                Ok(constant(v.sqrt()))
            }
        }
    }

    /// Evaluates a subtree that must not involve any angle variable.
    fn eval_constant(&self, env: &HashMap<String, f64>) -> Result<f64> {
        for name in self.variables() {
            if !env.contains_key(&name) {
                return Err(Error::ParseError(format!(
                    "expected a constant subexpression, found variable '{name}'"
                )));
            }
        }
        self.eval(env)
    }

    /// Writes the subtree as `sum_k n_k phi_k + c` with integer `n_k`.
    fn linear_phi_form(&self, m: usize, env: &HashMap<String, f64>) -> Result<(Vec<i64>, f64)> {
        let mut coeffs = vec![0.0f64; m];
        let mut constant = 0.0;
        self.accumulate_linear(m, env, 1.0, &mut coeffs, &mut constant)?;
        let mut n = Vec::with_capacity(m);
        for c in coeffs {
            if (c - c.round()).abs() > 1e-9 {
                return Err(Error::ParseError(format!(
                    "angle coefficient {c} is not an integer"
                )));
            }
            n.push(c.round() as i64);
        }
        Ok((n, constant))
    }

    fn accumulate_linear(
        &self,
        m: usize,
        env: &HashMap<String, f64>,
        scale: f64,
        coeffs: &mut [f64],
        constant: &mut f64,
    ) -> Result<()> {
        match self {
            Expr::Var(name) => {
                if let Some(k) = phi_axis(name, m) {
                    coeffs[k] += scale;
                    return Ok(());
                }
                *constant += scale * self.eval_constant(env)?;
                Ok(())
            }
            Expr::Add(a, b) => {
                a.accumulate_linear(m, env, scale, coeffs, constant)?;
                b.accumulate_linear(m, env, scale, coeffs, constant)
            }
            Expr::Sub(a, b) => {
                a.accumulate_linear(m, env, scale, coeffs, constant)?;
                b.accumulate_linear(m, env, -scale, coeffs, constant)
            }
            Expr::Neg(a) => a.accumulate_linear(m, env, -scale, coeffs, constant),
            Expr::Mul(a, b) => {
                // one factor must be angle-free
                if a.is_angle_free(m) {
                    let c = a.eval_constant(env)?;
                    b.accumulate_linear(m, env, scale * c, coeffs, constant)
                } else if b.is_angle_free(m) {
                    let c = b.eval_constant(env)?;
                    a.accumulate_linear(m, env, scale * c, coeffs, constant)
                } else {
                    Err(Error::ParseError(
                        "cos/sin argument is not linear in the angles".into(),
                    ))
                }
            }
            Expr::Div(a, b) => {
                if b.is_angle_free(m) {
                    let d = b.eval_constant(env)?;
                    if d == 0.0 {
                        return Err(Error::ParseError("division by zero in expression".into()));
                    }
                    a.accumulate_linear(m, env, scale / d, coeffs, constant)
                } else {
                    Err(Error::ParseError(
                        "cos/sin argument is not linear in the angles".into(),
                    ))
                }
            }
            _ if self.is_angle_free(m) => {
                *constant += scale * self.eval_constant(env)?;
                Ok(())
            }
            _ => Err(Error::ParseError(
                "cos/sin argument is not linear in the angles".into(),
            )),
        }
    }

    fn is_angle_free(&self, m: usize) -> bool {
        self.variables()
            .iter()
            .all(|name| phi_axis(name, m).is_none())
    }

    /// All variable names appearing in the tree.
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        use Expr::*;
        match self {
            Const(_) => {}
            Var(name) => out.push(name.clone()),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Neg(a) | Pow(a, _) | Cos(a) | Sin(a) | Exp(a) | Sqrt(a) => a.collect_vars(out),
        }
    }
}

/// 0-based axis of an angle symbol `phi1..phim`, if `name` is one.
fn phi_axis(name: &str, m: usize) -> Option<usize> {
    let rest = name.strip_prefix("phi")?;
    let k: usize = rest.parse().ok()?;
    if 1 <= k && k <= m {
        Some(k - 1)
    } else {
        None
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), _) if *x == 0.0 => b,
        (_, Expr::Const(y)) if *y == 0.0 => a,
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (_, Expr::Const(y)) if *y == 0.0 => a,
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), _) if *x == 0.0 => Expr::Const(0.0),
        (_, Expr::Const(y)) if *y == 0.0 => Expr::Const(0.0),
        (Expr::Const(x), _) if *x == 1.0 => b,
        (_, Expr::Const(y)) if *y == 1.0 => a,
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), _) if *x == 0.0 => Expr::Const(0.0),
        (_, Expr::Const(y)) if *y == 1.0 => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match &a {
        Expr::Const(x) => Expr::Const(-x),
        _ => Expr::Neg(Box::new(a)),
    }
}

// ---- parser ----------------------------------------------------------

struct Parser<'a> {
    input: &'a [u8],
    pos: usize,
}

/// Parses the expression grammar:
/// `expr := term (('+'|'-') term)*`,
/// `term := unary (('*'|'/') unary)*`,
/// `unary := '-' unary | power`,
/// `power := atom ('^' integer)?`,
/// `atom := number | ident | ident '(' expr ')' | '(' expr ')'`.
pub fn parse(input: &str) -> Result<Expr> {
    let mut p = Parser {
        input: input.as_bytes(),
        pos: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.input.len() {
        return Err(Error::ParseError(format!(
            "unexpected trailing input at byte {} of '{}'",
            p.pos, input
        )));
    }
    Ok(e)
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.input.len() && self.input[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.input.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.pos += 1;
        Some(c)
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(b'/') => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.bump();
            let mut negative = false;
            if self.peek() == Some(b'-') {
                self.bump();
                negative = true;
            }
            let k = self.integer()?;
            return Ok(Expr::Pow(Box::new(base), if negative { -k } else { k }));
        }
        Ok(base)
    }

    fn integer(&mut self) -> Result<i64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.input.len() && self.input[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::ParseError(format!(
                "expected integer exponent at byte {start}"
            )));
        }
        std::str::from_utf8(&self.input[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|e| Error::ParseError(format!("bad exponent: {e}")))
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.bump();
                let e = self.expr()?;
                if self.bump() != Some(b')') {
                    return Err(Error::ParseError("expected ')'".into()));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            other => Err(Error::ParseError(format!(
                "unexpected token {:?} at byte {}",
                other.map(|c| c as char),
                self.pos
            ))),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.input.len() {
            let c = self.input[self.pos];
            if c.is_ascii_digit() || c == b'.' {
                self.pos += 1;
            } else if (c == b'e' || c == b'E')
                && self.pos > start
                && self
                    .input
                    .get(self.pos + 1)
                    .map(|&n| n.is_ascii_digit() || n == b'+' || n == b'-')
                    .unwrap_or(false)
            {
                self.pos += 2;
            } else {
                break;
            }
        }
        std::str::from_utf8(&self.input[start..self.pos])
            .unwrap()
            .parse()
            .map(Expr::Const)
            .map_err(|e| Error::ParseError(format!("bad number literal: {e}")))
    }

    fn ident(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.input.len()
            && (self.input[self.pos].is_ascii_alphanumeric() || self.input[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.input[start..self.pos])
            .unwrap()
            .to_string();
        if self.peek() == Some(b'(') {
            self.bump();
            let arg = self.expr()?;
            if self.bump() != Some(b')') {
                return Err(Error::ParseError(format!(
                    "expected ')' after argument of '{name}'"
                )));
            }
            let arg = Box::new(arg);
            return match name.as_str() {
                "cos" => Ok(Expr::Cos(arg)),
                "sin" => Ok(Expr::Sin(arg)),
                "exp" => Ok(Expr::Exp(arg)),
                "sqrt" => Ok(Expr::Sqrt(arg)),
                _ => Err(Error::ParseError(format!("unknown function '{name}'"))),
            };
        }
        Ok(Expr::Var(name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn parse_and_eval_basic() {
        let e = parse("0.5*(p1^2 + q1^2)").unwrap();
        let v = e.eval(&env(&[("p1", 3.0), ("q1", 4.0)])).unwrap();
        assert_eq!(v, 12.5);
    }

    #[test]
    fn parse_functions_and_unary_minus() {
        let e = parse("-cos(phi1) + 2*sin(phi1)^2").unwrap();
        let v = e.eval(&env(&[("phi1", 0.0)])).unwrap();
        assert_eq!(v, -1.0);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(parse("1 + * 2").is_err());
        assert!(parse("foo(3)").is_err());
        assert!(parse("(1 + 2").is_err());
        assert!(parse("1 2").is_err());
    }

    #[test]
    fn diff_polynomial() {
        let e = parse("q1^3 + 2*q1").unwrap();
        let d = e.diff("q1");
        for x in [-1.5, 0.0, 2.0] {
            let got = d.eval(&env(&[("q1", x)])).unwrap();
            assert!((got - (3.0 * x * x + 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn diff_trig_chain_rule() {
        let e = parse("sin(q1^2)").unwrap();
        let d = e.diff("q1");
        let x = 0.7f64;
        let expect = (x * x).cos() * 2.0 * x;
        assert!((d.eval(&env(&[("q1", x)])).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn diff_matches_finite_difference() {
        let e = parse("exp(q1)*cos(q1) + sqrt(q1 + 2)/q1").unwrap();
        let d = e.diff("q1");
        let x = 1.3;
        let h = 1e-6;
        let fd = (e.eval(&env(&[("q1", x + h)])).unwrap()
            - e.eval(&env(&[("q1", x - h)])).unwrap())
            / (2.0 * h);
        assert!((d.eval(&env(&[("q1", x)])).unwrap() - fd).abs() < 1e-8);
    }

    #[test]
    fn to_polynomial_expansion() {
        let e = parse("(I1 + I2)^2 - I2^2").unwrap();
        let p = e
            .to_polynomial(&["I1".to_string(), "I2".to_string()])
            .unwrap();
        assert_eq!(p.eval(&[2.0, 3.0]), 4.0 + 12.0);
        assert_eq!(p.degree_in(1), 1);
    }

    #[test]
    fn to_polynomial_rejects_trig() {
        let e = parse("cos(I1)").unwrap();
        assert!(e.to_polynomial(&["I1".to_string()]).is_err());
    }

    #[test]
    fn unbound_variable_errors() {
        let e = parse("q1 + q2").unwrap();
        assert!(e.eval(&env(&[("q1", 1.0)])).is_err());
    }

    #[test]
    fn fourier_expansion_of_cosine() {
        use crate::fourier::MultiIndex;
        let f = parse("2*cos(phi1)").unwrap().to_fourier(1, &env(&[])).unwrap();
        assert_eq!(f.coeff(&MultiIndex::new(vec![1])).re, 1.0);
        assert_eq!(f.coeff(&MultiIndex::new(vec![-1])).re, 1.0);
        assert_eq!(f.num_terms(), 2);
    }

    #[test]
    fn fourier_expansion_matches_pointwise_evaluation() {
        let e = parse("s1*sin(2*phi1 - phi2) + cos(phi2)^2 - 0.5").unwrap();
        let bindings = env(&[("s1", 1.5)]);
        let f = e.to_fourier(2, &bindings).unwrap();
        for i in 0..7 {
            for j in 0..5 {
                let phi = [0.9 * i as f64, 1.3 * j as f64];
                let mut vars = bindings.clone();
                vars.insert("phi1".into(), phi[0]);
                vars.insert("phi2".into(), phi[1]);
                let direct = e.eval(&vars).unwrap();
                let expanded = f.evaluate(&phi);
                assert!((expanded.re - direct).abs() < 1e-12);
                assert!(expanded.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fourier_expansion_rejects_bare_angle() {
        let e = parse("phi1 + 1").unwrap();
        assert!(e.to_fourier(1, &env(&[])).is_err());
        let nonlinear = parse("cos(phi1^2)").unwrap();
        assert!(nonlinear.to_fourier(1, &env(&[])).is_err());
        let fractional = parse("cos(phi1/2)").unwrap();
        assert!(fractional.to_fourier(1, &env(&[])).is_err());
    }
}
