//! Sparse multivariate polynomials with exact differentiation.
//!
//! Polynomials back the builtin and user-supplied Hamiltonians and give the
//! bracket and homomorphism checks an exact symbolic route: brackets of two
//! polynomials are again polynomials, so one side of every identity can be
//! assembled without finite differences.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        Self::monomial(dim, vec![0; dim], value)
    }

    /// The coordinate function `x_index`.
    pub fn variable(dim: usize, index: usize) -> Self {
        let mut exps = vec![0; dim];
        exps[index] = 1;
        Self::monomial(dim, exps, 1.0)
    }

    pub fn monomial(dim: usize, exponents: Vec<u32>, coefficient: f64) -> Self {
        assert_eq!(
            exponents.len(),
            dim,
            "exponent vector length must equal dim"
        );
        let mut p = Self::zero(dim);
        if coefficient != 0.0 {
            p.terms.insert(exponents, coefficient);
        }
        p
    }

    /// Dense random polynomial: every monomial of total degree `<= max_degree`
    /// gets a coefficient drawn uniformly from `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(dim: usize, max_degree: u32, rng: &mut R) -> Self {
        let mut p = Self::zero(dim);
        for exps in exponents_up_to(dim, max_degree) {
            let c: f64 = rng.gen_range(-1.0..=1.0);
            p.terms.insert(exps, c);
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), *c))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.terms
            .iter()
            .map(|(exps, c)| {
                exps.iter().zip(x).fold(
                    *c,
                    |acc, (&e, &xi)| if e == 0 { acc } else { acc * xi.powi(e as i32) },
                )
            })
            .sum()
    }

    pub fn derivative(&self, index: usize) -> Self {
        let mut out = Self::zero(self.dim);
        for (exps, c) in &self.terms {
            let e = exps[index];
            if e == 0 {
                continue;
            }
            let mut lowered = exps.clone();
            lowered[index] = e - 1;
            *out.terms.entry(lowered).or_insert(0.0) += c * e as f64;
        }
        out.prune();
        out
    }

    /// Gradient evaluated at `x`, written into `out`.
    pub fn gradient_at(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        for (exps, c) in &self.terms {
            for i in 0..self.dim {
                let e = exps[i];
                if e == 0 {
                    continue;
                }
                let mut term = c * e as f64;
                for (j, (&ej, &xj)) in exps.iter().zip(x).enumerate() {
                    let power = if j == i { ej - 1 } else { ej };
                    if power > 0 {
                        term *= xj.powi(power as i32);
                    }
                }
                out[i] += term;
            }
        }
    }

    /// Antiderivative in variable `index` with zero constant of integration.
    pub fn integrate(&self, index: usize) -> Self {
        let mut out = Self::zero(self.dim);
        for (exps, c) in &self.terms {
            let mut raised = exps.clone();
            raised[index] += 1;
            *out.terms.entry(raised).or_insert(0.0) += c / (exps[index] + 1) as f64;
        }
        out.prune();
        out
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.terms.values_mut().for_each(|c| *c *= factor);
        out.prune();
        out
    }

    /// Re-embeds the polynomial into `new_dim >= dim` variables; the existing
    /// variables keep their indices.
    pub fn extend_dim(&self, new_dim: usize) -> Self {
        assert!(new_dim >= self.dim);
        let terms = self
            .terms
            .iter()
            .map(|(e, c)| {
                let mut e = e.clone();
                e.resize(new_dim, 0);
                (e, *c)
            })
            .collect();
        Self {
            dim: new_dim,
            terms,
        }
    }

    /// Parses expressions such as `0.5*q^2 + 0.5*p^2 - 0.1*z` over the given
    /// variable names. Terms are products of a coefficient and powers.
    pub fn parse(text: &str, variables: &[&str]) -> Result<Self> {
        let dim = variables.len();
        let mut out = Self::zero(dim);
        let cleaned: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        if cleaned.is_empty() {
            return Err(Error::InvalidArgument("empty polynomial".into()));
        }
        // split into signed terms, keeping exponent signs such as 1e-3 intact
        let mut terms = Vec::new();
        let mut current = String::new();
        let chars: Vec<char> = cleaned.chars().collect();
        for (i, &ch) in chars.iter().enumerate() {
            let in_exponent = i > 0
                && matches!(chars[i - 1], 'e' | 'E')
                && i >= 2
                && chars[i - 2].is_ascii_digit();
            if (ch == '+' || ch == '-')
                && i > 0
                && !in_exponent
                && chars[i - 1] != '^'
                && chars[i - 1] != '*'
            {
                terms.push(std::mem::take(&mut current));
            }
            current.push(ch);
        }
        terms.push(current);

        for term in terms {
            let (sign, body) = match term.strip_prefix('-') {
                Some(rest) => (-1.0, rest),
                None => (1.0, term.strip_prefix('+').unwrap_or(&term)),
            };
            if body.is_empty() {
                return Err(Error::InvalidArgument(format!("dangling sign in '{text}'")));
            }
            let mut coefficient = sign;
            let mut exps = vec![0u32; dim];
            for factor in body.split('*') {
                if let Ok(value) = factor.parse::<f64>() {
                    coefficient *= value;
                    continue;
                }
                let (name, power) = match factor.split_once('^') {
                    Some((n, p)) => (
                        n,
                        p.parse::<u32>().map_err(|_| {
                            Error::InvalidArgument(format!("bad exponent '{p}' in '{text}'"))
                        })?,
                    ),
                    None => (factor, 1),
                };
                let idx = variables.iter().position(|v| *v == name).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "unknown variable '{name}' (expected one of {variables:?})"
                    ))
                })?;
                exps[idx] += power;
            }
            out = &out + &Self::monomial(dim, exps, coefficient);
        }
        Ok(out)
    }

    fn prune(&mut self) {
        self.terms.retain(|_, c| *c != 0.0);
    }
}

fn exponents_up_to(dim: usize, max_degree: u32) -> Vec<Vec<u32>> {
    fn rec(dim: usize, budget: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == dim {
            out.push(prefix.clone());
            return;
        }
        for e in 0..=budget {
            prefix.push(e);
            rec(dim, budget - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, max_degree, &mut Vec::with_capacity(dim), &mut out);
    out
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.dim, rhs.dim);
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            *out.terms.entry(e.clone()).or_insert(0.0) += c;
        }
        out.prune();
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self + &(-rhs)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.dim, rhs.dim);
        let mut out = Polynomial::zero(self.dim);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                *out.terms.entry(e).or_insert(0.0) += ca * cb;
            }
        }
        out.prune();
        out
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (exps, c)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}")?;
            for (i, e) in exps.iter().enumerate() {
                match e {
                    0 => {}
                    1 => write!(f, "*x{i}")?,
                    _ => write!(f, "*x{i}^{e}")?,
                }
            }
        }
        Ok(())
    }
}
