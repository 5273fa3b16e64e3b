//! Sparse multivariate polynomials with real coefficients.
//!
//! Terms live in a `BTreeMap` keyed by exponent vectors, so iteration order
//! (and therefore floating-point summation order) is deterministic. Exact
//! zero coefficients are never stored.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Exponents = Vec<u32>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Exponents, f64>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, 1.0)
    }

    /// The coordinate `x_k` (zero-based).
    pub fn var(nvars: usize, k: usize) -> Self {
        let mut e = vec![0; nvars];
        e[k] = 1;
        Self::monomial(e, 1.0)
    }

    pub fn monomial(exponents: Exponents, coeff: f64) -> Self {
        let mut p = Self::zero(exponents.len());
        p.add_term(exponents, coeff);
        p
    }

    pub fn from_terms(
        nvars: usize,
        terms: impl IntoIterator<Item = (Exponents, f64)>,
    ) -> Result<Self> {
        let mut p = Self::zero(nvars);
        for (e, c) in terms {
            if e.len() != nvars {
                return Err(Error::InvalidArgument(format!(
                    "exponent vector of length {} for a {nvars}-variable polynomial",
                    e.len()
                )));
            }
            if !c.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite coefficient {c}"
                )));
            }
            p.add_term(e, c);
        }
        Ok(p)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, f64)> {
        self.terms.iter().map(|(e, c)| (e, *c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, e: &[u32]) -> f64 {
        self.terms.get(e).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.iter().sum()).max()
    }

    pub fn add_term(&mut self, e: Exponents, c: f64) {
        debug_assert_eq!(e.len(), self.nvars);
        if c == 0.0 {
            return;
        }
        match self.terms.entry(e) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == 0.0 {
                    o.remove();
                }
            }
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        if s == 0.0 {
            return Self::zero(self.nvars);
        }
        let mut p = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            p.add_term(e.clone(), c * s);
        }
        p
    }

    /// Partial derivative with respect to `x_k`.
    pub fn derivative(&self, k: usize) -> Self {
        let mut p = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[k] > 0 {
                let mut d = e.clone();
                d[k] -= 1;
                p.add_term(d, c * e[k] as f64);
            }
        }
        p
    }

    pub fn gradient(&self) -> Vec<Poly> {
        (0..self.nvars).map(|k| self.derivative(k)).collect()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.nvars);
        self.terms
            .iter()
            .map(|(e, c)| {
                c * e
                    .iter()
                    .zip(x)
                    .map(|(&p, &xi)| xi.powi(p as i32))
                    .product::<f64>()
            })
            .sum()
    }

    pub fn eval_gradient(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nvars)
            .map(|k| self.derivative(k).eval(x))
            .collect()
    }

    pub fn pow(&self, k: u32) -> Self {
        (0..k).fold(Self::one(self.nvars), |acc, _| &acc * self)
    }

    /// Largest absolute coefficient (0 for the zero polynomial).
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    fn check_vars(&self, other: &Self) {
        assert_eq!(
            self.nvars, other.nvars,
            "polynomials over different variable counts"
        );
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        self.check_vars(rhs);
        let mut p = self.clone();
        for (e, c) in &rhs.terms {
            p.add_term(e.clone(), *c);
        }
        p
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        self.check_vars(rhs);
        let mut p = self.clone();
        for (e, c) in &rhs.terms {
            p.add_term(e.clone(), -*c);
        }
        p
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        self.check_vars(rhs);
        let mut acc: BTreeMap<Exponents, f64> = BTreeMap::new();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let e: Exponents = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                *acc.entry(e).or_insert(0.0) += ca * cb;
            }
        }
        acc.retain(|_, c| *c != 0.0);
        Poly {
            nvars: self.nvars,
            terms: acc,
        }
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            for (k, &p) in e.iter().enumerate() {
                match p {
                    0 => {}
                    1 => write!(f, "*x{}", k + 1)?,
                    _ => write!(f, "*x{}^{p}", k + 1)?,
                }
            }
        }
        Ok(())
    }
}

/// All exponent vectors in `nvars` variables with total degree <= `max_degree`,
/// ordered by degree then lexicographically.
pub fn monomials_up_to(nvars: usize, max_degree: u32) -> Vec<Exponents> {
    let mut out = Vec::new();
    for d in 0..=max_degree {
        let mut cur = vec![0; nvars];
        fill(&mut out, &mut cur, 0, d);
    }
    out
}

fn fill(out: &mut Vec<Exponents>, cur: &mut Exponents, k: usize, remaining: u32) {
    if cur.is_empty() {
        if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if k == cur.len() - 1 {
        cur[k] = remaining;
        out.push(cur.clone());
        cur[k] = 0;
        return;
    }
    for p in (0..=remaining).rev() {
        cur[k] = p;
        fill(out, cur, k + 1, remaining - p);
    }
    cur[k] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cancellation_removes_terms() {
        let x = Poly::var(2, 0);
        let z = &x - &x;
        assert!(z.is_zero());
        assert_eq!(z.degree(), None);
    }

    #[test]
    fn product_and_derivative() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let p = &(&x * &x) * &y; // x^2 y
        assert_eq!(p.derivative(0), Poly::monomial(vec![1, 1], 2.0));
        assert_eq!(p.derivative(1), Poly::monomial(vec![2, 0], 1.0));
        assert_eq!(p.eval(&[3.0, 2.0]), 18.0);
        assert_eq!(p.degree(), Some(3));
    }

    #[test]
    fn monomial_count_is_binomial() {
        // C(K + d, d)
        assert_eq!(monomials_up_to(2, 3).len(), 10);
        assert_eq!(monomials_up_to(3, 2).len(), 10);
        assert_eq!(monomials_up_to(4, 4).len(), 70);
    }

    #[test]
    fn from_terms_rejects_bad_length() {
        assert!(Poly::from_terms(2, vec![(vec![1], 1.0)]).is_err());
    }
}
