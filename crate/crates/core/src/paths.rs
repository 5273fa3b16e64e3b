//! Pointed paths on a uniform grid of `[0, 1]`, Cameron-Martin shifts,
//! stochastic integrals and the Riemann-sum quadratic form.
//!
//! Shift derivatives are sampled at cell midpoints `t_{i+1/2}`. With that
//! convention the built-in sine family is exactly orthonormal on every grid
//! that resolves it, and the discrete stochastic integrals of the family are
//! exactly i.i.d. standard normal.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::estimator::standard_normal;

/// Uniform grid `t_i = i / n`, `i = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    n: usize,
}

const NODE_TOL: f64 = 1e-9;

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "grid needs at least one step".into(),
            ));
        }
        Ok(Self { n })
    }

    pub fn steps(&self) -> usize {
        self.n
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.n as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n).map(|i| self.node(i))
    }

    /// Index of the node at time `t`, if `t` is (numerically) a node.
    pub fn node_index(&self, t: f64) -> Result<usize> {
        let x = t * self.n as f64;
        let i = x.round();
        if !(0.0..=1.0).contains(&t) || (x - i).abs() > NODE_TOL * self.n as f64 {
            return Err(Error::OffGrid { t, n: self.n });
        }
        Ok(i as usize)
    }

    fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self.n != other.n {
            return Err(Error::GridMismatch {
                left: self.n,
                right: other.n,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    grid: Grid,
    values: Vec<f64>,
}

impl DiscretePath {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n + 1 {
            return Err(Error::InvalidArgument(format!(
                "path has {} values, grid needs {}",
                values.len(),
                grid.n + 1
            )));
        }
        if values[0] != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "path must start at 0, got {}",
                values[0]
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zero(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n + 1],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }

    pub fn at(&self, t: f64) -> Result<f64> {
        Ok(self.values[self.grid.node_index(t)?])
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `w + eps * phi`.
    pub fn shifted(&self, phi: &Shift, eps: f64) -> Result<Self> {
        self.grid.ensure_same(&phi.grid)?;
        let values = self
            .values
            .iter()
            .zip(&phi.values)
            .map(|(w, p)| w + eps * p)
            .collect();
        Ok(Self {
            grid: self.grid,
            values,
        })
    }

    /// Restriction to every `factor`-th node.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.grid.n.is_multiple_of(factor) {
            return Err(Error::InvalidArgument(format!(
                "cannot coarsen {} steps by {factor}",
                self.grid.n
            )));
        }
        let grid = Grid::new(self.grid.n / factor)?;
        let values = self.values.iter().step_by(factor).copied().collect();
        Ok(Self { grid, values })
    }

    /// CSV with header `t,w`, one row per node.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,w\n");
        for (i, w) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{},{}", self.grid.node(i), w);
        }
        s
    }
}

/// A Cameron-Martin direction `phi` with `phi(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Shift {
    grid: Grid,
    /// `phi(t_i)`, `i = 0..=n`.
    values: Vec<f64>,
    /// `phi'(t_{i+1/2})`, `i = 0..n`.
    derivs: Vec<f64>,
    /// `phi''(t_i)`, `i = 0..=n`, when known.
    second: Option<Vec<f64>>,
    /// Caller-asserted `phi'(1) = 0`.
    flat_at_one: bool,
}

impl Shift {
    fn validated(self) -> Result<Self> {
        if self.values[0] != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "shift must vanish at t = 0, got {}",
                self.values[0]
            )));
        }
        let bad = self
            .values
            .iter()
            .chain(&self.derivs)
            .chain(self.second.iter().flatten())
            .find(|v| !v.is_finite());
        if let Some(v) = bad {
            return Err(Error::InvalidArgument(format!(
                "non-finite shift entry {v}"
            )));
        }
        Ok(self)
    }

    pub fn zero(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n + 1],
            derivs: vec![0.0; grid.n],
            second: Some(vec![0.0; grid.n + 1]),
            flat_at_one: true,
        }
    }

    /// `phi(t) = slope * t`.
    pub fn linear(grid: Grid, slope: f64) -> Self {
        Self {
            grid,
            values: grid.nodes().map(|t| slope * t).collect(),
            derivs: vec![slope; grid.n],
            second: Some(vec![0.0; grid.n + 1]),
            flat_at_one: slope == 0.0,
        }
    }

    /// Member `k >= 1` of the orthonormal family
    /// `e_k(t) = sqrt(2) sin((k - 1/2) pi t) / ((k - 1/2) pi)`.
    pub fn basis(grid: Grid, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("basis index starts at 1".into()));
        }
        let a = (k as f64 - 0.5) * PI;
        let r2 = std::f64::consts::SQRT_2;
        Self {
            grid,
            values: grid.nodes().map(|t| r2 * (a * t).sin() / a).collect(),
            derivs: (0..grid.n)
                .map(|i| r2 * (a * grid.midpoint(i)).cos())
                .collect(),
            second: Some(grid.nodes().map(|t| -r2 * a * (a * t).sin()).collect()),
            flat_at_one: true,
        }
        .validated()
    }

    /// Shift from an analytic function and its derivative.
    pub fn from_fn(
        grid: Grid,
        phi: impl Fn(f64) -> f64,
        dphi: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        Self {
            grid,
            values: grid.nodes().map(&phi).collect(),
            derivs: (0..grid.n).map(|i| dphi(grid.midpoint(i))).collect(),
            second: None,
            flat_at_one: false,
        }
        .validated()
    }

    /// Shift from node values only; derivatives are difference quotients.
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n + 1 {
            return Err(Error::InvalidArgument(
                "shift length does not match grid".into(),
            ));
        }
        let n = grid.n as f64;
        let derivs = values.windows(2).map(|w| (w[1] - w[0]) * n).collect();
        Self {
            grid,
            values,
            derivs,
            second: None,
            flat_at_one: false,
        }
        .validated()
    }

    /// Attach `phi''` and assert `phi'(1) = 0`, enabling the by-parts
    /// form of the stochastic integral.
    pub fn with_second_derivative(
        mut self,
        ddphi: impl Fn(f64) -> f64,
        flat_at_one: bool,
    ) -> Result<Self> {
        self.second = Some(self.grid.nodes().map(ddphi).collect());
        self.flat_at_one = flat_at_one;
        self.validated()
    }

    /// `sum_k a_k phi_k`.
    pub fn combination(terms: &[(f64, &Shift)]) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty combination".into()))?
            .1;
        let grid = first.grid;
        let mut out = Self::zero(grid);
        for (a, s) in terms {
            grid.ensure_same(&s.grid)?;
            for (o, v) in out.values.iter_mut().zip(&s.values) {
                *o += a * v;
            }
            for (o, v) in out.derivs.iter_mut().zip(&s.derivs) {
                *o += a * v;
            }
            out.second = match (out.second, &s.second) {
                (Some(mut acc), Some(v)) => {
                    acc.iter_mut().zip(v).for_each(|(o, v)| *o += a * v);
                    Some(acc)
                }
                _ => None,
            };
            out.flat_at_one &= s.flat_at_one;
        }
        Ok(out)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self::combination(&[(a, self)]).expect("single-term combination")
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn derivatives(&self) -> &[f64] {
        &self.derivs
    }

    pub fn second_derivatives(&self) -> Option<&[f64]> {
        self.second.as_deref()
    }

    pub fn at(&self, t: f64) -> Result<f64> {
        Ok(self.values[self.grid.node_index(t)?])
    }

    /// `sum_i phi'_i^2 dt`.
    pub fn norm_sq(&self) -> f64 {
        self.derivs.iter().map(|d| d * d).sum::<f64>() * self.grid.dt()
    }

    /// Node weights `c_j` with `A_phi(w) = sum_j c_j w_j` (summation by parts).
    pub fn integral_weights(&self) -> Vec<f64> {
        let n = self.grid.n;
        let mut c = vec![0.0; n + 1];
        for j in 1..=n {
            let next = if j < n { self.derivs[j] } else { 0.0 };
            c[j] = self.derivs[j - 1] - next;
        }
        c
    }
}

/// Finite atomic measure on `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualMeasure {
    atoms: Vec<(f64, f64)>,
}

impl DualMeasure {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        for &(t, a) in &atoms {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "atom time {t} outside (0, 1]"
                )));
            }
            if !a.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite atom weight {a}"
                )));
            }
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn pairing(&self, w: &DiscretePath) -> Result<f64> {
        self.atoms.iter().map(|&(t, a)| Ok(a * w.at(t)?)).sum()
    }

    /// Node indices of the atoms on `grid`; errors for off-grid atoms.
    pub fn node_indices(&self, grid: Grid) -> Result<Vec<(usize, f64)>> {
        self.atoms
            .iter()
            .map(|&(t, a)| Ok((grid.node_index(t)?, a)))
            .collect()
    }

    /// `sum_{j,k} a_j a_k min(t_j, t_k)`.
    pub fn kernel_form(&self) -> f64 {
        let mut s = 0.0;
        for &(tj, aj) in &self.atoms {
            for &(tk, ak) in &self.atoms {
                s += aj * ak * tj.min(tk);
            }
        }
        s
    }
}

pub fn sample_brownian<R: Rng + ?Sized>(grid: Grid, rng: &mut R) -> DiscretePath {
    let sd = grid.dt().sqrt();
    let mut values = Vec::with_capacity(grid.n + 1);
    let mut w = 0.0;
    values.push(0.0);
    for _ in 0..grid.n {
        w += sd * standard_normal(rng);
        values.push(w);
    }
    DiscretePath { grid, values }
}

/// `A_phi(w) = sum_i phi'(t_{i+1/2}) (w_{i+1} - w_i)`.
pub fn div_a(phi: &Shift, w: &DiscretePath) -> Result<f64> {
    phi.grid.ensure_same(&w.grid)?;
    Ok(phi
        .derivs
        .iter()
        .zip(w.increments())
        .map(|(d, dw)| d * dw)
        .sum())
}

/// By-parts form `-int w(t) phi''(t) dt` (trapezoid rule). Needs `phi''`
/// and the asserted boundary condition `phi'(1) = 0`; agrees with [`div_a`]
/// to `O(dt^2)` per path.
pub fn div_a_by_parts(phi: &Shift, w: &DiscretePath) -> Result<f64> {
    phi.grid.ensure_same(&w.grid)?;
    let second = phi.second.as_ref().ok_or_else(|| {
        Error::InvalidArgument("by-parts form needs the second derivative".into())
    })?;
    if !phi.flat_at_one {
        return Err(Error::InvalidArgument(
            "by-parts form needs phi'(1) = 0".into(),
        ));
    }
    let n = phi.grid.n;
    let inner: f64 = (1..n).map(|i| w.values[i] * second[i]).sum();
    let s = inner + 0.5 * w.values[n] * second[n];
    Ok(-s * phi.grid.dt())
}

/// `(1 / 2 pi) sum_i (dw_i)^2 / dt`.
pub fn riemann_q(w: &DiscretePath) -> f64 {
    let n = w.grid.n as f64;
    w.increments().map(|d| d * d).sum::<f64>() * n / (2.0 * PI)
}

/// `Q(w) - Q(w - phi)` through `(1/2 pi)(2 A_phi(w) - |phi|^2)`; no divergent
/// terms are formed.
pub fn q_difference(w: &DiscretePath, phi: &Shift) -> Result<f64> {
    Ok((2.0 * div_a(phi, w)? - phi.norm_sq()) / (2.0 * PI))
}

/// `(phi1 | phi2) = sum_i phi1'_i phi2'_i dt`.
pub fn inner_21(a: &Shift, b: &Shift) -> Result<f64> {
    a.grid.ensure_same(&b.grid)?;
    Ok(a.derivs
        .iter()
        .zip(&b.derivs)
        .map(|(x, y)| x * y)
        .sum::<f64>()
        * a.grid.dt())
}
