//! Single-chart manifolds carrying a metric `g` or a symplectic form `Omega`,
//! Lie derivatives of those fields, and the divergence `D(X)` defined by
//! `L_X omega_mu = D(X) omega_mu` for `omega_mu = mu dx^1 ^ ... ^ dx^D`.
//!
//! Components are full (non-strict): `Omega = 1/2 Omega_ab dx^a ^ dx^b` with
//! `Omega_ab = -Omega_ba`, so `dp ^ dq` has `Omega_pq = 1`. Lowering uses
//! `X_a = X^b Omega_ba`. Mixing in strict components (summing only `a < b`)
//! halves traces such as `Omega^{ga} X_{g,a}`.
//!
//! Jacobians are stored as `J[a][c] = dX^a/dx^c`; field partials as a vector
//! indexed by the differentiation coordinate.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::RngStream;
use crate::poly::{monomials_up_to, Poly};
use crate::report::{Check, VerificationReport};

pub type MatFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type PartialsFn = Arc<dyn Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync>;
pub type VecFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type JacFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

pub const ANALYTIC_TOL: f64 = 1e-7;
pub const FD_TOL: f64 = 1e-5;
const MAX_RESAMPLE: usize = 100;
const DEGENERACY: f64 = 1e-10;
const PFAFFIAN_MAX_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Riemannian,
    Symplectic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Analytic,
    FiniteDifference,
}

impl Backend {
    pub fn tolerance(self) -> f64 {
        match self {
            Backend::Analytic => ANALYTIC_TOL,
            Backend::FiniteDifference => FD_TOL,
        }
    }
}

fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

fn shifted(x: &[f64], k: usize, h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[k] += h;
    y
}

fn fd_partials(f: &MatFn, x: &[f64]) -> Vec<DMatrix<f64>> {
    (0..x.len())
        .map(|k| {
            let h = fd_step(x[k]);
            (f(&shifted(x, k, h)) - f(&shifted(x, k, -h))) / (2.0 * h)
        })
        .collect()
}

fn fd_jacobian(f: &VecFn, x: &[f64]) -> DMatrix<f64> {
    let d = x.len();
    let mut j = DMatrix::zeros(f(x).len(), d);
    for k in 0..d {
        let h = fd_step(x[k]);
        let p = f(&shifted(x, k, h));
        let m = f(&shifted(x, k, -h));
        for a in 0..p.len() {
            j[(a, k)] = (p[a] - m[a]) / (2.0 * h);
        }
    }
    j
}

fn fd_gradient(f: &ScalarFn, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let h = fd_step(x[k]);
            (f(&shifted(x, k, h)) - f(&shifted(x, k, -h))) / (2.0 * h)
        })
        .collect()
}

#[derive(Clone)]
pub struct ChartedManifold {
    name: String,
    dim: usize,
    kind: Kind,
    field: MatFn,
    partials: Option<PartialsFn>,
    domain: Vec<(f64, f64)>,
}

impl std::fmt::Debug for ChartedManifold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChartedManifold")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("kind", &self.kind)
            .field("analytic_partials", &self.partials.is_some())
            .field("domain", &self.domain)
            .finish()
    }
}

impl ChartedManifold {
    /// Validates shape, (anti)symmetry and invertibility of the field at ten
    /// pseudo-random points of the domain box.
    pub fn new(
        name: impl Into<String>,
        kind: Kind,
        field: MatFn,
        partials: Option<PartialsFn>,
        domain: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let dim = domain.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("empty domain box".into()));
        }
        if domain.iter().any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidArgument(
                "domain box has an empty side".into(),
            ));
        }
        if kind == Kind::Symplectic && dim % 2 == 1 {
            return Err(Error::InvalidArgument(format!(
                "symplectic manifold needs even dimension, got {dim}"
            )));
        }
        let m = Self {
            name: name.into(),
            dim,
            kind,
            field,
            partials,
            domain,
        };
        let stream = RngStream::new(0x6e0, 0);
        for k in 0..10 {
            let x = m.random_point(&mut stream.draw_rng(k));
            let f = m.field(&x);
            if f.nrows() != dim || f.ncols() != dim {
                return Err(Error::InvalidArgument(format!(
                    "field is {}x{}, expected {dim}x{dim}",
                    f.nrows(),
                    f.ncols()
                )));
            }
            let scale = f.amax().max(1.0);
            match kind {
                Kind::Riemannian => {
                    let asym = (&f - f.transpose()).amax();
                    if asym > 1e-12 * scale {
                        return Err(Error::NotSymmetric { asymmetry: asym });
                    }
                }
                Kind::Symplectic => {
                    let dev = (&f + f.transpose()).amax();
                    if dev > 1e-12 * scale {
                        return Err(Error::NotAntisymmetric { deviation: dev });
                    }
                }
            }
            if let Some(p) = &m.partials {
                let p = p(&x);
                if p.len() != dim || p.iter().any(|d| d.nrows() != dim || d.ncols() != dim) {
                    return Err(Error::InvalidArgument(
                        "field partials have the wrong shape".into(),
                    ));
                }
            }
        }
        Ok(m)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn has_analytic_partials(&self) -> bool {
        self.partials.is_some()
    }

    pub fn field(&self, x: &[f64]) -> DMatrix<f64> {
        (self.field)(x)
    }

    /// `d_c field` for every `c`.
    pub fn field_partials(&self, x: &[f64], backend: Backend) -> Result<Vec<DMatrix<f64>>> {
        match (backend, &self.partials) {
            (Backend::Analytic, Some(p)) => Ok(p(x)),
            (Backend::Analytic, None) => Err(Error::Backend(format!(
                "{} has no analytic field partials",
                self.name
            ))),
            (Backend::FiniteDifference, _) => Ok(fd_partials(&self.field, x)),
        }
    }

    fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.domain
            .iter()
            .map(|&(a, b)| rng.random_range(a..b))
            .collect()
    }

    fn degenerate(&self, x: &[f64]) -> bool {
        let f = self.field(x);
        let det = f.clone().lu().determinant();
        !det.is_finite() || det.abs() <= DEGENERACY * f.amax().powi(self.dim as i32)
    }

    /// `n` points of the domain box, drawn from `stream` with draw index equal
    /// to the point index. Degenerate points are redrawn from the same
    /// generator, at most 100 times per point.
    pub fn sample_points(&self, n: usize, stream: &RngStream) -> Result<Vec<Vec<f64>>> {
        (0..n)
            .map(|i| {
                let mut rng = stream.draw_rng(i as u64);
                for _ in 0..=MAX_RESAMPLE {
                    let x = self.random_point(&mut rng);
                    if !self.degenerate(&x) {
                        return Ok(x);
                    }
                }
                Err(Error::Singular(format!(
                    "{}: no nondegenerate point after {MAX_RESAMPLE} redraws",
                    self.name
                )))
            })
            .collect()
    }

    /// Largest `|Omega_bc,a + Omega_ca,b + Omega_ab,c|` at `x`.
    pub fn closedness_residual(&self, x: &[f64], backend: Backend) -> Result<f64> {
        let dw = self.field_partials(x, backend)?;
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    let r = dw[a][(b, c)] + dw[b][(c, a)] + dw[c][(a, b)];
                    worst = worst.max(r.abs());
                }
            }
        }
        Ok(worst)
    }
}

/// A vector field `x -> X^a(x)` with optional Jacobian.
#[derive(Clone)]
pub struct VectorField {
    dim: usize,
    value: VecFn,
    jacobian: Option<JacFn>,
    polys: Option<Vec<Poly>>,
}

impl std::fmt::Debug for VectorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let polys = self
            .polys
            .as_ref()
            .map(|ps| ps.iter().map(|p| p.to_string()).collect::<Vec<_>>());
        f.debug_struct("VectorField")
            .field("dim", &self.dim)
            .field("polys", &polys)
            .finish()
    }
}

impl VectorField {
    pub fn new(dim: usize, value: VecFn, jacobian: Option<JacFn>) -> Self {
        Self {
            dim,
            value,
            jacobian,
            polys: None,
        }
    }

    /// Polynomial components; the Jacobian is exact.
    pub fn from_polys(polys: Vec<Poly>) -> Result<Self> {
        let dim = polys.len();
        if dim == 0 || polys.iter().any(|p| p.nvars() != dim) {
            return Err(Error::InvalidArgument(
                "need D polynomials in D variables".into(),
            ));
        }
        let vp = polys.clone();
        let value: VecFn = Arc::new(move |x| vp.iter().map(|p| p.eval(x)).collect());
        let grads: Vec<Vec<Poly>> = polys.iter().map(|p| p.gradient()).collect();
        let jacobian: JacFn =
            Arc::new(move |x| DMatrix::from_fn(dim, dim, |a, c| grads[a][c].eval(x)));
        Ok(Self {
            dim,
            value,
            jacobian: Some(jacobian),
            polys: Some(polys),
        })
    }

    pub fn constant(c: Vec<f64>) -> Result<Self> {
        let d = c.len();
        Self::from_polys(c.into_iter().map(|v| Poly::constant(d, v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn polys(&self) -> Option<&[Poly]> {
        self.polys.as_deref()
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.value)(x)
    }

    pub fn jacobian(&self, x: &[f64], backend: Backend) -> Result<DMatrix<f64>> {
        match (backend, &self.jacobian) {
            (Backend::Analytic, Some(j)) => Ok(j(x)),
            (Backend::Analytic, None) => Err(Error::Backend(
                "vector field has no analytic Jacobian".into(),
            )),
            (Backend::FiniteDifference, _) => Ok(fd_jacobian(&self.value, x)),
        }
    }

    /// Checks the analytic Jacobian against central differences at `x`.
    pub fn check_jacobian(&self, x: &[f64]) -> Result<()> {
        if let Some(j) = &self.jacobian {
            let a = j(x);
            let f = fd_jacobian(&self.value, x);
            let dev = (&a - &f).amax();
            if dev > FD_TOL * (1.0 + a.amax()) {
                return Err(Error::Backend(format!(
                    "Jacobian differs from differences by {dev:e} at {x:?}"
                )));
            }
        }
        Ok(())
    }
}

/// A scalar field with optional gradient.
#[derive(Clone)]
pub struct ScalarField {
    value: ScalarFn,
    gradient: Option<VecFn>,
    poly: Option<Poly>,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarField")
            .field("poly", &self.poly.as_ref().map(|p| p.to_string()))
            .finish()
    }
}

impl ScalarField {
    pub fn new(value: ScalarFn, gradient: Option<VecFn>) -> Self {
        Self {
            value,
            gradient,
            poly: None,
        }
    }

    pub fn from_poly(p: Poly) -> Self {
        let vp = p.clone();
        let grads = p.gradient();
        Self {
            value: Arc::new(move |x| vp.eval(x)),
            gradient: Some(Arc::new(move |x| grads.iter().map(|g| g.eval(x)).collect())),
            poly: Some(p),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &[f64], backend: Backend) -> Result<Vec<f64>> {
        match (backend, &self.gradient) {
            (Backend::Analytic, Some(g)) => Ok(g(x)),
            (Backend::Analytic, None) => Err(Error::Backend(
                "scalar field has no analytic gradient".into(),
            )),
            (Backend::FiniteDifference, _) => Ok(fd_gradient(&self.value, x)),
        }
    }
}

/// The coefficient `mu` of a top form `mu dx^1 ^ ... ^ dx^D`.
#[derive(Clone)]
pub struct TopFormDensity {
    value: ScalarFn,
    gradient: Option<VecFn>,
}

impl TopFormDensity {
    pub fn new(value: ScalarFn, gradient: Option<VecFn>) -> Self {
        Self { value, gradient }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &[f64], backend: Backend) -> Result<Vec<f64>> {
        match (backend, &self.gradient) {
            (Backend::Analytic, Some(g)) => Ok(g(x)),
            (Backend::Analytic, None) => {
                Err(Error::Backend("density has no analytic gradient".into()))
            }
            (Backend::FiniteDifference, _) => Ok(fd_gradient(&self.value, x)),
        }
    }
}

fn det(a: &DMatrix<f64>) -> f64 {
    a.clone().lu().determinant()
}

/// `d det A = sum_j det(A with column j replaced by column j of dA)`.
fn det_derivative(a: &DMatrix<f64>, da: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| {
            let mut b = a.clone();
            b.set_column(j, &da.column(j));
            det(&b)
        })
        .sum()
}

/// The density of the field's volume form: `|det g|^{1/2}` or `Pf(Omega)`.
/// With analytic field partials its gradient uses the column-replacement
/// rule for `d det` (and `d Pf = d det / (2 Pf)`), never the inverse field.
pub fn field_density(m: &ChartedManifold) -> TopFormDensity {
    let field = m.field.clone();
    let kind = m.kind;
    let value: ScalarFn = Arc::new(move |x| {
        let f = field(x);
        match kind {
            Kind::Riemannian => det(&f).abs().sqrt(),
            Kind::Symplectic => pfaffian(&f).unwrap_or(f64::NAN),
        }
    });
    let gradient = m.partials.clone().map(|partials| {
        let field = m.field.clone();
        let g: VecFn = Arc::new(move |x| {
            let f = field(x);
            let dd: Vec<f64> = partials(x)
                .iter()
                .map(|df| det_derivative(&f, df))
                .collect();
            let dt = det(&f);
            match kind {
                Kind::Riemannian => {
                    // d |det|^{1/2} = sign(det) d det / (2 |det|^{1/2})
                    let root = dt.abs().sqrt();
                    dd.iter().map(|v| dt.signum() * v / (2.0 * root)).collect()
                }
                Kind::Symplectic => {
                    let pf = pfaffian(&f).unwrap_or(f64::NAN);
                    dd.iter().map(|v| v / (2.0 * pf)).collect()
                }
            }
        });
        g
    });
    TopFormDensity { value, gradient }
}

fn require(m: &ChartedManifold, kind: Kind) -> Result<()> {
    if m.kind != kind {
        return Err(Error::InvalidArgument(format!(
            "{} is {:?}, operation needs {:?}",
            m.name, m.kind, kind
        )));
    }
    Ok(())
}

fn require_dim(m: &ChartedManifold, v: &VectorField) -> Result<()> {
    if m.dim != v.dim {
        return Err(Error::InvalidArgument(format!(
            "vector field has dimension {}, manifold {}",
            v.dim, m.dim
        )));
    }
    Ok(())
}

/// `X^c f_ab,c + f_cb X^c_,a + f_ac X^c_,b` for a rank-2 covariant field `f`.
fn lie_three_term(
    f: &DMatrix<f64>,
    df: &[DMatrix<f64>],
    xv: &[f64],
    j: &DMatrix<f64>,
) -> DMatrix<f64> {
    let d = f.nrows();
    DMatrix::from_fn(d, d, |a, b| {
        let mut s = 0.0;
        for c in 0..d {
            s += xv[c] * df[c][(a, b)] + f[(c, b)] * j[(c, a)] + f[(a, c)] * j[(c, b)];
        }
        s
    })
}

/// `(L_X g)_ab = X^c g_ab,c + g_cb X^c_,a + g_ac X^c_,b`.
pub fn lie_metric(
    m: &ChartedManifold,
    v: &VectorField,
    x: &[f64],
    backend: Backend,
) -> Result<DMatrix<f64>> {
    require(m, Kind::Riemannian)?;
    require_dim(m, v)?;
    let l = lie_three_term(
        &m.field(x),
        &m.field_partials(x, backend)?,
        &v.eval(x),
        &v.jacobian(x, backend)?,
    );
    Ok((&l + l.transpose()) * 0.5)
}

/// `X_a = X^b Omega_ba` and its partials `X_{a,c}`.
fn lowered(
    omega: &DMatrix<f64>,
    domega: &[DMatrix<f64>],
    xv: &[f64],
    j: &DMatrix<f64>,
) -> (Vec<f64>, DMatrix<f64>) {
    let d = omega.nrows();
    let low: Vec<f64> = (0..d)
        .map(|a| (0..d).map(|b| xv[b] * omega[(b, a)]).sum())
        .collect();
    let dlow = DMatrix::from_fn(d, d, |a, c| {
        (0..d)
            .map(|b| j[(b, c)] * omega[(b, a)] + xv[b] * domega[c][(b, a)])
            .sum()
    });
    (low, dlow)
}

fn closedness_tol(backend: Backend, scale: f64) -> f64 {
    match backend {
        Backend::Analytic => 1e-10 * (1.0 + scale),
        Backend::FiniteDifference => 1e-6 * (1.0 + scale),
    }
}

/// `(L_X Omega)_ab = X_{b,a} - X_{a,b}`. Requires `d Omega = 0` at `x`; the
/// result is cross-checked against the three-term formula.
pub fn lie_symplectic(
    m: &ChartedManifold,
    v: &VectorField,
    x: &[f64],
    backend: Backend,
) -> Result<DMatrix<f64>> {
    require(m, Kind::Symplectic)?;
    require_dim(m, v)?;
    let omega = m.field(x);
    let domega = m.field_partials(x, backend)?;
    let dscale = domega.iter().map(|d| d.amax()).fold(0.0, f64::max);
    let closed = m.closedness_residual(x, backend)?;
    if closed > closedness_tol(backend, dscale) {
        return Err(Error::NotClosed {
            point: x.to_vec(),
            residual: closed,
        });
    }
    let xv = v.eval(x);
    let j = v.jacobian(x, backend)?;
    let (_, dlow) = lowered(&omega, &domega, &xv, &j);
    let l = dlow.transpose() - &dlow;
    let three = lie_three_term(&omega, &domega, &xv, &j);
    let dev = (&l - &three).amax();
    if dev
        > closedness_tol(backend, dscale)
            * (1.0 + xv.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
            * 10.0
    {
        return Err(Error::Backend(format!(
            "reduced and three-term Lie derivatives differ by {dev:e} at {x:?}"
        )));
    }
    Ok(l)
}

/// `D(X) = X^a_,a + X^a (log |mu|)_,a`.
pub fn divergence_d(
    v: &VectorField,
    mu: &TopFormDensity,
    x: &[f64],
    backend: Backend,
) -> Result<f64> {
    let m = mu.eval(x);
    if m == 0.0 || !m.is_finite() {
        return Err(Error::VanishingDensity { point: x.to_vec() });
    }
    let j = v.jacobian(x, backend)?;
    let grad = mu.gradient(x, backend)?;
    let xv = v.eval(x);
    Ok(j.trace() + xv.iter().zip(&grad).map(|(a, g)| a * g / m).sum::<f64>())
}

fn inverse(f: &DMatrix<f64>, x: &[f64]) -> Result<DMatrix<f64>> {
    f.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("field at {x:?}")))
}

/// `1/2 Tr(f^{-1} L_X f)` by the closed formulas
/// `1/2 g^{ba} X^c g_ab,c + X^a_,a` and `Omega^{ca} X_{c,a}`
/// (`Omega^{ca}` the matrix inverse of `Omega_ab`), cross-checked against the
/// explicit matrix product.
pub fn trace_term(
    m: &ChartedManifold,
    v: &VectorField,
    x: &[f64],
    backend: Backend,
) -> Result<f64> {
    require_dim(m, v)?;
    let f = m.field(x);
    let inv = inverse(&f, x)?;
    let df = m.field_partials(x, backend)?;
    let xv = v.eval(x);
    let j = v.jacobian(x, backend)?;
    let d = m.dim;
    let (closed, lie) = match m.kind {
        Kind::Riemannian => {
            let mut s = 0.0;
            for a in 0..d {
                for b in 0..d {
                    for c in 0..d {
                        s += inv[(b, a)] * xv[c] * df[c][(a, b)];
                    }
                }
            }
            (0.5 * s + j.trace(), lie_metric(m, v, x, backend)?)
        }
        Kind::Symplectic => {
            let (_, dlow) = lowered(&f, &df, &xv, &j);
            let mut s = 0.0;
            for c in 0..d {
                for a in 0..d {
                    s += inv[(c, a)] * dlow[(c, a)];
                }
            }
            (s, lie_symplectic(m, v, x, backend)?)
        }
    };
    let naive = 0.5 * (&inv * &lie).trace();
    let tol = backend.tolerance() * (1.0 + closed.abs().max(naive.abs()));
    if (naive - closed).abs() > tol {
        return Err(Error::Backend(format!(
            "closed trace {closed} and matrix trace {naive} disagree at {x:?}"
        )));
    }
    Ok(closed)
}

/// `Gamma^a_{ac} X^c + X^a_,a` with the Christoffel symbols
/// `Gamma^a_{bc} = 1/2 g^{ad}(g_db,c + g_dc,b - g_bc,d)` contracted on `a = b`.
pub fn covariant_divergence(
    m: &ChartedManifold,
    v: &VectorField,
    x: &[f64],
    backend: Backend,
) -> Result<f64> {
    require(m, Kind::Riemannian)?;
    require_dim(m, v)?;
    let g = m.field(x);
    let inv = inverse(&g, x)?;
    let dg = m.field_partials(x, backend)?;
    let xv = v.eval(x);
    let j = v.jacobian(x, backend)?;
    let d = m.dim;
    let mut s = 0.0;
    for c in 0..d {
        let mut gamma = 0.0;
        for a in 0..d {
            for dd in 0..d {
                gamma += 0.5 * inv[(a, dd)] * (dg[c][(dd, a)] + dg[a][(dd, c)] - dg[dd][(a, c)]);
            }
        }
        s += gamma * xv[c];
    }
    Ok(s + j.trace())
}

/// Pfaffian by expansion along the first row; `Pf([[0, 1], [-1, 0]]) = 1`.
pub fn pfaffian(a: &DMatrix<f64>) -> Result<f64> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "Pfaffian of a {}x{} matrix",
            n,
            a.ncols()
        )));
    }
    if n % 2 == 1 {
        return Err(Error::InvalidArgument(format!(
            "Pfaffian needs even dimension, got {n}"
        )));
    }
    if n > PFAFFIAN_MAX_DIM {
        return Err(Error::Unsupported(format!(
            "Pfaffian expansion limited to D <= {PFAFFIAN_MAX_DIM}"
        )));
    }
    let dev = (a + a.transpose()).amax();
    if dev > 1e-12 * a.amax().max(1.0) {
        return Err(Error::NotAntisymmetric { deviation: dev });
    }
    let idx: Vec<usize> = (0..n).collect();
    Ok(pf_rec(a, &idx))
}

fn pf_rec(a: &DMatrix<f64>, idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 1.0;
    }
    let i = idx[0];
    let mut s = 0.0;
    for (k, &j) in idx.iter().enumerate().skip(1) {
        let a_ij = a[(i, j)];
        if a_ij == 0.0 {
            continue;
        }
        let rest: Vec<usize> = idx.iter().copied().filter(|&r| r != i && r != j).collect();
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        s += sign * a_ij * pf_rec(a, &rest);
    }
    s
}

/// Random antisymmetric matrix with entries uniform in `[-1, 1]`.
pub fn random_antisymmetric<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = rng.random_range(-1.0..1.0);
            a[(i, j)] = v;
            a[(j, i)] = -v;
        }
    }
    a
}

/// `Pf(A)^2 = det A` on random antisymmetric matrices of each dimension.
pub fn verify_pfaffian(
    dims: &[usize],
    n_cases: usize,
    stream: &RngStream,
) -> Result<VerificationReport> {
    let mut checks = Vec::new();
    for (di, &d) in dims.iter().enumerate() {
        let s = stream.child(di as u64);
        let mut worst: Option<Check> = None;
        for case in 0..n_cases {
            let a = random_antisymmetric(d, &mut s.draw_rng(case as u64));
            let pf = pfaffian(&a)?;
            let c = Check::exact(
                format!("Pf^2 vs det, D = {d}, case {case}"),
                pf * pf,
                det(&a),
                1e-10,
            );
            if worst.as_ref().is_none_or(|w| c.discrepancy > w.discrepancy) {
                worst = Some(c);
            }
        }
        checks.extend(worst);
    }
    let block = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    checks.push(Check::exact(
        "Pf of the canonical block",
        pfaffian(&block)?,
        1.0,
        0.0,
    ));
    Ok(
        VerificationReport::from_checks("geometry.pfaffian", "volform", checks)
            .with_seed(stream.seed),
    )
}

fn worst_of(checks: Vec<Check>) -> Option<Check> {
    checks.into_iter().fold(None, |w, c| match w {
        Some(w) if (w.pass && !c.pass) || (w.pass == c.pass && c.discrepancy > w.discrepancy) => {
            Some(c)
        }
        Some(w) => Some(w),
        None => Some(c),
    })
}

fn fmt_point(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v:.6}")).collect();
    format!("({})", parts.join(", "))
}

/// At `n_points` sampled points: `D(X)` for the field's own density equals
/// `1/2 Tr(f^{-1} L_X f)`; for metrics also the covariant divergence. Each
/// check in the report is the worst point for that identity.
pub fn verify_divergence_identity(
    m: &ChartedManifold,
    v: &VectorField,
    n_points: usize,
    stream: &RngStream,
    backend: Backend,
) -> Result<VerificationReport> {
    require_dim(m, v)?;
    let mu = field_density(m);
    let points = m.sample_points(n_points, stream)?;
    let tol = backend.tolerance();
    let mut main = Vec::new();
    let mut cov = Vec::new();
    for x in &points {
        if backend == Backend::Analytic {
            v.check_jacobian(x)?;
        }
        let lhs = divergence_d(v, &mu, x, backend)?;
        let rhs = trace_term(m, v, x, backend)?;
        let scale = 1.0 + lhs.abs().max(rhs.abs());
        main.push(Check::exact(
            format!("D(X) vs 1/2 Tr(f^-1 L_X f) at {}", fmt_point(x)),
            lhs,
            rhs,
            tol * scale,
        ));
        if m.kind == Kind::Riemannian {
            let c = covariant_divergence(m, v, x, backend)?;
            let scale = 1.0 + rhs.abs().max(c.abs());
            cov.push(Check::exact(
                format!(
                    "1/2 Tr(g^-1 L_X g) vs covariant divergence at {}",
                    fmt_point(x)
                ),
                rhs,
                c,
                tol * scale,
            ));
        }
    }
    let equation = match m.kind {
        Kind::Riemannian => "Divg",
        Kind::Symplectic => "DivO",
    };
    let checks: Vec<Check> = worst_of(main).into_iter().chain(worst_of(cov)).collect();
    Ok(
        VerificationReport::from_checks("geometry.divergence", equation, checks)
            .with_seed(stream.seed)
            .with_note(format!(
                "manifold {}, {n_points} points, {backend:?} backend",
                m.name
            )),
    )
}

fn bracket_field(x_field: &VectorField, y_field: &VectorField) -> Result<VectorField> {
    if let (Some(px), Some(py)) = (x_field.polys(), y_field.polys()) {
        let d = px.len();
        let polys = (0..d)
            .map(|a| {
                let mut s = Poly::zero(d);
                for b in 0..d {
                    s = &s + &(&px[b] * &py[a].derivative(b));
                    s = &s - &(&py[b] * &px[a].derivative(b));
                }
                s
            })
            .collect();
        return VectorField::from_polys(polys);
    }
    let (xa, ya) = (x_field.clone(), y_field.clone());
    let xj = xa
        .jacobian
        .clone()
        .ok_or_else(|| Error::Backend("bracket needs the Jacobian of X".into()))?;
    let yj = ya
        .jacobian
        .clone()
        .ok_or_else(|| Error::Backend("bracket needs the Jacobian of Y".into()))?;
    let value: VecFn = Arc::new(move |p| {
        let (xv, yv) = (xa.eval(p), ya.eval(p));
        let (jx, jy) = (xj(p), yj(p));
        let d = xv.len();
        (0..d)
            .map(|a| {
                (0..d)
                    .map(|b| xv[b] * jy[(a, b)] - yv[b] * jx[(a, b)])
                    .sum()
            })
            .collect()
    });
    Ok(VectorField::new(x_field.dim, value, None))
}

fn scaled_field(f: &ScalarField, v: &VectorField) -> Result<VectorField> {
    if let (Some(pf), Some(pv)) = (&f.poly, v.polys()) {
        return VectorField::from_polys(pv.iter().map(|p| pf * p).collect());
    }
    let grad = f
        .gradient
        .clone()
        .ok_or_else(|| Error::Backend("D(fX) needs the gradient of f".into()))?;
    let jac = v
        .jacobian
        .clone()
        .ok_or_else(|| Error::Backend("D(fX) needs the Jacobian of X".into()))?;
    let (fv, vv) = (f.clone(), v.clone());
    let (fv2, vv2) = (f.clone(), v.clone());
    let value: VecFn = Arc::new(move |p| {
        let s = fv.eval(p);
        vv.eval(p).iter().map(|c| s * c).collect()
    });
    let jacobian: JacFn = Arc::new(move |p| {
        let s = fv2.eval(p);
        let g = grad(p);
        let xv = vv2.eval(p);
        let j = jac(p);
        DMatrix::from_fn(xv.len(), xv.len(), |a, c| g[c] * xv[a] + s * j[(a, c)])
    });
    Ok(VectorField::new(v.dim, value, Some(jacobian)))
}

/// `d/dt g(x + t u)` at `t = 0` by central differences with one Richardson step.
fn directional_derivative(g: impl Fn(&[f64]) -> Result<f64>, x: &[f64], u: &[f64]) -> Result<f64> {
    let norm = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if norm == 0.0 {
        return Ok(0.0);
    }
    // Absolute step: chart coordinates such as angles carry no length scale.
    let h0 = 1e-3 / norm;
    let at = |t: f64| {
        let p: Vec<f64> = x.iter().zip(u).map(|(a, b)| a + t * b).collect();
        g(&p)
    };
    let central = |h: f64| -> Result<f64> { Ok((at(h)? - at(-h)?) / (2.0 * h)) };
    let (c1, c2, c3) = (central(h0)?, central(h0 / 2.0)?, central(h0 / 4.0)?);
    let r1 = c2 + (c2 - c1) / 3.0;
    let r2 = c3 + (c3 - c2) / 3.0;
    Ok(r2 + (r2 - r1) / 15.0)
}

/// `D([X, Y]) = X(D(Y)) - Y(D(X))` and `D(fX) = f D(X) + X(f)` at sampled
/// points, for the density of the manifold's own volume form.
pub fn verify_dx_algebra(
    m: &ChartedManifold,
    x_field: &VectorField,
    y_field: &VectorField,
    f: &ScalarField,
    n_points: usize,
    stream: &RngStream,
) -> Result<VerificationReport> {
    require_dim(m, x_field)?;
    require_dim(m, y_field)?;
    if !x_field.has_analytic_jacobian() || !y_field.has_analytic_jacobian() || f.gradient.is_none()
    {
        return Err(Error::Backend(
            "the D(X) algebra needs analytic partials of X, Y and f".into(),
        ));
    }
    let field_backend = if m.has_analytic_partials() {
        Backend::Analytic
    } else {
        Backend::FiniteDifference
    };
    let mu = field_density(m);
    let bracket = bracket_field(x_field, y_field)?;
    let bracket_backend = if bracket.has_analytic_jacobian() {
        Backend::Analytic
    } else {
        Backend::FiniteDifference
    };
    let fx = scaled_field(f, x_field)?;
    let points = m.sample_points(n_points, stream)?;
    // Analytic partials for X, Y, fX; the density gradient follows the field.
    let d_of = |v: &VectorField, p: &[f64], vb: Backend| -> Result<f64> {
        let mval = mu.eval(p);
        if mval == 0.0 || !mval.is_finite() {
            return Err(Error::VanishingDensity { point: p.to_vec() });
        }
        let j = v.jacobian(p, vb)?;
        let grad = mu.gradient(p, field_backend)?;
        let xv = v.eval(p);
        Ok(j.trace() + xv.iter().zip(&grad).map(|(a, g)| a * g / mval).sum::<f64>())
    };
    let mut bracket_checks = Vec::new();
    let mut product_checks = Vec::new();
    for p in &points {
        let lhs = d_of(&bracket, p, bracket_backend)?;
        let xdy =
            directional_derivative(|q| d_of(y_field, q, Backend::Analytic), p, &x_field.eval(p))?;
        let ydx =
            directional_derivative(|q| d_of(x_field, q, Backend::Analytic), p, &y_field.eval(p))?;
        let rhs = xdy - ydx;
        let scale = 1.0 + lhs.abs().max(xdy.abs()).max(ydx.abs());
        bracket_checks.push(Check::exact(
            format!("D([X,Y]) vs X(D(Y)) - Y(D(X)) at {}", fmt_point(p)),
            lhs,
            rhs,
            ANALYTIC_TOL * scale,
        ));

        let lhs = d_of(&fx, p, Backend::Analytic)?;
        let fv = f.eval(p);
        let dx = d_of(x_field, p, Backend::Analytic)?;
        let xf: f64 = x_field
            .eval(p)
            .iter()
            .zip(f.gradient(p, Backend::Analytic)?)
            .map(|(a, g)| a * g)
            .sum();
        let rhs = fv * dx + xf;
        let scale = 1.0 + lhs.abs().max((fv * dx).abs()).max(xf.abs());
        product_checks.push(Check::exact(
            format!("D(fX) vs f D(X) + X(f) at {}", fmt_point(p)),
            lhs,
            rhs,
            ANALYTIC_TOL * scale,
        ));
    }
    let checks: Vec<Check> = worst_of(bracket_checks)
        .into_iter()
        .chain(worst_of(product_checks))
        .collect();
    Ok(
        VerificationReport::from_checks("geometry.dx_algebra", "fourfour", checks)
            .with_seed(stream.seed)
            .with_note(format!("manifold {}, {n_points} points", m.name)),
    )
}

/// Random polynomial with coefficients uniform in `[-1, 1]` on every monomial
/// of degree `<= degree`.
pub fn random_poly<R: Rng + ?Sized>(dim: usize, degree: u32, rng: &mut R) -> Poly {
    let mut p = Poly::zero(dim);
    for e in monomials_up_to(dim, degree) {
        p.add_term(e, rng.random_range(-1.0..1.0));
    }
    p
}

pub fn random_poly_field<R: Rng + ?Sized>(dim: usize, degree: u32, rng: &mut R) -> VectorField {
    let polys = (0..dim).map(|_| random_poly(dim, degree, rng)).collect();
    VectorField::from_polys(polys).expect("dimensions match")
}

/// Hamiltonian field of `H`: `X^b Omega_ba = dH/dx^a`, so `X_a = H_,a` is
/// closed and `L_X Omega = 0`. The Jacobian is
/// `Omega^{-T} (Hess H - (d_c Omega)^T X)` column by column.
pub fn hamiltonian_field(m: &ChartedManifold, h: &Poly) -> Result<VectorField> {
    require(m, Kind::Symplectic)?;
    if h.nvars() != m.dim {
        return Err(Error::InvalidArgument(format!(
            "H has {} variables, manifold has {}",
            h.nvars(),
            m.dim
        )));
    }
    let grad = h.gradient();
    let hess: Vec<Vec<Poly>> = grad.iter().map(|g| g.gradient()).collect();
    let field = m.field.clone();
    let g1 = grad.clone();
    let value: VecFn = Arc::new(move |x| {
        let omega = field(x);
        let dh = nalgebra::DVector::from_iterator(g1.len(), g1.iter().map(|g| g.eval(x)));
        omega
            .transpose()
            .lu()
            .solve(&dh)
            .map(|v| v.as_slice().to_vec())
            .unwrap_or_else(|| vec![f64::NAN; g1.len()])
    });
    let jacobian = m.partials.clone().map(|partials| {
        let field = m.field.clone();
        let value = value.clone();
        let j: JacFn = Arc::new(move |x| {
            let omega = field(x);
            let dw = partials(x);
            let xv = nalgebra::DVector::from_vec(value(x));
            let lu = omega.transpose().lu();
            let d = xv.len();
            let mut jac = DMatrix::zeros(d, d);
            for c in 0..d {
                let rhs = nalgebra::DVector::from_fn(d, |a, _| hess[a][c].eval(x))
                    - dw[c].transpose() * &xv;
                let col = lu
                    .solve(&rhs)
                    .unwrap_or_else(|| nalgebra::DVector::from_element(d, f64::NAN));
                jac.set_column(c, &col);
            }
            jac
        });
        j
    });
    Ok(VectorField::new(m.dim, value, jacobian))
}

fn constant_partials(d: usize) -> PartialsFn {
    Arc::new(move |_| vec![DMatrix::zeros(d, d); d])
}

/// Euclidean plane, `g = I` on `[-2, 2]^2`.
pub fn flat2() -> ChartedManifold {
    ChartedManifold::new(
        "flat2",
        Kind::Riemannian,
        Arc::new(|_| DMatrix::identity(2, 2)),
        Some(constant_partials(2)),
        vec![(-2.0, 2.0); 2],
    )
    .expect("valid built-in")
}

/// Unit sphere in coordinates `(theta, phi)`, `g = diag(1, sin^2 theta)`,
/// `theta` kept away from the poles.
pub fn sphere2() -> ChartedManifold {
    ChartedManifold::new(
        "sphere2",
        Kind::Riemannian,
        Arc::new(|x| {
            let s = x[0].sin();
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, s * s])
        }),
        Some(Arc::new(|x| {
            let d = 2.0 * x[0].sin() * x[0].cos();
            vec![
                DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, d]),
                DMatrix::zeros(2, 2),
            ]
        })),
        vec![(0.2, PI - 0.2), (0.0, 2.0 * PI)],
    )
    .expect("valid built-in")
}

/// The conformal factor exponent of [`conformal2`].
pub fn conformal_exponent() -> Poly {
    let x = Poly::var(2, 0);
    let y = Poly::var(2, 1);
    let mut u = x.scale(0.3);
    u = &u - &y.scale(0.2);
    u = &u + &(&x * &y).scale(0.1);
    u = &u + &(&x * &x).scale(0.05);
    u
}

/// `g = exp(2u) I` with `u = 0.3x - 0.2y + 0.1xy + 0.05x^2` on `[-1.5, 1.5]^2`.
pub fn conformal2() -> ChartedManifold {
    let u = conformal_exponent();
    let u1 = u.clone();
    let grad = u.gradient();
    ChartedManifold::new(
        "conformal2",
        Kind::Riemannian,
        Arc::new(move |x| DMatrix::identity(2, 2) * (2.0 * u1.eval(x)).exp()),
        Some(Arc::new(move |x| {
            let e = (2.0 * u.eval(x)).exp();
            grad.iter()
                .map(|g| DMatrix::identity(2, 2) * (2.0 * g.eval(x) * e))
                .collect()
        })),
        vec![(-1.5, 1.5); 2],
    )
    .expect("valid built-in")
}

fn canonical2() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
}

/// `Omega = dp ^ dq` in coordinates `(p, q)` on `[-2, 2]^2`.
pub fn darboux2() -> ChartedManifold {
    ChartedManifold::new(
        "darboux2",
        Kind::Symplectic,
        Arc::new(|_| canonical2()),
        Some(constant_partials(2)),
        vec![(-2.0, 2.0); 2],
    )
    .expect("valid built-in")
}

/// `Omega = (1 + q^2) dp ^ dq` in coordinates `(p, q)` on `[-2, 2]^2`.
pub fn nonconstant_symplectic2() -> ChartedManifold {
    ChartedManifold::new(
        "nonconstant-symplectic2",
        Kind::Symplectic,
        Arc::new(|x| canonical2() * (1.0 + x[1] * x[1])),
        Some(Arc::new(|x| {
            vec![DMatrix::zeros(2, 2), canonical2() * (2.0 * x[1])]
        })),
        vec![(-2.0, 2.0); 2],
    )
    .expect("valid built-in")
}

/// `Omega = d theta` on `R^4` with `theta = p1 dq1 + p2 dq2 + 0.2 q1 q2 dp1 + 0.1 p1^2 dq2`,
/// so `Omega_ab = theta_b,a - theta_a,b` is closed with non-constant
/// coefficients. Coordinates `(p1, q1, p2, q2)` on `[-1, 1]^4`.
pub fn exact_symplectic4() -> ChartedManifold {
    let theta = exact4_potential();
    let grads: Vec<Vec<Poly>> = theta.iter().map(|t| t.gradient()).collect();
    let g2 = grads.clone();
    let field: MatFn =
        Arc::new(move |x| DMatrix::from_fn(4, 4, |a, b| grads[b][a].eval(x) - grads[a][b].eval(x)));
    let partials: PartialsFn = Arc::new(move |x| {
        (0..4)
            .map(|c| {
                DMatrix::from_fn(4, 4, |a, b| {
                    g2[b][a].derivative(c).eval(x) - g2[a][b].derivative(c).eval(x)
                })
            })
            .collect()
    });
    ChartedManifold::new(
        "exact-symplectic4",
        Kind::Symplectic,
        field,
        Some(partials),
        vec![(-1.0, 1.0); 4],
    )
    .expect("valid built-in")
}

fn exact4_potential() -> Vec<Poly> {
    let v = |k| Poly::var(4, k);
    let (p1, q1, p2, q2) = (v(0), v(1), v(2), v(3));
    vec![
        (&q1 * &q2).scale(0.2),
        p1.clone(),
        Poly::zero(4),
        &p2 + &(&p1 * &p1).scale(0.1),
    ]
}

pub const BUILTIN_MANIFOLDS: [&str; 6] = [
    "flat2",
    "sphere2",
    "conformal2",
    "darboux2",
    "nonconstant-symplectic2",
    "exact-symplectic4",
];

pub fn builtin(name: &str) -> Result<ChartedManifold> {
    match name {
        "flat2" => Ok(flat2()),
        "sphere2" => Ok(sphere2()),
        "conformal2" => Ok(conformal2()),
        "darboux2" => Ok(darboux2()),
        "nonconstant-symplectic2" => Ok(nonconstant_symplectic2()),
        "exact-symplectic4" => Ok(exact_symplectic4()),
        other => Err(Error::InvalidArgument(format!(
            "unknown manifold {other:?}; built-ins: {}",
            BUILTIN_MANIFOLDS.join(", ")
        ))),
    }
}

/// Rotations of the sphere in `(theta, phi)`: about the polar axis,
/// `d_phi`, and about a horizontal axis, `sin(phi) d_theta + cot(theta) cos(phi) d_phi`.
pub fn sphere_killing_fields() -> Vec<VectorField> {
    let polar = VectorField::constant(vec![0.0, 1.0]).expect("two components");
    let tilted = VectorField::new(
        2,
        Arc::new(|x| vec![x[1].sin(), x[1].cos() / x[0].tan()]),
        Some(Arc::new(|x| {
            let (t, p) = (x[0], x[1]);
            let s = t.sin();
            DMatrix::from_row_slice(
                2,
                2,
                &[0.0, p.cos(), -p.cos() / (s * s), -p.sin() / t.tan()],
            )
        })),
    );
    vec![polar, tilted]
}

/// A field preserving the structure (Killing, or Hamiltonian for a closed
/// form) has `L_X f = 0` and `D(X) = 0` at every sampled point.
pub fn verify_invariant_field(
    m: &ChartedManifold,
    v: &VectorField,
    n_points: usize,
    stream: &RngStream,
    backend: Backend,
    tol: f64,
) -> Result<VerificationReport> {
    require_dim(m, v)?;
    let mu = field_density(m);
    let points = m.sample_points(n_points, stream)?;
    let mut lie = Vec::new();
    let mut div = Vec::new();
    for x in &points {
        let l = match m.kind {
            Kind::Riemannian => lie_metric(m, v, x, backend)?,
            Kind::Symplectic => lie_symplectic(m, v, x, backend)?,
        };
        lie.push(Check::exact(
            format!("|L_X f| at {}", fmt_point(x)),
            l.amax(),
            0.0,
            tol,
        ));
        div.push(Check::exact(
            format!("D(X) at {}", fmt_point(x)),
            divergence_d(v, &mu, x, backend)?,
            0.0,
            tol,
        ));
    }
    let equation = match m.kind {
        Kind::Riemannian => "killing",
        Kind::Symplectic => "hamiltonian",
    };
    let checks: Vec<Check> = worst_of(lie).into_iter().chain(worst_of(div)).collect();
    Ok(
        VerificationReport::from_checks("geometry.invariant_field", equation, checks)
            .with_seed(stream.seed)
            .with_note(format!(
                "manifold {}, {n_points} points, {backend:?} backend",
                m.name
            )),
    )
}
