//! Zero-dimensional toy field theory: actions on `R^D`, stationary points,
//! the leading volume-form factor `mu`, and the Euclidean Schwinger-Dyson
//! identity `<(dS/dphi_a) F> = hbar <dF/dphi_a>` under `exp(-S/hbar)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::RngStream;
use crate::gaussian::{dx_normalization, make_spec, Param};
use crate::poly::Poly;
use crate::quadrature::{integrate_box, Tolerance};
use crate::report::{Check, VerificationReport};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type HessFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// Relative tolerance for the Schwinger-Dyson residual and the
/// generating-function route.
pub const SD_REL_TOL: f64 = 1e-8;
const MAX_DIM: usize = 3;
const NEWTON_MAX_ITER: usize = 100;
const NEWTON_GRAD_TOL: f64 = 1e-10;
// exp(-TAIL_EXPONENT) is below double precision relative to the peak weight.
const TAIL_EXPONENT: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Euclidean,
    GaussianAnalytic,
}

#[derive(Clone)]
pub struct ToyAction {
    dim: usize,
    s: ScalarFn,
    grad: GradFn,
    hess: HessFn,
    hbar: f64,
    regime: Regime,
    poly: Option<Poly>,
}

impl std::fmt::Debug for ToyAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToyAction")
            .field("dim", &self.dim)
            .field("hbar", &self.hbar)
            .field("regime", &self.regime)
            .field("poly", &self.poly.as_ref().map(|p| p.to_string()))
            .finish()
    }
}

impl ToyAction {
    /// Action from closures; gradient and Hessian are checked against
    /// central differences at 10 pseudo-random points in `[-1, 1]^D`.
    pub fn new(dim: usize, s: ScalarFn, grad: GradFn, hess: HessFn) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("action needs D >= 1".into()));
        }
        let a = Self {
            dim,
            s,
            grad,
            hess,
            hbar: 1.0,
            regime: Regime::Euclidean,
            poly: None,
        };
        a.validate()?;
        Ok(a)
    }

    /// Action given by a polynomial; derivatives are exact.
    pub fn from_poly(p: Poly) -> Result<Self> {
        let dim = p.nvars();
        if dim == 0 {
            return Err(Error::InvalidArgument("action needs D >= 1".into()));
        }
        let grad_p = p.gradient();
        let hess_p: Vec<Vec<Poly>> = grad_p.iter().map(|g| g.gradient()).collect();
        let sp = p.clone();
        let s: ScalarFn = Arc::new(move |x| sp.eval(x));
        let g2 = grad_p.clone();
        let grad: GradFn = Arc::new(move |x| g2.iter().map(|g| g.eval(x)).collect());
        let hess: HessFn =
            Arc::new(move |x| DMatrix::from_fn(dim, dim, |i, j| hess_p[i][j].eval(x)));
        let a = Self {
            dim,
            s,
            grad,
            hess,
            hbar: 1.0,
            regime: Regime::Euclidean,
            poly: Some(p),
        };
        a.validate()?;
        Ok(a)
    }

    /// `S = 1/2 phi^T H phi`.
    pub fn quadratic(h: &DMatrix<f64>) -> Result<Self> {
        let d = h.nrows();
        if h.ncols() != d {
            return Err(Error::InvalidArgument("Hessian must be square".into()));
        }
        let mut p = Poly::zero(d);
        for i in 0..d {
            for j in 0..d {
                let mut e = vec![0; d];
                e[i] += 1;
                e[j] += 1;
                p.add_term(e, 0.5 * h[(i, j)]);
            }
        }
        Ok(Self::from_poly(p)?.with_regime(Regime::GaussianAnalytic))
    }

    pub fn with_hbar(mut self, hbar: f64) -> Result<Self> {
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "hbar must be positive, got {hbar}"
            )));
        }
        self.hbar = hbar;
        Ok(self)
    }

    pub fn with_regime(mut self, regime: Regime) -> Self {
        self.regime = regime;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn poly(&self) -> Option<&Poly> {
        self.poly.as_ref()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.s)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.grad)(x)
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        (self.hess)(x)
    }

    fn validate(&self) -> Result<()> {
        let stream = RngStream::new(0x5d_a11d, 0);
        for k in 0..10 {
            let mut rng = stream.draw_rng(k);
            let x: Vec<f64> = (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = self.gradient(&x);
            let h = self.hessian(&x);
            if g.len() != self.dim || h.nrows() != self.dim || h.ncols() != self.dim {
                return Err(Error::InvalidArgument(
                    "gradient/Hessian have the wrong shape".into(),
                ));
            }
            for i in 0..self.dim {
                let step = 1e-5;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += step;
                xm[i] -= step;
                let fd = (self.value(&xp) - self.value(&xm)) / (2.0 * step);
                let scale = 1.0 + g[i].abs();
                if (fd - g[i]).abs() > 1e-5 * scale {
                    return Err(Error::InvalidArgument(format!(
                        "gradient component {i} disagrees with differences at {x:?}: {} vs {fd}",
                        g[i]
                    )));
                }
                let gp = self.gradient(&xp);
                let gm = self.gradient(&xm);
                for j in 0..self.dim {
                    let fd = (gp[j] - gm[j]) / (2.0 * step);
                    if (fd - h[(j, i)]).abs() > 1e-5 * (1.0 + h[(j, i)].abs()) {
                        return Err(Error::InvalidArgument(format!(
                            "Hessian entry ({j},{i}) disagrees with differences at {x:?}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// `S_J(phi) = S(phi) + J . phi`.
#[derive(Debug, Clone)]
pub struct SourcedAction {
    base: ToyAction,
    j: Vec<f64>,
}

impl SourcedAction {
    pub fn new(base: ToyAction, j: Vec<f64>) -> Result<Self> {
        if j.len() != base.dim {
            return Err(Error::InvalidArgument(format!(
                "source has {} components, action has D = {}",
                j.len(),
                base.dim
            )));
        }
        Ok(Self { base, j })
    }

    pub fn base(&self) -> &ToyAction {
        &self.base
    }

    pub fn source(&self) -> &[f64] {
        &self.j
    }

    /// The sourced action as a plain action.
    pub fn action(&self) -> ToyAction {
        let b = self.base.clone();
        let j = self.j.clone();
        let (s0, g0) = (b.s.clone(), b.grad.clone());
        let j1 = j.clone();
        let s: ScalarFn =
            Arc::new(move |x| s0(x) + j1.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
        let grad: GradFn = Arc::new(move |x| g0(x).iter().zip(&j).map(|(g, j)| g + j).collect());
        ToyAction {
            s,
            grad,
            poly: None,
            ..b
        }
    }
}

/// Newton's method with step halving, to `||grad S|| <= 1e-10`.
pub fn stationary_point(action: &ToyAction, guess: &[f64]) -> Result<Vec<f64>> {
    if guess.len() != action.dim {
        return Err(Error::InvalidArgument(format!(
            "guess has {} components, action has D = {}",
            guess.len(),
            action.dim
        )));
    }
    let mut x = DVector::from_column_slice(guess);
    let norm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut g = action.gradient(x.as_slice());
    for _ in 0..NEWTON_MAX_ITER {
        let gn = norm(&g);
        if gn <= NEWTON_GRAD_TOL {
            return Ok(x.as_slice().to_vec());
        }
        let h = action.hessian(x.as_slice());
        let step = h
            .lu()
            .solve(&DVector::from_vec(g.clone()))
            .ok_or_else(|| Error::Singular(format!("Hessian at {:?}", x.as_slice())))?;
        let mut t = 1.0;
        loop {
            let trial = &x - &step * t;
            let gt = action.gradient(trial.as_slice());
            if norm(&gt) < gn || t < 1e-6 {
                x = trial;
                g = gt;
                break;
            }
            t *= 0.5;
        }
    }
    let residual = norm(&g);
    if residual <= NEWTON_GRAD_TOL {
        return Ok(x.as_slice().to_vec());
    }
    Err(Error::NoConvergence {
        iterations: NEWTON_MAX_ITER,
        residual,
    })
}

/// `|det G|^{-1/2} = |det S''(phi0)|^{1/2}`.
pub fn leading_mu(action: &ToyAction, phi0: &[f64]) -> Result<f64> {
    let h = action.hessian(phi0);
    let det = h.clone().lu().determinant();
    let scale = h.amax().max(f64::MIN_POSITIVE).powi(action.dim as i32);
    if det == 0.0 || det.abs() <= 1e-14 * scale {
        return Err(Error::Singular(format!(
            "Hessian at {phi0:?} has determinant {det:e}"
        )));
    }
    Ok(det.abs().sqrt())
}

/// `mu` through the Gaussian volume-form normalization: the weight
/// `exp(-phi^T H phi / (2 hbar))` is `exp(-pi phi^T Q phi)` with
/// `Q = H / (2 pi hbar)`, and `mu = (2 pi hbar)^{D/2} |nu(Q)|`.
pub fn mu_via_gaussian(action: &ToyAction, phi0: &[f64]) -> Result<f64> {
    let h = action.hessian(phi0);
    let q = &h / (2.0 * std::f64::consts::PI * action.hbar);
    let spec = match make_spec(q.clone(), Param::One) {
        Ok(s) => s,
        Err(Error::NotPositiveDefinite { .. }) => make_spec(q, Param::I)?,
        Err(e) => return Err(e),
    };
    Ok(
        (2.0 * std::f64::consts::PI * action.hbar).powf(action.dim as f64 / 2.0)
            * dx_normalization(&spec).norm(),
    )
}

pub fn verify_mu(action: &ToyAction, phi0: &[f64]) -> Result<VerificationReport> {
    let mu = leading_mu(action, phi0)?;
    let via = mu_via_gaussian(action, phi0)?;
    let check = Check::exact(
        "|det S''|^{1/2} vs (2 pi hbar)^{D/2} |nu(S''/(2 pi hbar))|",
        mu,
        via,
        1e-12 * mu.max(1.0),
    );
    Ok(
        VerificationReport::from_checks("sdyson.mu", "mu", vec![check])
            .with_note(format!("phi0 = {phi0:?}")),
    )
}

/// Integration region for `exp(-(S - S(phi0))/hbar)`: a box around the
/// stationary point whose faces lie where the weight is below `e^{-40}`.
#[derive(Debug, Clone)]
pub struct WeightBox {
    pub center: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
    pub offset: f64,
}

fn directions(d: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let total = 3usize.pow(d as u32);
    for flat in 0..total {
        let mut rem = flat;
        let v: Vec<f64> = (0..d)
            .map(|_| {
                let c = (rem % 3) as f64 - 1.0;
                rem /= 3;
                c
            })
            .collect();
        if v.iter().any(|c| *c != 0.0) {
            out.push(v);
        }
    }
    out
}

/// Finds the box by marching outward along the `3^D - 1` lattice directions
/// and then checking a grid on every face; fails with `NotConfining` when the
/// weight does not decay within radius `1e3`.
pub fn weight_box(action: &ToyAction) -> Result<WeightBox> {
    let d = action.dim;
    let center = stationary_point(action, &vec![0.0; d]).or_else(|_| {
        let mut best: Option<Vec<f64>> = None;
        for dir in directions(d) {
            if let Ok(x) = stationary_point(action, &dir) {
                if best
                    .as_ref()
                    .is_none_or(|b| action.value(&x) < action.value(b))
                {
                    best = Some(x);
                }
            }
        }
        best.ok_or_else(|| Error::NotConfining("no stationary point found".into()))
    })?;
    let offset = action.value(&center);
    let hbar = action.hbar;
    let below = |x: &[f64]| (action.value(x) - offset) / hbar >= TAIL_EXPONENT;
    let mut radius: f64 = 1.0;
    for dir in directions(d) {
        let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut r = 1.0;
        loop {
            let x: Vec<f64> = center
                .iter()
                .zip(&dir)
                .map(|(c, v)| c + r * v / len)
                .collect();
            let s = action.value(&x);
            if !s.is_finite() {
                return Err(Error::NotConfining(format!("action is {s} at {x:?}")));
            }
            if below(&x) {
                break;
            }
            r *= 1.5;
            if r > 1e3 {
                return Err(Error::NotConfining(format!(
                    "weight does not decay along {dir:?}"
                )));
            }
        }
        radius = radius.max(r);
    }
    // Face check: every face grid point must be in the tail, otherwise grow.
    let per = 9usize;
    'grow: loop {
        if radius > 1e3 {
            return Err(Error::NotConfining(
                "weight does not decay on the box faces".into(),
            ));
        }
        for axis in 0..d {
            for side in [-1.0, 1.0] {
                let others = per.pow((d - 1) as u32);
                for flat in 0..others {
                    let mut rem = flat;
                    let mut x = center.clone();
                    for (k, xk) in x.iter_mut().enumerate() {
                        if k == axis {
                            *xk += side * radius;
                        } else {
                            let i = rem % per;
                            rem /= per;
                            *xk += radius * (2.0 * i as f64 / (per - 1) as f64 - 1.0);
                        }
                    }
                    if !below(&x) {
                        radius *= 1.25;
                        continue 'grow;
                    }
                }
            }
        }
        break;
    }
    let bounds = center.iter().map(|c| (c - radius, c + radius)).collect();
    Ok(WeightBox {
        center,
        bounds,
        offset,
    })
}

// The weight peaks at 1, so inner integrals near the box faces underflow;
// the absolute floor stops them from chasing denormals.
fn quad_tol() -> Tolerance {
    Tolerance {
        abs: 1e-20,
        rel: 1e-12,
        max_intervals: 2000,
    }
}

fn check_euclidean(action: &ToyAction) -> Result<()> {
    if action.regime != Regime::Euclidean {
        return Err(Error::Unsupported(
            "quadrature needs the euclidean regime".into(),
        ));
    }
    if action.dim > MAX_DIM {
        return Err(Error::Unsupported(format!(
            "quadrature needs D <= {MAX_DIM}, got {}",
            action.dim
        )));
    }
    Ok(())
}

/// `int g(phi) exp(-(S - offset)/hbar) dphi` for several integrands at once.
fn weighted_integrals<G>(
    action: &ToyAction,
    region: &WeightBox,
    width: usize,
    g: G,
) -> Result<Vec<f64>>
where
    G: Fn(&[f64], f64, &mut [f64]),
{
    let hbar = action.hbar;
    let f = |x: &[f64], out: &mut [f64]| {
        let w = (-(action.value(x) - region.offset) / hbar).exp();
        g(x, w, out)
    };
    integrate_box(&f, &region.bounds, width, quad_tol())
}

/// Euclidean Schwinger-Dyson identity for component `a` (zero-based):
/// `<(dS/dphi_a) F> = hbar <dF/dphi_a>`.
pub fn verify_schwinger_dyson(
    action: &ToyAction,
    f: &Poly,
    a: usize,
) -> Result<VerificationReport> {
    check_euclidean(action)?;
    if f.nvars() != action.dim {
        return Err(Error::InvalidArgument(format!(
            "F has {} variables, action has D = {}",
            f.nvars(),
            action.dim
        )));
    }
    if a >= action.dim {
        return Err(Error::InvalidArgument(format!(
            "component {a} outside 0..{}",
            action.dim
        )));
    }
    let region = weight_box(action)?;
    let df = f.derivative(a);
    let v = weighted_integrals(action, &region, 4, |x, w, out| {
        let ds = action.gradient(x)[a];
        let fx = f.eval(x);
        out[0] = w;
        out[1] = ds * fx * w;
        out[2] = df.eval(x) * w;
        out[3] = (ds * fx).abs() * w;
    })?;
    let z = v[0];
    let lhs = v[1] / z;
    let rhs = action.hbar * v[2] / z;
    let scale = (v[3] / z).max(lhs.abs()).max(rhs.abs());
    let check = Check::exact(
        format!("<dS/dphi{} F> vs hbar <dF/dphi{}>", a + 1, a + 1),
        lhs,
        rhs,
        SD_REL_TOL * scale,
    );
    Ok(
        VerificationReport::from_checks("sdyson.schwinger_dyson", "Schwinger-Dyson", vec![check])
            .with_note(format!("F = {f}, hbar = {}", action.hbar)),
    )
}

/// `<phi>_J` by direct quadrature.
pub fn direct_mean(action: &SourcedAction) -> Result<Vec<f64>> {
    let sa = action.action();
    check_euclidean(&sa)?;
    let region = weight_box(&sa)?;
    let d = sa.dim;
    let v = weighted_integrals(&sa, &region, d + 1, |x, w, out| {
        out[0] = w;
        for k in 0..d {
            out[k + 1] = x[k] * w;
        }
    })?;
    Ok(v[1..].iter().map(|m| m / v[0]).collect())
}

/// `-hbar grad_J log Z_J` by Richardson-extrapolated five-point differences
/// of `log Z_J`, every `Z_J` integrated over the same box.
pub fn generating_derivative(action: &SourcedAction) -> Result<Vec<f64>> {
    let sa = action.action();
    check_euclidean(&sa)?;
    let region = weight_box(&sa)?;
    let d = sa.dim;
    let hbar = sa.hbar;
    let log_z = |j: &[f64]| -> Result<f64> {
        let shifted = SourcedAction::new(action.base.clone(), j.to_vec())?.action();
        let v = weighted_integrals(&shifted, &region, 1, |_, w, out| out[0] = w)?;
        Ok(v[0].ln())
    };
    let five_point = |k: usize, h: f64| -> Result<f64> {
        let at = |m: f64| {
            let mut j = action.j.clone();
            j[k] += m * h;
            log_z(&j)
        };
        Ok((at(-2.0)? - 8.0 * at(-1.0)? + 8.0 * at(1.0)? - at(2.0)?) / (12.0 * h))
    };
    let h = 1e-2;
    (0..d)
        .map(|k| {
            let coarse = five_point(k, h)?;
            let fine = five_point(k, h / 2.0)?;
            Ok(-hbar * (fine + (fine - coarse) / 15.0))
        })
        .collect()
}

pub fn verify_generating_derivative(action: &SourcedAction) -> Result<VerificationReport> {
    let via_z = generating_derivative(action)?;
    let direct = direct_mean(action)?;
    let checks = via_z
        .iter()
        .zip(&direct)
        .enumerate()
        .map(|(k, (g, m))| {
            Check::exact(
                format!("-hbar d log Z / dJ{} vs <phi{}>_J", k + 1, k + 1),
                *g,
                *m,
                SD_REL_TOL * m.abs().max(1.0),
            )
        })
        .collect();
    Ok(
        VerificationReport::from_checks("sdyson.generating_derivative", "inout", checks)
            .with_note(format!("J = {:?}", action.j)),
    )
}

/// `S = 1/2 phi^T A phi + cubic + sum_k q_k phi_k^4 + r phi_1^2 phi_2^2` with
/// random coefficients, `q_k in [0.1, 1]`, `r >= 0`: bounded below by a
/// positive quartic, hence confining.
pub fn random_confining_quartic<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<ToyAction> {
    let mut p = Poly::zero(dim);
    let unit = |k: usize| {
        let mut e = vec![0u32; dim];
        e[k] = 1;
        e
    };
    for i in 0..dim {
        for j in i..dim {
            let mut e = unit(i);
            e[j] += 1;
            let c = if i == j {
                rng.random_range(-0.5..1.5)
            } else {
                rng.random_range(-0.5..0.5)
            };
            p.add_term(e, 0.5 * c * if i == j { 1.0 } else { 2.0 });
        }
        let mut e = unit(i);
        e[i] += 2;
        p.add_term(e, rng.random_range(-0.3..0.3));
        let mut e = vec![0; dim];
        e[i] = 4;
        p.add_term(e, rng.random_range(0.1..1.0));
    }
    if dim >= 2 {
        let mut e = vec![0; dim];
        e[0] = 2;
        e[1] = 2;
        p.add_term(e, rng.random_range(0.0..0.5));
    }
    ToyAction::from_poly(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    fn x(d: usize, k: usize) -> Poly {
        Poly::var(d, k)
    }

    fn quartic(lambda: f64) -> ToyAction {
        let p = &x(1, 0).pow(2).scale(0.5) + &x(1, 0).pow(4).scale(lambda / 4.0);
        ToyAction::from_poly(p).unwrap()
    }

    #[test]
    fn stationary_points() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let a = ToyAction::quadratic(&h).unwrap();
        let p = stationary_point(&a, &[3.0, -1.0]).unwrap();
        assert!(p.iter().all(|v| v.abs() < 1e-10));
        let p = stationary_point(&quartic(1.0), &[0.7]).unwrap();
        assert!(p[0].abs() < 1e-10);
        let shifted = ToyAction::from_poly(&x(1, 0).pow(2).scale(0.5) - &x(1, 0)).unwrap();
        let p = stationary_point(&shifted, &[0.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mu_values() {
        assert_eq!(
            leading_mu(
                &ToyAction::quadratic(&DMatrix::identity(2, 2)).unwrap(),
                &[0.0, 0.0]
            )
            .unwrap(),
            1.0
        );
        let a = ToyAction::quadratic(&DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])))
            .unwrap();
        assert!((leading_mu(&a, &[0.0, 0.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!((leading_mu(&quartic(1.0), &[0.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mu_matches_gaussian_route() {
        let h = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let a = ToyAction::quadratic(&h).unwrap().with_hbar(0.7).unwrap();
        let r = verify_mu(&a, &[0.0, 0.0]).unwrap();
        assert!(r.pass, "{}", r.to_json());
    }

    #[test]
    fn singular_hessian() {
        let a = ToyAction::from_poly(x(1, 0).pow(4)).unwrap();
        assert!(matches!(leading_mu(&a, &[0.0]), Err(Error::Singular(_))));
    }

    #[test]
    fn gaussian_moments() {
        let a = ToyAction::quadratic(&DMatrix::identity(1, 1))
            .unwrap()
            .with_regime(Regime::Euclidean);
        let r = verify_schwinger_dyson(&a, &Poly::one(1), 0).unwrap();
        assert!(r.pass);
        assert!(r.lhs.value().abs() < 1e-12);
        let a = a.with_hbar(0.5).unwrap();
        let r = verify_schwinger_dyson(&a, &x(1, 0), 0).unwrap();
        assert!(r.pass);
        assert!(
            (r.lhs.value() - 0.5).abs() < 1e-10,
            "<phi^2> = {}",
            r.lhs.value()
        );
    }

    #[test]
    fn quartic_against_one_dim_oracle() {
        let lambda = 0.3;
        let a = quartic(lambda);
        let r = verify_schwinger_dyson(&a, &x(1, 0), 0).unwrap();
        assert!(r.pass, "{}", r.to_json());
        let w = |p: f64| (-(0.5 * p * p + lambda * p.powi(4) / 4.0)).exp();
        let tol = crate::quadrature::Tolerance::default();
        let z = integrate(w, -12.0, 12.0, tol).unwrap();
        let m = integrate(|p| (p * p + lambda * p.powi(4)) * w(p), -12.0, 12.0, tol).unwrap();
        assert!((m / z - 1.0).abs() < 1e-10);
        assert!((r.lhs.value() - m / z).abs() < 1e-10);
    }

    #[test]
    fn not_confining() {
        let a = ToyAction::from_poly(x(1, 0).pow(3)).unwrap();
        assert!(matches!(
            verify_schwinger_dyson(&a, &Poly::one(1), 0),
            Err(Error::NotConfining(_)) | Err(Error::Singular(_))
        ));
        let b = ToyAction::from_poly(&x(2, 0).pow(2) - &x(2, 1).pow(2)).unwrap();
        assert!(matches!(
            verify_schwinger_dyson(&b, &Poly::one(2), 0),
            Err(Error::NotConfining(_))
        ));
    }

    #[test]
    fn generating_derivative_gaussian() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let a = ToyAction::quadratic(&h)
            .unwrap()
            .with_regime(Regime::Euclidean);
        let j = vec![0.3, -0.2];
        let sa = SourcedAction::new(a, j.clone()).unwrap();
        let g = generating_derivative(&sa).unwrap();
        let expect = -(h.clone().try_inverse().unwrap() * DVector::from_vec(j));
        for k in 0..2 {
            assert!((g[k] - expect[k]).abs() < 1e-8, "{g:?} vs {expect}");
        }
    }

    #[test]
    fn generating_derivative_even_action() {
        let sa = SourcedAction::new(quartic(0.5), vec![0.0]).unwrap();
        assert!(generating_derivative(&sa).unwrap()[0].abs() < 1e-10);
        let sa = SourcedAction::new(quartic(0.5), vec![0.2]).unwrap();
        let r = verify_generating_derivative(&sa).unwrap();
        assert!(r.pass, "{}", r.to_json());
    }

    #[test]
    fn closure_validation_catches_wrong_gradient() {
        let s: ScalarFn = Arc::new(|x| x[0] * x[0]);
        let g: GradFn = Arc::new(|x| vec![3.0 * x[0]]);
        let h: HessFn = Arc::new(|_| DMatrix::from_element(1, 1, 2.0));
        assert!(ToyAction::new(1, s, g, h).is_err());
    }
}
