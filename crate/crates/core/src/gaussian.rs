//! Finite-dimensional Gaussian (`s = 1`) and Fresnel (`s = i`) volume forms.
//!
//! The volume form `Dx = nu dx^1 ... dx^D` is fixed by requiring
//!
//! ```text
//! int Dx exp(-(pi/s) x^T Q x - 2 pi i x'^T x) = exp(-s pi x'^T W x'),   W = Q^{-1}.
//! ```
//!
//! `nu` is computed per eigenvalue of `Q` as `prod_k sqrt(lambda_k / s)` with the
//! principal square root. For positive-definite `Q` this is
//! `s^{-D/2} (det Q)^{1/2}`; taking one square root of the full product would
//! pick the wrong sign once several factors rotate by `e^{-i pi/4}`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{sample, RngStream};
use crate::quadrature::gauss_hermite;
use crate::report::{Check, Side, Thresholds, VerificationReport};

const EIGEN_FLOOR: f64 = 1e-10;
const DUALITY_TOL: f64 = 1e-12;
const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Param {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "i")]
    I,
}

impl Param {
    pub fn value(self) -> Complex64 {
        match self {
            Param::One => Complex64::new(1.0, 0.0),
            Param::I => Complex64::new(0.0, 1.0),
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Param::One => "1",
            Param::I => "i",
        })
    }
}

impl FromStr for Param {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" => Ok(Param::One),
            "i" => Ok(Param::I),
            other => Err(Error::InvalidArgument(format!(
                "s must be 1 or i, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaussianSpec {
    q: DMatrix<f64>,
    w: DMatrix<f64>,
    s: Param,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

/// Validates `Q` and computes its dual `W = Q^{-1}`.
pub fn make_spec(q: DMatrix<f64>, s: Param) -> Result<GaussianSpec> {
    let d = q.nrows();
    if d == 0 || q.ncols() != d {
        return Err(Error::InvalidArgument(format!(
            "Q must be square and non-empty, got {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("Q has non-finite entries".into()));
    }
    let scale = q.amax().max(1.0);
    let asymmetry = (&q - q.transpose()).amax();
    if asymmetry > 1e-12 * scale {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let q = (&q + q.transpose()) * 0.5;
    let eig = SymmetricEigen::new(q.clone());
    let norm = eig.eigenvalues.amax();
    let floor = EIGEN_FLOOR * norm;
    match s {
        Param::One => {
            let min = eig.eigenvalues.min();
            if min <= floor {
                return Err(Error::NotPositiveDefinite {
                    min_eigenvalue: min,
                });
            }
        }
        Param::I => {
            if norm == 0.0 || eig.eigenvalues.iter().any(|l| l.abs() <= floor) {
                return Err(Error::Singular(format!(
                    "Q has an eigenvalue below {floor:e} in magnitude"
                )));
            }
        }
    }
    let w = q
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Singular("Q is not invertible".into()))?;
    let w = (&w + w.transpose()) * 0.5;
    let residual = (&q * &w - DMatrix::identity(d, d)).amax();
    if residual > DUALITY_TOL {
        return Err(Error::DualityViolated { residual });
    }
    Ok(GaussianSpec {
        q,
        w,
        s,
        eigenvalues: eig.eigenvalues,
        eigenvectors: eig.eigenvectors,
    })
}

impl GaussianSpec {
    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn s(&self) -> Param {
        self.s
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// The spec built from `W`, whose dual is `Q` again.
    pub fn dual(&self) -> Result<GaussianSpec> {
        make_spec(self.w.clone(), self.s)
    }

    /// `exp(-s pi x'^T W x')`.
    pub fn fourier_rhs(&self, xprime: &[f64]) -> Result<Complex64> {
        let xp = self.check_point(xprime)?;
        let quad = xp.dot(&(&self.w * &xp));
        Ok((-self.s.value() * std::f64::consts::PI * quad).exp())
    }

    fn check_point(&self, xprime: &[f64]) -> Result<DVector<f64>> {
        if xprime.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "x' has {} components, Q is {}x{}",
                xprime.len(),
                self.dim(),
                self.dim()
            )));
        }
        Ok(DVector::from_column_slice(xprime))
    }
}

/// The density `nu` of `Dx` with respect to `dx^1 ... dx^D`.
pub fn dx_normalization(spec: &GaussianSpec) -> Complex64 {
    let s = spec.s.value();
    spec.eigenvalues
        .iter()
        .map(|&l| (Complex64::new(l, 0.0) / s).sqrt())
        .product()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FourierMethod {
    /// Tensor-product Gauss-Hermite in whitened coordinates (rotated contour
    /// for `s = i`), node count doubled until successive sums agree to `tol`.
    Quadrature { tol: f64 },
    /// Complex Gaussian integral via the complex LU of `Q/s`.
    ClosedForm,
    /// Sampling `x` from the probability density `nu exp(-pi x^T Q x)` (`s = 1`).
    MonteCarlo { n_samples: u64 },
}

impl FourierMethod {
    pub fn name(&self) -> &'static str {
        match self {
            FourierMethod::Quadrature { .. } => "quadrature",
            FourierMethod::ClosedForm => "closed-form",
            FourierMethod::MonteCarlo { .. } => "mc",
        }
    }
}

/// Whitened coordinates `x = M y` in which the exponent becomes `-|y|^2`:
/// returns the per-axis complex frequencies `c` with phase `-2 sqrt(pi) i c.y`,
/// the Jacobian `det M`, and the linear map `M`.
struct Whitening {
    freq: Vec<Complex64>,
    jacobian: Complex64,
    map: DMatrix<Complex64>,
}

fn whitening(spec: &GaussianSpec, xp: &DVector<f64>) -> Result<Whitening> {
    let d = spec.dim();
    let pi = std::f64::consts::PI;
    match spec.s {
        Param::One => {
            // Q = L L^T, x = L^{-T} y / sqrt(pi).
            let chol = Cholesky::new(spec.q.clone()).ok_or(Error::NotPositiveDefinite {
                min_eigenvalue: spec.eigenvalues.min(),
            })?;
            let l = chol.l();
            let c = l
                .solve_lower_triangular(xp)
                .ok_or_else(|| Error::Singular("Cholesky factor".into()))?;
            let linv_t = l
                .transpose()
                .try_inverse()
                .ok_or_else(|| Error::Singular("Cholesky factor".into()))?
                / pi.sqrt();
            let det_l: f64 = l.diagonal().iter().product();
            Ok(Whitening {
                freq: c.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
                jacobian: Complex64::new(1.0 / (det_l * pi.powf(d as f64 / 2.0)), 0.0),
                map: linv_t.map(|v| Complex64::new(v, 0.0)),
            })
        }
        Param::I => {
            // u = V^T x, u_k = e^{i sigma_k pi/4} y_k / sqrt(pi |lambda_k|).
            let b = spec.eigenvectors.transpose() * xp;
            let mut freq = Vec::with_capacity(d);
            let mut jac = Complex64::new(1.0, 0.0);
            let mut scale = Vec::with_capacity(d);
            for (k, &l) in spec.eigenvalues.iter().enumerate() {
                let rot = Complex64::from_polar(1.0, l.signum() * pi / 4.0);
                let r = rot / (pi * l.abs()).sqrt();
                freq.push(b[k] * rot / l.abs().sqrt());
                jac *= r;
                scale.push(r);
            }
            let v = spec.eigenvectors.map(|x| Complex64::new(x, 0.0));
            let map = v * DMatrix::from_diagonal(&DVector::from_vec(scale));
            Ok(Whitening {
                freq,
                jacobian: jac,
                map,
            })
        }
    }
}

fn tensor_sum(nodes: &[f64], weights: &[f64], freq: &[Complex64]) -> Complex64 {
    let two_sqrt_pi = 2.0 * std::f64::consts::PI.sqrt();
    let m = nodes.len();
    let factors: Vec<Vec<Complex64>> = freq
        .iter()
        .map(|&c| {
            nodes
                .iter()
                .map(|&y| (Complex64::new(0.0, -two_sqrt_pi) * c * y).exp())
                .collect()
        })
        .collect();
    let d = freq.len();
    let mut idx = vec![0usize; d];
    let mut total = Complex64::new(0.0, 0.0);
    loop {
        let mut term = Complex64::new(1.0, 0.0);
        for k in 0..d {
            term *= factors[k][idx[k]] * weights[idx[k]];
        }
        total += term;
        let mut k = 0;
        loop {
            if k == d {
                return total;
            }
            idx[k] += 1;
            if idx[k] < m {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn max_nodes(d: usize) -> usize {
    match d {
        1 => 512,
        2 => 256,
        _ => 128,
    }
}

/// `nu * int exp(-(pi/s) x^T Q x - 2 pi i x'^T x) dx` by tensor-product
/// quadrature. Returns the value and the last doubling difference.
pub fn fourier_quadrature(
    spec: &GaussianSpec,
    xprime: &[f64],
    tol: f64,
) -> Result<(Complex64, f64)> {
    if spec.dim() > MAX_DIM {
        return Err(Error::Unsupported(format!(
            "quadrature needs D <= {MAX_DIM}, got {}",
            spec.dim()
        )));
    }
    let xp = spec.check_point(xprime)?;
    let wh = whitening(spec, &xp)?;
    let nu = dx_normalization(spec);
    let mut m = 16;
    let (x, w) = gauss_hermite(m);
    let mut prev = nu * wh.jacobian * tensor_sum(&x, &w, &wh.freq);
    loop {
        m *= 2;
        if m > max_nodes(spec.dim()) {
            return Err(Error::QuadratureNonConvergence {
                estimate: f64::NAN,
                tolerance: tol,
            });
        }
        let (x, w) = gauss_hermite(m);
        let cur = nu * wh.jacobian * tensor_sum(&x, &w, &wh.freq);
        let diff = (cur - prev).norm();
        if diff <= tol {
            return Ok((cur, diff));
        }
        if m * 2 > max_nodes(spec.dim()) {
            return Err(Error::QuadratureNonConvergence {
                estimate: diff,
                tolerance: tol,
            });
        }
        prev = cur;
    }
}

/// `nu * det(Q/s)^{-1/2} exp(-pi x'^T (Q/s)^{-1} x')` with the inverse and
/// the determinant modulus from the complex LU of `Q/s`; the phase of the
/// determinant root is taken eigenvalue by eigenvalue.
pub fn fourier_closed_form(spec: &GaussianSpec, xprime: &[f64]) -> Result<Complex64> {
    let xp = spec.check_point(xprime)?;
    let s = spec.s.value();
    let a: DMatrix<Complex64> = spec.q.map(|v| Complex64::new(v, 0.0) / s);
    let lu = a.lu();
    let det = lu.determinant();
    let ainv = lu
        .try_inverse()
        .ok_or_else(|| Error::Singular("Q/s is not invertible".into()))?;
    let xc = xp.map(|v| Complex64::new(v, 0.0));
    let quad = xc.dot(&(&ainv * &xc));
    let phase: f64 = spec
        .eigenvalues
        .iter()
        .map(|&l| (Complex64::new(l, 0.0) / s).arg())
        .sum();
    let root = Complex64::from_polar(det.norm().powf(-0.5), -0.5 * phase);
    Ok(dx_normalization(spec) * root * (-std::f64::consts::PI * quad).exp())
}

/// Samples `x = L^{-T} z / sqrt(2 pi)`, `Q = L L^T`, which has density
/// `nu exp(-pi x^T Q x)` for `s = 1`.
fn sampler(spec: &GaussianSpec) -> Result<DMatrix<f64>> {
    if spec.s != Param::One {
        return Err(Error::Unsupported("sampling needs s = 1".into()));
    }
    let chol = Cholesky::new(spec.q.clone()).ok_or(Error::NotPositiveDefinite {
        min_eigenvalue: spec.eigenvalues.min(),
    })?;
    let m = chol
        .l()
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::Singular("Cholesky factor".into()))?;
    Ok(m / (2.0 * std::f64::consts::PI).sqrt())
}

pub fn verify_fourier(
    spec: &GaussianSpec,
    xprime: &[f64],
    method: FourierMethod,
    stream: &RngStream,
    t: &Thresholds,
) -> Result<VerificationReport> {
    let rhs = spec.fourier_rhs(xprime)?;
    let mut notes = vec![format!("method {}, s = {}", method.name(), spec.s)];
    let checks = match method {
        FourierMethod::Quadrature { tol } => {
            let (lhs, err) = fourier_quadrature(spec, xprime, tol)?;
            notes.push(format!("quadrature doubling difference {err:e}"));
            let et = Thresholds {
                abs_tol: t.abs_tol.max(tol),
                ..*t
            };
            vec![
                Check::exact("Re transform", lhs.re, rhs.re, et.abs_tol),
                Check::exact("Im transform", lhs.im, rhs.im, et.abs_tol),
            ]
        }
        FourierMethod::ClosedForm => {
            let lhs = fourier_closed_form(spec, xprime)?;
            vec![
                Check::exact("Re transform", lhs.re, rhs.re, t.abs_tol),
                Check::exact("Im transform", lhs.im, rhs.im, t.abs_tol),
            ]
        }
        FourierMethod::MonteCarlo { n_samples } => {
            let m = sampler(spec)?;
            let xp = spec.check_point(xprime)?;
            let d = spec.dim();
            let samples = sample(n_samples, 2, stream, |rng, out| {
                let z = DVector::from_fn(d, |_, _| crate::estimator::standard_normal(rng));
                let x = &m * z;
                let phase = 2.0 * std::f64::consts::PI * xp.dot(&x);
                out[0] = phase.cos();
                out[1] = -phase.sin();
                Ok(())
            })?;
            vec![
                Check::compare(
                    "Re transform",
                    samples.estimate(0)?.into(),
                    Side::Exact(rhs.re),
                    t,
                ),
                Check::compare(
                    "Im transform",
                    samples.estimate(1)?.into(),
                    Side::Exact(rhs.im),
                    t,
                ),
            ]
        }
    };
    let mut report = VerificationReport::from_checks("gaussian.fourier", "defDx", checks);
    if matches!(method, FourierMethod::MonteCarlo { .. }) {
        report = report.with_seed(stream.seed);
    }
    for n in notes {
        report = report.with_note(n);
    }
    Ok(report)
}

/// `2 pi E[x^l x^m] = W^{lm}` for every `l <= m`, `x ~ nu exp(-pi x^T Q x)`.
pub fn covariance_check(
    spec: &GaussianSpec,
    n_samples: u64,
    stream: &RngStream,
    t: &Thresholds,
) -> Result<VerificationReport> {
    let m = sampler(spec)?;
    let d = spec.dim();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|l| (l..d).map(move |k| (l, k))).collect();
    let two_pi = 2.0 * std::f64::consts::PI;
    let samples = sample(n_samples, pairs.len(), stream, |rng, out| {
        let z = DVector::from_fn(d, |_, _| crate::estimator::standard_normal(rng));
        let x = &m * z;
        for (o, &(l, k)) in out.iter_mut().zip(&pairs) {
            *o = two_pi * x[l] * x[k];
        }
        Ok(())
    })?;
    let checks = pairs
        .iter()
        .enumerate()
        .map(|(j, &(l, k))| {
            Ok(Check::compare(
                format!("2pi E[x{} x{}] vs W[{},{}]", l + 1, k + 1, l + 1, k + 1),
                samples.estimate(j)?.into(),
                Side::Exact(spec.w[(l, k)]),
                t,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(
        VerificationReport::from_checks("gaussian.covariance", "covariance", checks)
            .with_seed(stream.seed),
    )
}

/// CSV `point,weight,value` of the `m`-node tensor rule used by
/// [`fourier_quadrature`]. `point` lists the `x` coordinates separated by `;`,
/// `weight` includes the Jacobian and `nu`, and `value` is the phase factor
/// `exp(-2 pi i x'^T x)` at the node (complex numbers as `a+bi`). Summing
/// `weight * value` gives the transform.
pub fn quadrature_table(spec: &GaussianSpec, xprime: &[f64], m: usize) -> Result<String> {
    if spec.dim() > MAX_DIM {
        return Err(Error::Unsupported(format!(
            "quadrature needs D <= {MAX_DIM}, got {}",
            spec.dim()
        )));
    }
    let xp = spec.check_point(xprime)?;
    let wh = whitening(spec, &xp)?;
    let nu = dx_normalization(spec);
    let (nodes, weights) = gauss_hermite(m);
    let d = spec.dim();
    let two_sqrt_pi = 2.0 * std::f64::consts::PI.sqrt();
    let mut out = String::from("point,weight,value\n");
    let total = m.pow(d as u32);
    for flat in 0..total {
        let mut rem = flat;
        let mut y = DVector::<Complex64>::zeros(d);
        let mut weight = nu * wh.jacobian;
        let mut value = Complex64::new(1.0, 0.0);
        for k in 0..d {
            let j = rem % m;
            rem /= m;
            y[k] = Complex64::new(nodes[j], 0.0);
            weight *= weights[j];
            value *= (Complex64::new(0.0, -two_sqrt_pi) * wh.freq[k] * nodes[j]).exp();
        }
        let x = &wh.map * y;
        let point: Vec<String> = x
            .iter()
            .map(|c| {
                if c.im == 0.0 {
                    format!("{}", c.re)
                } else {
                    format!("{c}")
                }
            })
            .collect();
        // The weight folds in exp(-|y|^2); `value` is exp(-2 pi i x'.x).
        out.push_str(&format!("{},{},{}\n", point.join(";"), weight, value));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, Tolerance};
    use std::f64::consts::PI;

    fn spec(rows: &[&[f64]], s: Param) -> GaussianSpec {
        let d = rows.len();
        make_spec(DMatrix::from_fn(d, d, |i, j| rows[i][j]), s).unwrap()
    }

    #[test]
    fn identity_is_self_dual() {
        let sp = spec(&[&[1.0, 0.0], &[0.0, 1.0]], Param::One);
        assert_eq!(sp.w(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn diagonal_inverse() {
        let sp = spec(&[&[2.0, 0.0], &[0.0, 8.0]], Param::One);
        assert!((sp.w()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((sp.w()[(1, 1)] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_matrices() {
        let neg = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            make_spec(neg.clone(), Param::One),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(make_spec(neg, Param::I).is_ok());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            make_spec(asym, Param::One),
            Err(Error::NotSymmetric { .. })
        ));
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(make_spec(sing, Param::I), Err(Error::Singular(_))));
    }

    #[test]
    fn normalization_values() {
        assert_eq!(
            dx_normalization(&spec(&[&[1.0]], Param::One)),
            Complex64::new(1.0, 0.0)
        );
        let n = dx_normalization(&spec(&[&[2.0, 0.0], &[0.0, 8.0]], Param::One));
        assert!((n - Complex64::new(4.0, 0.0)).norm() < 1e-14);
        let n = dx_normalization(&spec(&[&[1.0]], Param::I));
        assert!((n - Complex64::from_polar(1.0, -PI / 4.0)).norm() < 1e-15);
    }

    #[test]
    fn normalization_branch_in_two_dims() {
        // s^{-1} (det Q)^{1/2} = -i * 2 for Q = diag(1, 4), s = i.
        let n = dx_normalization(&spec(&[&[1.0, 0.0], &[0.0, 4.0]], Param::I));
        assert!((n - Complex64::new(0.0, -2.0)).norm() < 1e-14);
    }

    #[test]
    fn one_dim_against_adaptive_oracle() {
        // Q = 2, x' = 1: sqrt(2) int exp(-2 pi x^2) cos(2 pi x) dx = exp(-pi/2).
        let oracle = 2f64.sqrt()
            * integrate(
                |x| (-2.0 * PI * x * x).exp() * (2.0 * PI * x).cos(),
                -8.0,
                8.0,
                Tolerance::default(),
            )
            .unwrap();
        assert!((oracle - (-PI / 2.0).exp()).abs() < 1e-12);
        let sp = spec(&[&[2.0]], Param::One);
        let (q, _) = fourier_quadrature(&sp, &[1.0], 1e-12).unwrap();
        assert!((q.re - oracle).abs() < 1e-10, "{q}");
        assert!(q.im.abs() < 1e-12);
    }

    #[test]
    fn fresnel_one_dim() {
        let sp = spec(&[&[1.0]], Param::I);
        let rhs = sp.fourier_rhs(&[1.0]).unwrap();
        assert!((rhs - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        // Oracle: int exp(i pi x^2 - 2 pi i x) dx = e^{-i pi} int exp(i pi u^2) du,
        // with int exp(i pi u^2) du = e^{i pi/4} on the rotated contour.
        let fresnel = {
            let rot = Complex64::from_polar(1.0, PI / 4.0);
            let re = integrate(|t| (-PI * t * t).exp(), -10.0, 10.0, Tolerance::default()).unwrap();
            rot * re
        };
        let oracle = dx_normalization(&sp) * Complex64::from_polar(1.0, -PI) * fresnel;
        let cf = fourier_closed_form(&sp, &[1.0]).unwrap();
        assert!((cf - oracle).norm() < 1e-12);
        let (q, _) = fourier_quadrature(&sp, &[1.0], 1e-12).unwrap();
        assert!((q - rhs).norm() < 1e-10, "{q}");
    }

    #[test]
    fn indefinite_fresnel() {
        let sp = spec(&[&[1.0, 0.3], &[0.3, -2.0]], Param::I);
        let xp = [0.4, -0.7];
        let rhs = sp.fourier_rhs(&xp).unwrap();
        let cf = fourier_closed_form(&sp, &xp).unwrap();
        assert!((cf - rhs).norm() < 1e-12);
        let (q, _) = fourier_quadrature(&sp, &xp, 1e-10).unwrap();
        assert!((q - rhs).norm() < 1e-9);
    }

    #[test]
    fn zero_frequency_is_normalized() {
        let sp = spec(
            &[&[3.0, 1.0, 0.0], &[1.0, 2.0, 0.5], &[0.0, 0.5, 1.5]],
            Param::One,
        );
        let (q, _) = fourier_quadrature(&sp, &[0.0; 3], 1e-12).unwrap();
        assert!((q - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn covariance_small() {
        let sp = spec(&[&[2.0, 0.0], &[0.0, 8.0]], Param::One);
        let r =
            covariance_check(&sp, 20_000, &RngStream::new(5, 0), &Thresholds::default()).unwrap();
        assert!(r.pass, "{}", r.to_json());
        assert_eq!(r.checks.len(), 3);
    }

    #[test]
    fn dual_round_trip() {
        let sp = spec(&[&[2.0, 0.5], &[0.5, 1.0]], Param::One);
        let back = sp.dual().unwrap().dual().unwrap();
        assert!((back.q() - sp.q()).amax() < 1e-10);
    }

    #[test]
    fn table_sums_to_transform() {
        let sp = spec(&[&[2.0]], Param::One);
        let csv = quadrature_table(&sp, &[0.5], 40).unwrap();
        let mut total = Complex64::new(0.0, 0.0);
        for line in csv.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let w: Complex64 = f[1].parse().unwrap();
            let v: Complex64 = f[2].parse().unwrap();
            total += w * v;
        }
        assert!((total - sp.fourier_rhs(&[0.5]).unwrap()).norm() < 1e-12);
    }
}
