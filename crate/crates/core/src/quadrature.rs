//! Adaptive Gauss-Kronrod integration (1-D and nested boxes) and
//! Gauss-Hermite rules.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// 7-point Gauss weights at XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-14,
            rel: 1e-12,
            max_intervals: 4000,
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: Vec<f64>,
    key: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key)
    }
}

fn gk15<F>(f: &mut F, a: f64, b: f64, width: usize, buf: &mut [f64]) -> (Vec<f64>, Vec<f64>)
where
    F: FnMut(f64, &mut [f64]),
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = vec![0.0; width];
    let mut g = vec![0.0; width];
    for (i, (&x, &wk)) in XGK.iter().zip(&WGK).enumerate() {
        let pts: &[f64] = if x == 0.0 { &[0.0] } else { &[-1.0, 1.0] };
        for &s in pts {
            f(c + s * h * x, buf);
            for j in 0..width {
                k[j] += wk * buf[j];
                if i % 2 == 1 {
                    g[j] += WG[i / 2] * buf[j];
                }
            }
        }
    }
    let value: Vec<f64> = k.iter().map(|v| v * h).collect();
    let error: Vec<f64> = k
        .iter()
        .zip(&g)
        .map(|(kv, gv)| ((kv - gv) * h).abs())
        .collect();
    (value, error)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Adaptive G7/K15 integration of a vector-valued integrand over `[a, b]`.
/// Convergence requires every component's error estimate to fall below
/// `max(abs, rel * max_k |I_k|)`.
pub fn integrate_vec<F>(
    mut f: F,
    a: f64,
    b: f64,
    width: usize,
    tol: Tolerance,
) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(f64, &mut [f64]),
{
    let mut buf = vec![0.0; width];
    let (v, e) = gk15(&mut f, a, b, width, &mut buf);
    let mut total = v.clone();
    let mut total_err = e.clone();
    let mut heap = BinaryHeap::new();
    heap.push(Segment {
        a,
        b,
        key: max_abs(&e),
        value: v,
        error: e,
    });
    loop {
        let target = tol.abs.max(tol.rel * max_abs(&total));
        let err = max_abs(&total_err);
        if err <= target {
            return Ok((total, err));
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::QuadratureNonConvergence {
                estimate: err,
                tolerance: target,
            });
        }
        let s = heap.pop().expect("non-empty");
        let mid = 0.5 * (s.a + s.b);
        if mid <= s.a || mid >= s.b {
            return Err(Error::QuadratureNonConvergence {
                estimate: err,
                tolerance: target,
            });
        }
        let (v1, e1) = gk15(&mut f, s.a, mid, width, &mut buf);
        let (v2, e2) = gk15(&mut f, mid, s.b, width, &mut buf);
        heap.push(Segment {
            a: s.a,
            b: mid,
            key: max_abs(&e1),
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: s.b,
            key: max_abs(&e2),
            value: v2,
            error: e2,
        });
        // Full re-sum: incremental updates lose everything when a large
        // initial estimate is replaced by small pieces.
        total.iter_mut().for_each(|v| *v = 0.0);
        total_err.iter_mut().for_each(|v| *v = 0.0);
        for seg in heap.iter() {
            for j in 0..width {
                total[j] += seg.value[j];
                total_err[j] += seg.error[j];
            }
        }
    }
}

pub fn integrate<F>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (v, _) = integrate_vec(|x, out| out[0] = f(x), a, b, 1, tol)?;
    Ok(v[0])
}

/// Iterated adaptive integration over a box (outermost dimension first).
pub fn integrate_box<F>(
    f: &F,
    bounds: &[(f64, f64)],
    width: usize,
    tol: Tolerance,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let mut point = vec![0.0; bounds.len()];
    nested(f, bounds, 0, &mut point, width, tol)
}

fn nested<F>(
    f: &F,
    bounds: &[(f64, f64)],
    level: usize,
    point: &mut Vec<f64>,
    width: usize,
    tol: Tolerance,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let (a, b) = bounds[level];
    if level + 1 == bounds.len() {
        let (v, _) = integrate_vec(
            |x, out| {
                point[level] = x;
                f(point, out)
            },
            a,
            b,
            width,
            tol,
        )?;
        return Ok(v);
    }
    let mut failure: Option<Error> = None;
    let (v, _) = integrate_vec(
        |x, out| {
            point[level] = x;
            match nested(f, bounds, level + 1, point, width, tol) {
                Ok(inner) => out.copy_from_slice(&inner),
                Err(e) => {
                    failure.get_or_insert(e);
                    out.iter_mut().for_each(|o| *o = 0.0);
                }
            }
        },
        a,
        b,
        width,
        tol,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// Gauss-Hermite rule for the weight `exp(-x^2)` (Golub-Welsch).
pub fn gauss_hermite(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m > 0);
    let mut jacobi = DMatrix::<f64>::zeros(m, m);
    for i in 1..m {
        let b = (i as f64 / 2.0).sqrt();
        jacobi[(i, i - 1)] = b;
        jacobi[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Symmetrize to remove eigen-solver noise.
    for i in 0..m / 2 {
        let j = m - 1 - i;
        let x = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-x, w);
        pairs[j] = (x, w);
    }
    if m % 2 == 1 {
        pairs[m / 2].0 = 0.0;
    }
    pairs.into_iter().unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = integrate(
            |x| x * x * x - 2.0 * x + 1.0,
            0.0,
            2.0,
            Tolerance::default(),
        )
        .unwrap();
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_integral() {
        let v = integrate(|x| (-x * x).exp(), -10.0, 10.0, Tolerance::default()).unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn vector_components_converge_together() {
        let (v, _) = integrate_vec(
            |x, out| {
                out[0] = x.exp();
                out[1] = x.sin();
            },
            0.0,
            1.0,
            2,
            Tolerance::default(),
        )
        .unwrap();
        assert!((v[0] - (1f64.exp() - 1.0)).abs() < 1e-13);
        assert!((v[1] - (1.0 - 1f64.cos())).abs() < 1e-13);
    }

    #[test]
    fn box_integral_separable() {
        let f = |p: &[f64], out: &mut [f64]| out[0] = (-(p[0] * p[0]) - 2.0 * p[1] * p[1]).exp();
        let v = integrate_box(&f, &[(-8.0, 8.0), (-8.0, 8.0)], 1, Tolerance::default()).unwrap();
        let exact = std::f64::consts::PI / 2f64.sqrt();
        assert!((v[0] - exact).abs() < 1e-12);
    }

    #[test]
    fn hermite_moments() {
        let (x, w) = gauss_hermite(20);
        let m0: f64 = w.iter().sum();
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        let sp = std::f64::consts::PI.sqrt();
        assert!((m0 - sp).abs() < 1e-13);
        assert!((m2 - sp / 2.0).abs() < 1e-13);
        assert!((m4 - 0.75 * sp).abs() < 1e-13);
    }

    #[test]
    fn non_convergence_reported() {
        let tol = Tolerance {
            abs: 0.0,
            rel: 1e-15,
            max_intervals: 4,
        };
        let r = integrate(|x| (1.0 / x.abs().max(1e-300)).sqrt(), -1.0, 1.0, tol);
        assert!(
            matches!(r, Err(Error::QuadratureNonConvergence { .. })),
            "{r:?}"
        );
    }
}
