//! Monte Carlo checks of the identities that determine Wiener measure:
//! the characteristic functional, the Cameron-Martin formula and the
//! Malliavin integration-by-parts formula.
//!
//! Both sides of Cameron-Martin and Malliavin are evaluated on the same
//! sampled paths; the pass criterion uses the standard error of the paired
//! difference.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::estimator::{sample, RngStream};
use crate::paths::{div_a, inner_21, sample_brownian, DiscretePath, DualMeasure, Grid, Shift};
use crate::report::{Check, Side, Thresholds, VerificationReport};

pub type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Declared growth `|F(w)| <= constant * (1 + max_j |w(t_j)|)^degree`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthBound {
    pub constant: f64,
    pub degree: u32,
}

/// `F(w) = f(w(t_1), ..., w(t_m))`.
#[derive(Clone)]
pub struct CylinderFunctional {
    times: Vec<f64>,
    f: ValueFn,
    grad: Option<GradFn>,
    growth: Option<GrowthBound>,
}

impl std::fmt::Debug for CylinderFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CylinderFunctional")
            .field("times", &self.times)
            .field("has_gradient", &self.grad.is_some())
            .field("growth", &self.growth)
            .finish()
    }
}

impl CylinderFunctional {
    pub fn new(times: Vec<f64>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidArgument(
                "cylinder functional needs at least one time".into(),
            ));
        }
        if times.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "times must lie in (0, 1]: {times:?}"
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(format!(
                "times must be strictly increasing: {times:?}"
            )));
        }
        Ok(Self {
            times,
            f: Arc::new(f),
            grad: None,
            growth: None,
        })
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad = Some(Arc::new(g));
        self
    }

    pub fn with_growth_bound(mut self, bound: GrowthBound) -> Self {
        self.growth = Some(bound);
        self
    }

    /// The linear functional `A_phi` written on all grid nodes.
    pub fn stochastic_integral(phi: &Shift) -> Result<Self> {
        let grid = phi.grid();
        let weights: Vec<f64> = phi.integral_weights()[1..].to_vec();
        let times: Vec<f64> = (1..=grid.steps()).map(|i| grid.node(i)).collect();
        let w2 = weights.clone();
        Ok(Self::new(times, move |x| {
            x.iter().zip(&weights).map(|(x, c)| x * c).sum()
        })?
        .with_gradient(move |_| w2.clone()))
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn has_gradient(&self) -> bool {
        self.grad.is_some()
    }

    fn arguments(&self, w: &DiscretePath) -> Result<Vec<f64>> {
        self.times.iter().map(|&t| w.at(t)).collect()
    }

    pub fn eval(&self, w: &DiscretePath) -> Result<f64> {
        Ok((self.f)(&self.arguments(w)?))
    }

    /// `D_phi F(w) = sum_j d_j f(...) phi(t_j)`; central differences with
    /// step `eps^(1/3) (1 + |w|_inf)` when no gradient is attached.
    pub fn gateaux(&self, w: &DiscretePath, phi: &Shift) -> Result<f64> {
        let x = self.arguments(w)?;
        let p: Vec<f64> = self
            .times
            .iter()
            .map(|&t| phi.at(t))
            .collect::<Result<_>>()?;
        match &self.grad {
            Some(g) => Ok(g(&x).iter().zip(&p).map(|(g, p)| g * p).sum()),
            None => {
                let h = f64::EPSILON.cbrt() * (1.0 + w.sup_norm());
                let plus: Vec<f64> = x.iter().zip(&p).map(|(x, p)| x + h * p).collect();
                let minus: Vec<f64> = x.iter().zip(&p).map(|(x, p)| x - h * p).collect();
                Ok(((self.f)(&plus) - (self.f)(&minus)) / (2.0 * h))
            }
        }
    }

    fn exceeds_growth(&self, w: &DiscretePath, value: f64) -> bool {
        match self.growth {
            Some(b) => {
                let m = self
                    .times
                    .iter()
                    .filter_map(|&t| w.at(t).ok())
                    .fold(0.0f64, |m, v| m.max(v.abs()));
                value.abs() > b.constant * (1.0 + m).powi(b.degree as i32)
            }
            None => false,
        }
    }
}

/// `J(phi, w) = exp(-|phi|^2 / 2 + A_phi(w))`.
pub fn cm_density(phi: &Shift, w: &DiscretePath) -> Result<f64> {
    let exponent = -0.5 * phi.norm_sq() + div_a(phi, w)?;
    let j = exponent.exp();
    if !j.is_finite() || j == 0.0 {
        return Err(Error::NonFiniteDensity { exponent });
    }
    Ok(j)
}

/// Central-difference derivative of `eps -> J(eps phi, w)` at `eps = 0`.
pub fn cm_density_derivative(phi: &Shift, w: &DiscretePath, h: f64) -> Result<f64> {
    Ok((cm_density(&phi.scaled(h), w)? - cm_density(&phi.scaled(-h), w)?) / (2.0 * h))
}

fn check_grid(grid: Grid, phi: &Shift) -> Result<()> {
    if phi.grid() != grid {
        return Err(Error::GridMismatch {
            left: grid.steps(),
            right: phi.grid().steps(),
        });
    }
    Ok(())
}

fn growth_note(violations: &AtomicU64) -> Option<String> {
    let v = violations.load(Ordering::Relaxed);
    (v > 0).then(|| format!("warning: {v} samples exceeded the declared growth bound"))
}

pub fn verify_characteristic_functional(
    measure: &DualMeasure,
    grid: Grid,
    n_samples: u64,
    stream: &RngStream,
    t: &Thresholds,
) -> Result<VerificationReport> {
    let atoms = measure.node_indices(grid)?;
    let samples = sample(n_samples, 2, stream, |rng, out| {
        let w = sample_brownian(grid, rng);
        let p: f64 = atoms.iter().map(|&(i, a)| a * w.values()[i]).sum();
        out[0] = p.cos();
        out[1] = -p.sin();
        Ok(())
    })?;
    let exact = (-0.5 * measure.kernel_form()).exp();
    let checks = vec![
        Check::compare(
            "real part",
            samples.estimate(0)?.into(),
            Side::Exact(exact),
            t,
        ),
        Check::compare(
            "imaginary part",
            samples.estimate(1)?.into(),
            Side::Exact(0.0),
            t,
        ),
    ];
    Ok(
        VerificationReport::from_checks("wiener.characteristic_functional", "a1", checks)
            .with_seed(stream.seed)
            .with_grid(grid.steps()),
    )
}

pub fn verify_cameron_martin(
    f: &CylinderFunctional,
    phi: &Shift,
    grid: Grid,
    n_samples: u64,
    stream: &RngStream,
    t: &Thresholds,
) -> Result<VerificationReport> {
    check_grid(grid, phi)?;
    let violations = AtomicU64::new(0);
    let samples = sample(n_samples, 2, stream, |rng, out| {
        let w = sample_brownian(grid, rng);
        let shifted = w.shifted(phi, 1.0)?;
        let fs = f.eval(&shifted)?;
        let fw = f.eval(&w)?;
        if f.exceeds_growth(&w, fw) || f.exceeds_growth(&shifted, fs) {
            violations.fetch_add(1, Ordering::Relaxed);
        }
        out[0] = fs;
        out[1] = cm_density(phi, &w)? * fw;
        Ok(())
    })?;
    let diff = samples.difference(0, 1)?;
    let check = Check::paired(
        "E[F(w + phi)] vs E[J(phi, w) F(w)]",
        samples.estimate(0)?.into(),
        samples.estimate(1)?.into(),
        diff.std_error,
        t,
    );
    let mut report = VerificationReport::from_checks("wiener.cameron_martin", "a4", vec![check])
        .with_seed(stream.seed)
        .with_grid(grid.steps());
    if let Some(note) = growth_note(&violations) {
        report = report.with_note(note);
    }
    Ok(report)
}

/// `E[J(phi, w)] = 1` (Cameron-Martin with `F = 1`).
pub fn verify_cm_normalization(
    phi: &Shift,
    grid: Grid,
    n_samples: u64,
    stream: &RngStream,
    t: &Thresholds,
) -> Result<VerificationReport> {
    check_grid(grid, phi)?;
    let samples = sample(n_samples, 1, stream, |rng, out| {
        out[0] = cm_density(phi, &sample_brownian(grid, rng))?;
        Ok(())
    })?;
    let check = Check::compare(
        "E[J(phi, w)] vs 1",
        samples.estimate(0)?.into(),
        Side::Exact(1.0),
        t,
    );
    Ok(
        VerificationReport::from_checks("wiener.cm_normalization", "a6", vec![check])
            .with_seed(stream.seed)
            .with_grid(grid.steps()),
    )
}

pub fn verify_malliavin(
    f: &CylinderFunctional,
    phi: &Shift,
    grid: Grid,
    n_samples: u64,
    stream: &RngStream,
    t: &Thresholds,
) -> Result<VerificationReport> {
    check_grid(grid, phi)?;
    let violations = AtomicU64::new(0);
    let samples = sample(n_samples, 2, stream, |rng, out| {
        let w = sample_brownian(grid, rng);
        let fw = f.eval(&w)?;
        if f.exceeds_growth(&w, fw) {
            violations.fetch_add(1, Ordering::Relaxed);
        }
        out[0] = f.gateaux(&w, phi)?;
        out[1] = div_a(phi, &w)? * fw;
        Ok(())
    })?;
    let diff = samples.difference(0, 1)?;
    let check = Check::paired(
        "E[D_phi F] vs E[A_phi F]",
        samples.estimate(0)?.into(),
        samples.estimate(1)?.into(),
        diff.std_error,
        t,
    );
    let mut report = VerificationReport::from_checks("wiener.malliavin", "a16", vec![check])
        .with_seed(stream.seed)
        .with_grid(grid.steps());
    if let Some(note) = growth_note(&violations) {
        report = report.with_note(note);
    }
    Ok(report)
}

/// Malliavin with `F = A_{phi2}`: both `E[D_{phi1} A_{phi2}]` and
/// `E[A_{phi1} A_{phi2}]` reproduce `(phi1 | phi2)`.
pub fn verify_isometry(
    phi1: &Shift,
    phi2: &Shift,
    grid: Grid,
    n_samples: u64,
    stream: &RngStream,
    t: &Thresholds,
) -> Result<VerificationReport> {
    check_grid(grid, phi1)?;
    check_grid(grid, phi2)?;
    let f = CylinderFunctional::stochastic_integral(phi2)?;
    let samples = sample(n_samples, 2, stream, |rng, out| {
        let w = sample_brownian(grid, rng);
        out[0] = f.gateaux(&w, phi1)?;
        out[1] = div_a(phi1, &w)? * div_a(phi2, &w)?;
        Ok(())
    })?;
    let inner = inner_21(phi1, phi2)?;
    let lhs = samples.estimate(0)?;
    let rhs = samples.estimate(1)?;
    let diff = samples.difference(0, 1)?;
    let checks = vec![
        Check::paired(
            "E[D_phi1 A_phi2] vs E[A_phi1 A_phi2]",
            lhs.into(),
            rhs.into(),
            diff.std_error,
            t,
        ),
        Check::compare(
            "E[A_phi1 A_phi2] vs (phi1|phi2)",
            rhs.into(),
            Side::Exact(inner),
            t,
        ),
        // D_phi1 A_phi2 is deterministic; on the grid it equals (phi1|phi2) up
        // to the midpoint-vs-difference-quotient error O(dt^2).
        Check::compare(
            "D_phi1 A_phi2 vs (phi1|phi2)",
            Side::Exact(lhs.mean),
            Side::Exact(inner),
            &Thresholds {
                abs_tol: 10.0 * grid.dt().powi(2) * (1.0 + phi1.norm_sq() + phi2.norm_sq()),
                ..*t
            },
        ),
    ];
    Ok(
        VerificationReport::from_checks("wiener.isometry", "twoseven", checks)
            .with_seed(stream.seed)
            .with_grid(grid.steps()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::new(n).unwrap()
    }

    #[test]
    fn density_of_zero_shift_is_one() {
        let g = grid(32);
        let w = sample_brownian(g, &mut RngStream::new(1, 0).draw_rng(0));
        assert_eq!(cm_density(&Shift::zero(g), &w).unwrap(), 1.0);
    }

    #[test]
    fn density_of_linear_shift() {
        let g = grid(64);
        let w = sample_brownian(g, &mut RngStream::new(2, 0).draw_rng(0));
        let j = cm_density(&Shift::linear(g, 1.0), &w).unwrap();
        let expect = (-0.5 + w.values()[64]).exp();
        assert!((j - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn density_overflow_is_reported() {
        let g = grid(4);
        let w = DiscretePath::new(g, vec![0.0, 100.0, 200.0, 300.0, 400.0]).unwrap();
        match cm_density(&Shift::linear(g, 10.0), &w) {
            Err(Error::NonFiniteDensity { exponent }) => assert!((exponent - 3950.0).abs() < 1e-9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cylinder_time_validation() {
        assert!(CylinderFunctional::new(vec![0.5, 0.5], |x| x[0]).is_err());
        assert!(CylinderFunctional::new(vec![0.0], |x| x[0]).is_err());
        assert!(CylinderFunctional::new(vec![], |_| 0.0).is_err());
    }

    #[test]
    fn gateaux_fallback_matches_gradient() {
        let g = grid(16);
        let w = sample_brownian(g, &mut RngStream::new(5, 0).draw_rng(0));
        let phi = Shift::basis(g, 1).unwrap();
        let plain = CylinderFunctional::new(vec![0.5, 1.0], |x| (x[0] * x[1]).sin()).unwrap();
        let with = plain
            .clone()
            .with_gradient(|x| vec![x[1] * (x[0] * x[1]).cos(), x[0] * (x[0] * x[1]).cos()]);
        let a = plain.gateaux(&w, &phi).unwrap();
        let b = with.gateaux(&w, &phi).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn off_grid_atom_is_rejected() {
        let m = DualMeasure::new(vec![(0.3, 1.0)]).unwrap();
        let r = verify_characteristic_functional(
            &m,
            grid(4),
            10,
            &RngStream::new(0, 0),
            &Thresholds::default(),
        );
        assert!(matches!(r, Err(Error::OffGrid { .. })));
    }

    #[test]
    fn empty_measure_is_exact() {
        let m = DualMeasure::new(vec![]).unwrap();
        let r = verify_characteristic_functional(
            &m,
            grid(8),
            100,
            &RngStream::new(0, 0),
            &Thresholds::default(),
        )
        .unwrap();
        assert!(r.pass);
        assert_eq!(r.checks[0].lhs.value(), 1.0);
        assert_eq!(r.checks[0].rhs.value(), 1.0);
    }

    #[test]
    fn zero_shift_cameron_martin_is_identical() {
        let g = grid(16);
        let f = CylinderFunctional::new(vec![1.0], |x| x[0] * x[0]).unwrap();
        let r = verify_cameron_martin(
            &f,
            &Shift::zero(g),
            g,
            500,
            &RngStream::new(3, 1),
            &Thresholds::default(),
        )
        .unwrap();
        assert!(r.pass);
        assert_eq!(r.discrepancy, 0.0);
    }

    #[test]
    fn growth_warning_is_a_note_not_a_failure() {
        let g = grid(16);
        let f = CylinderFunctional::new(vec![1.0], |x| x[0].powi(4))
            .unwrap()
            .with_growth_bound(GrowthBound {
                constant: 1e-3,
                degree: 0,
            });
        let r = verify_cameron_martin(
            &f,
            &Shift::zero(g),
            g,
            200,
            &RngStream::new(3, 1),
            &Thresholds::default(),
        )
        .unwrap();
        assert!(r.pass);
        assert!(r.notes.iter().any(|n| n.contains("growth")));
    }

    #[test]
    fn shift_grid_must_match() {
        let f = CylinderFunctional::new(vec![1.0], |x| x[0]).unwrap();
        let r = verify_malliavin(
            &f,
            &Shift::zero(grid(8)),
            grid(16),
            10,
            &RngStream::new(0, 0),
            &Thresholds::default(),
        );
        assert!(matches!(r, Err(Error::GridMismatch { .. })));
    }

    #[test]
    fn density_derivative_is_stochastic_integral() {
        let g = grid(64);
        let phi = Shift::basis(g, 2).unwrap();
        for d in 0..20 {
            let w = sample_brownian(g, &mut RngStream::new(11, 0).draw_rng(d));
            let fd = cm_density_derivative(&phi, &w, 1e-5).unwrap();
            let a = div_a(&phi, &w).unwrap();
            assert!((fd - a).abs() < 1e-7 * (1.0 + a.abs()), "{fd} vs {a}");
        }
    }

    #[test]
    fn isometry_with_linear_direction() {
        let g = Grid::new(64).unwrap();
        let e1 = Shift::basis(g, 1).unwrap();
        let lin = Shift::linear(g, 1.0);
        let r = verify_isometry(
            &e1,
            &lin,
            g,
            2000,
            &RngStream::new(1, 0),
            &Thresholds::default(),
        )
        .unwrap();
        assert!(r.pass, "{:?}", r.checks);
        assert!(r.checks[2].sigma_units.is_none());
    }
}
