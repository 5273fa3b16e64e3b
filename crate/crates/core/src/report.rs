//! Verification reports shared by every identity check.

use serde::{Deserialize, Serialize};

use crate::estimator::McEstimate;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SIGMA_THRESHOLD: f64 = 3.0;
pub const DEFAULT_ABS_TOL: f64 = 1e-8;

/// One side of an identity: a Monte Carlo estimate or an exact number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Side {
    Statistical(McEstimate),
    Exact(f64),
}

impl Side {
    pub fn value(&self) -> f64 {
        match self {
            Side::Statistical(e) => e.mean,
            Side::Exact(v) => *v,
        }
    }

    pub fn std_error(&self) -> f64 {
        match self {
            Side::Statistical(e) => e.std_error,
            Side::Exact(_) => 0.0,
        }
    }

    pub fn is_statistical(&self) -> bool {
        matches!(self, Side::Statistical(_))
    }
}

impl From<McEstimate> for Side {
    fn from(e: McEstimate) -> Self {
        Side::Statistical(e)
    }
}

impl From<f64> for Side {
    fn from(v: f64) -> Self {
        Side::Exact(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub sigma: f64,
    pub abs_tol: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            sigma: DEFAULT_SIGMA_THRESHOLD,
            abs_tol: DEFAULT_ABS_TOL,
        }
    }
}

impl Thresholds {
    pub fn exact(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }
}

/// A single lhs/rhs comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub lhs: Side,
    pub rhs: Side,
    pub discrepancy: f64,
    /// Discrepancy in standard errors; `None` when both sides are exact.
    pub sigma_units: Option<f64>,
    pub pass: bool,
}

impl Check {
    /// Compare two independent sides. Statistical sides combine their errors
    /// in quadrature; an all-exact comparison (or zero combined error) uses
    /// the absolute tolerance.
    pub fn compare(label: impl Into<String>, lhs: Side, rhs: Side, t: &Thresholds) -> Self {
        let se = lhs.std_error().hypot(rhs.std_error());
        Self::with_error(label, lhs, rhs, se, t)
    }

    /// Compare two sides whose difference has standard error `diff_se`
    /// (common random numbers: the error of the paired difference).
    pub fn paired(
        label: impl Into<String>,
        lhs: Side,
        rhs: Side,
        diff_se: f64,
        t: &Thresholds,
    ) -> Self {
        Self::with_error(label, lhs, rhs, diff_se, t)
    }

    fn with_error(label: impl Into<String>, lhs: Side, rhs: Side, se: f64, t: &Thresholds) -> Self {
        let discrepancy = (lhs.value() - rhs.value()).abs();
        let statistical = lhs.is_statistical() || rhs.is_statistical();
        let (sigma_units, pass) = if statistical && se > 0.0 {
            let s = discrepancy / se;
            (Some(s), s <= t.sigma)
        } else if statistical {
            let s = if discrepancy <= t.abs_tol {
                0.0
            } else {
                f64::INFINITY
            };
            (Some(s), discrepancy <= t.abs_tol)
        } else {
            (None, discrepancy <= t.abs_tol)
        };
        Self {
            label: label.into(),
            lhs,
            rhs,
            discrepancy,
            sigma_units,
            pass,
        }
    }

    /// An exact comparison with an explicit tolerance.
    pub fn exact(label: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        Self::compare(
            label,
            Side::Exact(lhs),
            Side::Exact(rhs),
            &Thresholds::exact(tol),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema: u32,
    pub identity: String,
    /// Equation tag the identity corresponds to, e.g. `"a4"`.
    pub equation: String,
    pub lhs: Side,
    pub rhs: Side,
    pub discrepancy: f64,
    pub sigma_units: Option<f64>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_n: Option<usize>,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl VerificationReport {
    /// Build a report whose headline fields mirror the worst check: the first
    /// failing check, otherwise the one with the largest sigma units (or
    /// discrepancy when no check is statistical).
    pub fn from_checks(
        identity: impl Into<String>,
        equation: impl Into<String>,
        checks: Vec<Check>,
    ) -> Self {
        let worst = checks
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                let key = |c: &Check| (!c.pass, c.sigma_units.unwrap_or(0.0), c.discrepancy);
                let (ka, kb) = (key(a), key(b));
                ka.0.cmp(&kb.0)
                    .then(ka.1.total_cmp(&kb.1))
                    .then(ka.2.total_cmp(&kb.2))
            })
            .map(|(i, _)| i);
        let (lhs, rhs, discrepancy, sigma_units) = match worst {
            Some(i) => {
                let c = &checks[i];
                (c.lhs, c.rhs, c.discrepancy, c.sigma_units)
            }
            None => (Side::Exact(0.0), Side::Exact(0.0), 0.0, None),
        };
        let pass = checks.iter().all(|c| c.pass);
        Self {
            schema: SCHEMA_VERSION,
            identity: identity.into(),
            equation: equation.into(),
            lhs,
            rhs,
            discrepancy,
            sigma_units,
            pass,
            seed: None,
            grid_n: None,
            checks,
            notes: Vec::new(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_grid(mut self, n: usize) -> Self {
        self.grid_n = Some(n);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn failing(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(mean: f64, se: f64) -> Side {
        Side::Statistical(McEstimate {
            mean,
            std_error: se,
            n_samples: 100,
        })
    }

    #[test]
    fn sigma_rule_for_statistical_sides() {
        let t = Thresholds::default();
        let c = Check::compare("x", est(1.0, 0.1), Side::Exact(1.25), &t);
        assert!((c.sigma_units.unwrap() - 2.5).abs() < 1e-12);
        assert!(c.pass);
        let c = Check::compare("x", est(1.0, 0.1), Side::Exact(1.35), &t);
        assert!(!c.pass);
    }

    #[test]
    fn zero_error_falls_back_to_abs_tol() {
        let t = Thresholds::default();
        assert!(Check::compare("x", est(1.0, 0.0), Side::Exact(1.0), &t).pass);
        assert!(!Check::compare("x", est(1.0, 0.0), Side::Exact(1.1), &t).pass);
    }

    #[test]
    fn report_headline_is_worst_check() {
        let checks = vec![
            Check::exact("a", 1.0, 1.0, 1e-12),
            Check::exact("b", 1.0, 2.0, 1e-12),
            Check::exact("c", 1.0, 1.5, 1e-12),
        ];
        let r = VerificationReport::from_checks("id", "a1", checks);
        assert!(!r.pass);
        assert_eq!(r.discrepancy, 1.0);
    }

    #[test]
    fn json_shape() {
        let r = VerificationReport::from_checks(
            "wiener.cf",
            "a1",
            vec![Check::compare(
                "re",
                est(0.6, 0.01),
                Side::Exact(0.6065),
                &Thresholds::default(),
            )],
        )
        .with_seed(42)
        .with_grid(256);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["schema"], 1);
        assert_eq!(v["lhs"]["n"], 100);
        assert!(v["lhs"]["se"].is_number());
        assert!(v["rhs"].is_number());
        assert_eq!(v["grid_n"], 256);
        assert_eq!(v["seed"], 42);
        assert_eq!(v["pass"], true);
    }
}
