//! Numerical laboratory for characterizations of volume forms.
//!
//! * [`paths`] and [`wiener`]: Brownian paths and Monte Carlo checks of the
//!   characteristic functional, Cameron-Martin and Malliavin identities.
//! * [`chaos`]: exact polynomial model of the Wiener chaos / Fock algebra.
//! * [`gaussian`]: finite-dimensional Gaussian and Fresnel Fourier identities.
//! * [`sdyson`]: zero-dimensional Schwinger-Dyson toy models.
//! * [`geometry`]: Lie-derivative divergence identities on charted manifolds.
//! * [`cli`]: the `volforms` command-line harness and its JSON reports.

pub mod chaos;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod expr;
pub mod gaussian;
pub mod geometry;
pub mod paths;
pub mod poly;
pub mod quadrature;
pub mod report;
pub mod sdyson;
pub mod wiener;

pub use error::{Error, Result};
pub use estimator::{McEstimate, RngStream};
pub use report::{Check, Side, Thresholds, VerificationReport};
