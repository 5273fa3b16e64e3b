use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: left has {left} steps, right has {right}")]
    GridMismatch { left: usize, right: usize },

    #[error("mode count mismatch: expected {expected}, found {found}")]
    ModeMismatch { expected: usize, found: usize },

    #[error("non-finite sample at draw {draw}: {value}")]
    NonFiniteSample { draw: u64, value: f64 },

    #[error("non-finite density: exponent {exponent} overflows")]
    NonFiniteDensity { exponent: f64 },

    #[error("atom at t = {t} does not lie on a grid node of a {n}-step grid")]
    OffGrid { t: f64, n: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not antisymmetric (max deviation {deviation:e})")]
    NotAntisymmetric { deviation: f64 },

    #[error("matrix is singular or nearly singular ({0})")]
    Singular(String),

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("duality check failed: |Q W - I| = {residual:e}")]
    DualityViolated { residual: f64 },

    #[error(
        "quadrature did not converge: estimated error {estimate:e} above tolerance {tolerance:e}"
    )]
    QuadratureNonConvergence { estimate: f64, tolerance: f64 },

    #[error("weight exp(-S/hbar) is not normalizable: {0}")]
    NotConfining(String),

    #[error("Newton iteration did not converge after {iterations} steps (|grad| = {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("derivative backend failure: {0}")]
    Backend(String),

    #[error("symplectic form is not closed at {point:?} (residual {residual:e})")]
    NotClosed { point: Vec<f64>, residual: f64 },

    #[error("density vanishes at {point:?}")]
    VanishingDensity { point: Vec<f64> },

    #[error("grid with {n} steps too coarse for {modes} modes (need n >= 16 K)")]
    GridTooCoarse { n: usize, modes: usize },

    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Bad configuration or input, as opposed to a numerical failure while
    /// evaluating an identity.
    pub fn is_input(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::GridMismatch { .. }
                | Error::ModeMismatch { .. }
                | Error::OffGrid { .. }
                | Error::NotSymmetric { .. }
                | Error::NotAntisymmetric { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::GridTooCoarse { .. }
                | Error::Parse { .. }
                | Error::Unsupported(_)
                | Error::Io(_)
        )
    }
}
