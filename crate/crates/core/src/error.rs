use thiserror::Error;

/// Errors raised across the library.
///
/// Variants are grouped by the module that produces them; higher layers
/// propagate lower-level failures unchanged so callers can match on the
/// root cause (a quadrature failure inside a basis construction still
/// surfaces as [`Error::NonConvergence`]).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // numerics
    #[error("quadrature did not converge: estimate {value:e} with error {error:e} after {subdivisions} subdivisions")]
    NonConvergence {
        value: f64,
        error: f64,
        subdivisions: usize,
    },
    #[error("integrand is not finite at x = {x:e}")]
    NonFiniteIntegrand { x: f64 },
    #[error("invalid quadrature specification: {0}")]
    InvalidQuadrature(String),
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is singular: |det| = {det:e} below threshold {threshold:e}")]
    Singular { det: f64, threshold: f64 },
    #[error("matrix is not Hermitian: asymmetry {asymmetry:e} exceeds tolerance {tol:e}")]
    NotHermitian { asymmetry: f64, tol: f64 },

    // models
    #[error("beam width must be positive and finite, got {0}")]
    InvalidWidth(f64),
    #[error("invalid cliff parameters: {0}")]
    InvalidCliffParameters(String),
    #[error("invalid tabulated data: {0}")]
    InvalidTable(String),
    #[error("expected {expected} parameter values, got {got}")]
    ParameterCount { expected: usize, got: usize },

    // fisher
    #[error("Fisher matrix is not positive semidefinite: minimum eigenvalue {min_eigenvalue:e}")]
    NotPsd { min_eigenvalue: f64 },
    #[error("first-order regime violated: (w·alpha)^-2 = {inverse_square:e} is not below 0.01")]
    RegimeViolation { inverse_square: f64 },
    #[error("operation requires a Gaussian illumination profile")]
    RequiresGaussian,

    // modes
    #[error("Omega matrix is degenerate (normalised determinant {normalized_det:e}); parameters are locally indistinguishable")]
    DegenerateOmega { normalized_det: f64 },
    #[error("probability {index} is negative ({value:e}); offset is outside the second-order trust region")]
    NegativeProbability { index: usize, value: f64 },
    #[error("finite-difference step too large: Richardson disagreement {disagreement:e} exceeds {tol:e}")]
    StepTooLarge { disagreement: f64, tol: f64 },
    #[error("classical Fisher limit is direction dependent for outcome {outcome}")]
    AmbiguousLimit { outcome: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    // estimation
    #[error("invalid probabilities: {0}")]
    InvalidProbabilities(String),
    #[error("likelihood maximum on the search boundary for parameter {parameter}")]
    BoundaryMaximum { parameter: usize },
    #[error("invalid simulation setup: {0}")]
    InvalidSimulation(String),

    // cli / io
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
