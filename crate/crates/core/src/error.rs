use thiserror::Error;

use crate::solve::StartDiagnostic;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("x = {x} lies outside the state interval ({lower}, {upper})")]
    OutsideInterval { x: f64, lower: f64, upper: f64 },

    #[error("scalar field provides derivatives up to order {available}, order {required} is needed")]
    InsufficientDerivativeOrder { required: usize, available: usize },

    #[error("generator power {0} is not supported (maximum is 3)")]
    GeneratorOrder(usize),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("invalid model constant: {0}")]
    InvalidModelConstant(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("scheme `{scheme}` is not available for model `{model}`")]
    SchemeUnavailable { scheme: String, model: String },

    #[error("simulated path left the state interval at index {index} (value {value})")]
    PathEscaped { index: usize, value: f64 },

    #[error("model `{0}` has no closed-form conditional moments")]
    MissingExactMoments(String),

    #[error("expansion order {0} is not supported")]
    UnsupportedOrder(u32),

    #[error("matrix M(x) of basis derivatives is singular at x = {0}")]
    SingularBasis(f64),

    #[error("conditional covariance of the basis is singular at x = {0} (affinely dependent basis?)")]
    SingularCovariance(f64),

    #[error("moment engine not supported: {0}")]
    UnsupportedMomentEngine(String),

    #[error("numerical differentiation failed at x = {0}")]
    NumericalDifferentiation(f64),

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("zero information: {0}")]
    ZeroInformation(String),

    #[error("no start converged ({} attempted)", diagnostics.len())]
    NoConvergence {
        diagnostics: Vec<StartDiagnostic>,
        best: Option<crate::solve::Estimate>,
    },

    #[error("unknown estimator `{0}`")]
    UnknownEstimator(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{failed} of {total} replications failed to converge")]
    TooManyFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
