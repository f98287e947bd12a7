use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("trajectory left the chart domain at {point:?}")]
    TrajectoryLeftChart { point: Vec<f64> },

    #[error("adaptive integrator failed at t = {t} (step {step:e})")]
    StepFailure { t: f64, step: f64 },

    #[error("log-map solver did not converge: {0}")]
    OutsideNormalRange(String),

    #[error("radial geodesics focus at r = {reached} before the requested radius {radius}")]
    RadiusTooLarge { radius: f64, reached: f64 },

    #[error("sphere parametrization is degenerate at r = {r}")]
    DegenerateTangent { r: f64 },

    #[error("metric is not positive definite at {point:?}")]
    NonPositiveDefinite { point: Vec<f64> },

    #[error("metric is not symmetric: g[{i}][{j}] != g[{j}][{i}]")]
    NotSymmetric { i: usize, j: usize },

    #[error("shell {index} (r = {radius}) has zero area inside the domain")]
    EmptyShell { index: usize, radius: f64 },

    #[error("convex solver did not converge after {iterations} iterations")]
    SolverNotConverged { iterations: usize },

    #[error("radial profile integrates to {integral}, expected 1")]
    NotNormalized { integral: f64 },

    #[error("finite-difference derivative did not settle at {point:?}")]
    NotDifferentiable { point: Vec<f64> },

    #[error("image point {point:?} is outside the target chart")]
    ImageLeftChart { point: Vec<f64> },

    #[error("unsupported exponent: {0}")]
    UnsupportedExponent(String),

    #[error("field is undefined or out of range at {point:?}")]
    FieldEvaluation { point: Vec<f64> },

    #[error("expression error: {0}")]
    Parse(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Stable machine-readable code, used for CLI exit reporting.
    pub fn code(&self) -> &'static str {
        match self {
            Error::TrajectoryLeftChart { .. } => "TRAJECTORY_LEFT_CHART",
            Error::StepFailure { .. } => "STEP_FAILURE",
            Error::OutsideNormalRange(_) => "OUTSIDE_NORMAL_RANGE",
            Error::RadiusTooLarge { .. } => "RADIUS_TOO_LARGE",
            Error::DegenerateTangent { .. } => "DEGENERATE_TANGENT",
            Error::NonPositiveDefinite { .. } => "NON_POSITIVE_DEFINITE",
            Error::NotSymmetric { .. } => "NOT_SYMMETRIC",
            Error::EmptyShell { .. } => "EMPTY_SHELL",
            Error::SolverNotConverged { .. } => "SOLVER_NOT_CONVERGED",
            Error::NotNormalized { .. } => "NOT_NORMALIZED",
            Error::NotDifferentiable { .. } => "NOT_DIFFERENTIABLE",
            Error::ImageLeftChart { .. } => "IMAGE_LEFT_CHART",
            Error::UnsupportedExponent(_) => "UNSUPPORTED_EXPONENT",
            Error::FieldEvaluation { .. } => "FIELD_EVALUATION",
            Error::Parse(_) => "PARSE",
            Error::InvalidArgument(_) => "INVALID_ARGUMENT",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
