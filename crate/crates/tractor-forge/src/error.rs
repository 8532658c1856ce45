use thiserror::Error;

/// Errors shared by the geometry modules.
///
/// Expression-level failures (syntax, evaluation domain) are wrapped so callers
/// can surface the byte offset or the offending node without re-parsing.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("{0}")]
    Parse(#[from] crate::expr::ParseError),

    #[error("{0}")]
    Eval(#[from] crate::expr::EvalError),

    #[error("invalid chart: {0}")]
    InvalidChart(String),

    #[error("metric is not positive definite at {point:?}")]
    SingularMetric { point: Vec<f64> },

    #[error("Schouten tensor is undefined for n = {n} (requires n >= 3)")]
    SchoutenUndefined { n: usize },

    #[error("point {point:?} is closer than {min_dist} to the domain boundary on axis {axis}")]
    BoundaryTooClose {
        point: Vec<f64>,
        axis: usize,
        min_dist: f64,
    },

    #[error("point out of domain: {0}")]
    OutOfDomain(String),

    #[error("closed-form mixed connection is only available on the r = 0 slice (got r = {r})")]
    RequiresRZero { r: f64 },

    #[error("ambient metric matrix is singular at {point:?}")]
    SingularGram { point: Vec<f64> },

    #[error("family does not satisfy the normalization condition (residual {residual:.3e})")]
    RequiresNormalizedFamily { residual: f64 },

    #[error(
        "transport step-size refinement failed to converge (best disagreement {disagreement:.3e})"
    )]
    StepSizeUnderflow { disagreement: f64 },

    #[error("metric is not Einstein (residual {residual:.3e} exceeds tolerance {tolerance:.3e})")]
    NotEinstein { residual: f64, tolerance: f64 },

    #[error("invalid family: {0}")]
    InvalidFamily(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("invalid section: {0}")]
    InvalidSection(String),
}
