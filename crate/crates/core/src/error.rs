use thiserror::Error;

/// Errors produced by the evaluation, geometry and integration layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("coordinate {coord} = {value} lies outside the domain interval ({lo}, {hi})")]
    Domain {
        coord: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("finite-difference step {step} at coordinate {coord} leaves the domain")]
    StepTooLarge { coord: usize, step: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("fiber Hessian is singular or ill-conditioned (condition estimate {condition:e})")]
    Regularity { condition: f64 },
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("metric is not positive definite at the probed point")]
    NotPositiveDefinite,
    #[error("constraint differential is rank deficient (smallest singular value {sigma_min:e})")]
    RankDeficient { sigma_min: f64 },
    #[error("point is off the constraint set (|c(x)| = {residual:e})")]
    OffConstraint { residual: f64 },
    #[error("velocity is not tangent to the constraint set (|dc·v| = {residual:e})")]
    NotTangent { residual: f64 },
    #[error("invalid transition: {0}")]
    InvalidTransition(String),
    #[error("integration exceeded {max_steps} steps")]
    StepLimit { max_steps: usize },
    #[error("integration produced a non-finite state at s = {s}")]
    NonFinite { s: f64 },
    #[error("integration left the domain at s = {s}: {source}")]
    DomainEscape { s: f64, source: Box<Error> },
    #[error("spray provenance mismatch: expected {expected}, found {found}")]
    Provenance { expected: String, found: String },
    #[error("trajectory has {len} samples, at least {needed} are required")]
    TrajectoryTooShort { len: usize, needed: usize },
    #[error("invalid integrator configuration: {0}")]
    Integrator(String),
    #[error("expression error: {0}")]
    Expr(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
