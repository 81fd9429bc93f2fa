use thiserror::Error;

/// Errors raised by tree construction, generators, and the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("tree with d*N = {requested} exceeds the size limit {limit}")]
    SizeLimit { requested: usize, limit: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("level mismatch: expected {expected} values, got {got}")]
    LevelMismatch { expected: usize, got: usize },

    #[error("processes live on different trees")]
    TreeMismatch,

    #[error("regularization parameter {kappa} must exceed {bound}")]
    RegularizationParameterTooSmall { kappa: f64, bound: f64 },

    #[error("fixed-point iteration did not converge at level {level}, node {node} (residual {residual:e})")]
    FixedPointDivergence {
        level: usize,
        node: usize,
        residual: f64,
    },

    #[error("non-finite value at level {level}, node {node}")]
    NonFiniteValue { level: usize, node: usize },

    #[error("terminal value {xi} below barrier {barrier} at leaf {leaf}")]
    BarrierViolation { leaf: usize, xi: f64, barrier: f64 },

    #[error("dominator below barrier at level {level}, node {node}")]
    DominationFailure { level: usize, node: usize },

    #[error("data ordering violated: {0}")]
    DataOrderingViolation(String),

    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),

    #[error("hypothesis not satisfied: {0}")]
    HypothesisNotSatisfied(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
