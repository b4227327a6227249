use thiserror::Error;

use crate::momdp::ValidationReport;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeError {
    #[error("dimensions must be positive (states={states}, actions={actions}, objectives={objectives})")]
    EmptyDimension { states: usize, actions: usize, objectives: usize },
    #[error("`{field}{path}` has length {found}, expected {expected}")]
    Tensor { field: &'static str, path: String, expected: usize, found: usize },
    #[error("flat `{field}` buffer has length {found}, expected {expected}")]
    Flat { field: &'static str, expected: usize, found: usize },
    #[error("{what} mismatch: expected {expected}, found {found}")]
    Mismatch { what: &'static str, expected: usize, found: usize },
}

#[derive(Debug, Error)]
pub enum MomdpError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("shape error: {0}")]
    Shape(#[from] ShapeError),
    #[error("invalid instance:\n{0}")]
    Invalid(ValidationReport),
    #[error("action {action} at state {state} is out of range (num_actions={num_actions})")]
    InvalidAction { state: usize, action: usize, num_actions: usize },
}

#[derive(Debug, Error)]
pub enum PreferenceError {
    #[error("number of objectives must be positive")]
    ZeroObjectives,
    #[error("grid resolution must be positive")]
    ZeroResolution,
    #[error("preference set is empty")]
    Empty,
    #[error("preference {index} has length {found}, expected {expected}")]
    Dimension { index: usize, expected: usize, found: usize },
    #[error("preference {index} is not finite")]
    NonFinite { index: usize },
    #[error("preference {index} has l1 norm {norm} > 1")]
    NormTooLarge { index: usize, norm: f64 },
    #[error("preference {index} duplicates preference {first}")]
    Duplicate { index: usize, first: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("state-action pair (s={s},a={a}) is out of range")]
    InvalidPair { s: usize, a: usize },
    #[error("generative model returned invalid state {state} for (s={s},a={a})")]
    InvalidState { s: usize, a: usize, state: usize },
    #[error("samples per pair must be at least 1")]
    ZeroSamples,
    #[error("generative model has {found} states, instance has {expected}")]
    StateCount { expected: usize, found: usize },
    #[error("simulator failure: {0}")]
    Simulator(String),
}

#[derive(Debug, Error)]
pub enum EnvelopeError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange { what: &'static str, index: usize, len: usize },
    #[error("non-finite value produced at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("schedule must have N >= 1 and T >= 1")]
    EmptySchedule,
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Momdp(#[from] MomdpError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("epsilon must lie in (0,1), got {0}")]
    Epsilon(f64),
    #[error("delta must lie in (0,1), got {0}")]
    Delta(f64),
    #[error("gamma must lie in [0,1), got {0}")]
    Gamma(f64),
    #[error("m, S and A must be positive")]
    Dimension,
    #[error("sample count {0} does not fit in u64")]
    Overflow(f64),
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("policy enumeration needs {needed} policies, cap is {cap}")]
    CapExceeded { needed: f64, cap: u64 },
    #[error("linear solve failed for objective {objective}")]
    Singular { objective: usize },
    #[error("start state {state} out of range")]
    StartState { state: usize },
    #[error("preference has length {found}, expected {expected}")]
    PreferenceLength { expected: usize, found: usize },
    #[error(transparent)]
    Momdp(#[from] MomdpError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}
