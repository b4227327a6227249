//! Tabular multi-objective reinforcement learning by envelope value
//! iteration, with a known model or from a generative model, plus the
//! brute-force oracles and experiments used to check it.

pub mod envelope;
pub mod error;
pub mod experiment;
pub mod generate;
pub mod momdp;
pub mod moq;
pub mod oracles;
pub mod preference;
pub mod sampling;
pub mod schedule;

pub use envelope::{
    apply_operator, apply_operator_parallel, envelope_value_iteration, exact_evi, fixed_step_evi, initial_moq,
    model_based_evi, moq_distance, optimality_filter, FilterResult, IterationTrace, StopRule, TraceRow,
};
pub use error::{EnvelopeError, MomdpError, OracleError, PreferenceError, SamplingError, ScheduleError, ShapeError};
pub use momdp::{load_momdp, validate_momdp, DeterministicPolicy, MomdpData, TabularMomdp, Transitions, ValidationReport};
pub use moq::{MoqShape, MoqTable};
pub use oracles::{assemble_reference_moq, enumerate_ccs, evaluate_policy, scalar_value_iteration, FrontierResult};
pub use preference::{make_simplex_grid, PreferenceSet};
pub use sampling::{build_empirical_model, sample_next_state, EmpiricalModel, GenerativeModel, SampleStream, TabularSimulator};
pub use schedule::{compute_schedule, EviSchedule};
