//! Generating-function calculus: truncated series, first-order differential
//! operators and exact checks of the elimination identities.

mod equivalence;
mod identities;
mod schedule;
mod series;

pub use equivalence::{mixture_equivalence_diagnostic, Equivalence};
pub use identities::{
    arrange_general, expected_constant, identity_decomposition_check, null_operator_residual, random_instance,
    random_sigma, verify_elimination, verify_null_operator, DecompositionReport, EliminationReport, InstanceSpec,
};
pub use schedule::{build_schedule, final_exponent, ApplyTo, EliminationCase, OpSide, OperatorSchedule, ScheduleStep};
pub use series::{apply_operator, apply_operator_exp, predict_leading, DiffOperator, ExpComponentSeries, FormalSeries};
