//! Degree-bounded pseudoexpectations: constraint systems, the moment relaxation solved as
//! a block SDP, an independent validity checker, and builders for the two programs the
//! learner uses.

mod check;
mod pe;
mod programs;
mod solve;
mod system;

pub use check::{check_pseudoexpectation, CheckConfig, CheckReport};
pub use pe::{dirac, PseudoExpectation, Residuals, DEFAULT_MONOMIAL_CAP};
pub use programs::{
    build_clustering_program, build_means_program, build_parameter_program, default_hermite_count, local_scatter,
    valid_rows, validate_guess, ClusteringConfig, ClusteringMode, ClusteringProgram, GuessLimits, ParameterGuess,
    ParameterProgram, FULL_MODE_MAX_N,
};
pub use solve::{moment_index, solve, Objective, SolveOutcome, SolveReport, SolveSettings};
pub use system::{ConstraintSystem, PolyMatrix};
