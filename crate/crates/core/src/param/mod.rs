//! Close-case parameter learning: guess nets, program solves, subspace recovery.

pub mod learn;
pub mod lm;
pub mod net;
pub mod rounding;
pub mod subspace;

pub use learn::{close_case_learn, learn_from_guesses, parameter_error, permutations, Candidate, CandidateList, CloseCaseConfig};
pub use net::{enumerate_guesses, set_partitions, GuessNet};
pub use rounding::{reduce_to_separated, Rounding};
pub use subspace::{recover_covariances, recover_means, solve_covariances, solve_means, trace_off_subspace, Backend, SubspaceBundle};
