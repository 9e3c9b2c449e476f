//! Smooth constrained optimization for the kinematic and quasi-static stages.

mod check;
mod problem;
mod solver;

pub use check::{check_gradients, GradientEntry, GradientReport};
pub use problem::{Block, BlockFn, NlpProblem};
pub use solver::{solve, solve_warm, NlpConfig, NlpResult, NlpStatus, WarmStart};
