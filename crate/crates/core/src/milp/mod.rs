//! Solver-neutral MILP representation, LP-format I/O and a reference
//! branch-and-bound backend.

mod bnb;
mod lp_format;
mod model;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use bnb::BranchAndBound;
pub use lp_format::{read_lp, write_lp};
pub use model::{
    Constraint, ConstraintId, LinExpr, MilpError, MilpModel, ObjectiveSense, Sense, VarId, VarKind, Variable,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MilpStatus {
    Optimal,
    Feasible,
    Infeasible,
    IterationLimit,
    TimeLimit,
    Unbounded,
    NumericalError,
}

impl MilpStatus {
    /// True when the solution carries a verified assignment.
    pub fn has_solution(self) -> bool {
        matches!(self, MilpStatus::Optimal | MilpStatus::Feasible)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveConfig {
    pub time_limit: Option<Duration>,
    pub node_limit: usize,
    pub tolerance: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { time_limit: None, node_limit: 1_000_000, tolerance: 1e-6 }
    }
}

#[derive(Clone, Debug)]
pub struct MilpSolution {
    pub status: MilpStatus,
    pub values: Vec<f64>,
    pub objective: f64,
    pub nodes: usize,
    pub elapsed: Duration,
}

impl MilpSolution {
    pub fn value(&self, v: VarId) -> f64 {
        self.values[v.index()]
    }
}

/// A MILP solver. Implementations must return values satisfying the model to
/// `config.tolerance` whenever the status has a solution.
pub trait MilpBackend {
    fn solve(&self, model: &MilpModel, config: &SolveConfig) -> MilpSolution;
}

/// Solves with the built-in branch-and-bound.
pub fn solve(model: &MilpModel, config: &SolveConfig) -> MilpSolution {
    BranchAndBound.solve(model, config)
}
