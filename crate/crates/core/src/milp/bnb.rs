//! Reference branch-and-bound backend.
//!
//! LP relaxations are solved by `microlp`'s bounded dual simplex. Branching
//! fixes one binary to 0 or 1 and re-solves warm from the parent's basis.
//! Node selection is best-bound first; ties (always the case for feasibility
//! models) go to the deepest node, and among siblings the child matching the
//! rounded LP value is explored first. The search is single-threaded and fully
//! deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::Instant;

use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, Variable};

use super::model::{MilpModel, ObjectiveSense, Sense, VarKind};
use super::{MilpBackend, MilpSolution, MilpStatus, SolveConfig};

#[derive(Debug, Default, Clone, Copy)]
pub struct BranchAndBound;

struct Node {
    parent: Rc<microlp::Solution>,
    fix: (usize, f64),
    depth: usize,
    bound: f64,
    seq: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap pops the greatest: lowest bound, then deepest, then newest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(self.seq.cmp(&other.seq))
    }
}

pub(crate) enum Lp {
    Solved(microlp::Solution),
    Infeasible,
    Unbounded,
    Failed,
}

fn classify(r: Result<microlp::SolveOutcome, microlp::Error>) -> Lp {
    match r {
        Ok(outcome) => match outcome.into_solution() {
            Ok(s) => Lp::Solved(s),
            Err(_) => Lp::Failed,
        },
        Err(microlp::Error::Infeasible) => Lp::Infeasible,
        Err(microlp::Error::Unbounded) => Lp::Unbounded,
        Err(_) => Lp::Failed,
    }
}

fn build_problem(model: &MilpModel) -> Result<(Problem, Vec<Variable>), MilpStatus> {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mut obj = vec![0.0; model.vars().len()];
    if model.sense() == ObjectiveSense::Minimize {
        for (v, c) in model.objective() {
            obj[v.index()] += c;
        }
    }
    let vars: Vec<Variable> =
        model.vars().iter().zip(&obj).map(|(v, &c)| lp.add_var(c, (v.lower, v.upper))).collect();
    for c in model.constraints() {
        if c.terms.is_empty() {
            let ok = match c.sense {
                Sense::Le => 0.0 <= c.rhs + 1e-9,
                Sense::Ge => 0.0 >= c.rhs - 1e-9,
                Sense::Eq => c.rhs.abs() <= 1e-9,
            };
            if !ok {
                return Err(MilpStatus::Infeasible);
            }
            continue;
        }
        let mut e = LinearExpr::empty();
        for (v, coef) in &c.terms {
            e.add(vars[v.index()], *coef);
        }
        let op = match c.sense {
            Sense::Le => ComparisonOp::Le,
            Sense::Eq => ComparisonOp::Eq,
            Sense::Ge => ComparisonOp::Ge,
        };
        lp.add_constraint(e, op, c.rhs);
    }
    Ok((lp, vars))
}

/// Warm re-solve with `var = val`. `fix_var` refuses a basic variable whose
/// row has no eligible entering column even when it already sits at `val`, so
/// that case falls back to an explicit equality row.
pub(crate) fn fix_var(sol: microlp::Solution, var: Variable, val: f64) -> Lp {
    if (sol.var_value_raw(var) - val).abs() > 1e-9 {
        return classify(sol.fix_var(var, val));
    }
    let backup = sol.clone();
    match classify(sol.fix_var(var, val)) {
        Lp::Infeasible => classify(backup.add_constraint([(var, 1.0)], ComparisonOp::Eq, val)),
        other => other,
    }
}

fn values_of(sol: &microlp::Solution, vars: &[Variable]) -> Vec<f64> {
    vars.iter().map(|v| sol.var_value_raw(*v)).collect()
}

impl BranchAndBound {
    /// Highest-priority fractional binary, most fractional among equals.
    fn select(model: &MilpModel, values: &[f64], tol: f64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, i32, f64)> = None;
        for (i, var) in model.vars().iter().enumerate() {
            if var.kind != VarKind::Binary {
                continue;
            }
            let x = values[i];
            let frac = x.min(1.0 - x);
            if frac <= tol {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, _, p, f)) => var.priority > p || (var.priority == p && frac > f),
            };
            if better {
                best = Some((i, x, var.priority, frac));
            }
        }
        best.map(|(i, x, _, _)| (i, x))
    }

    /// Rounds binaries and checks the point; falls back to re-solving with all
    /// binaries fixed when rounding alone breaks a constraint.
    fn polish(
        model: &MilpModel,
        sol: &microlp::Solution,
        vars: &[Variable],
        tol: f64,
    ) -> Option<Vec<f64>> {
        let mut values = values_of(sol, vars);
        let bins = model.binaries();
        for b in &bins {
            values[b.index()] = values[b.index()].round();
        }
        if model.max_violation(&values) <= tol {
            return Some(values);
        }
        let mut cur = sol.clone();
        for b in &bins {
            let target = values[b.index()];
            cur = match fix_var(cur, vars[b.index()], target) {
                Lp::Solved(s) => s,
                _ => return None,
            };
        }
        let mut values = values_of(&cur, vars);
        for b in &bins {
            values[b.index()] = values[b.index()].round();
        }
        (model.max_violation(&values) <= tol).then_some(values)
    }
}

impl MilpBackend for BranchAndBound {
    fn solve(&self, model: &MilpModel, config: &SolveConfig) -> MilpSolution {
        let start = Instant::now();
        let tol = config.tolerance;
        let n = model.vars().len();
        let fail = |status: MilpStatus, nodes: usize| MilpSolution {
            status,
            values: vec![f64::NAN; n],
            objective: f64::NAN,
            nodes,
            elapsed: start.elapsed(),
        };
        let (lp, vars) = match build_problem(model) {
            Ok(p) => p,
            Err(status) => return fail(status, 0),
        };
        let root = match classify(lp.solve()) {
            Lp::Solved(s) => s,
            Lp::Infeasible => return fail(MilpStatus::Infeasible, 1),
            Lp::Unbounded => return fail(MilpStatus::Unbounded, 1),
            Lp::Failed => return fail(MilpStatus::NumericalError, 1),
        };
        let feasibility = model.sense() == ObjectiveSense::Feasibility;
        let mut incumbent: Option<(Vec<f64>, f64)> = None;
        let mut nodes = 1usize;
        let mut seq = 0usize;
        let mut numerical_trouble = false;
        let mut heap = BinaryHeap::new();
        let mut pending = Some((root, 0usize));

        loop {
            if let Some((sol, depth)) = pending.take() {
                let bound = sol.objective() + model.objective_constant();
                let prune = incumbent.as_ref().is_some_and(|(_, best)| bound >= best - tol * (1.0 + best.abs()));
                if !prune {
                    let values = values_of(&sol, &vars);
                    match Self::select(model, &values, tol) {
                        None => {
                            if let Some(v) = Self::polish(model, &sol, &vars, tol) {
                                let obj = model.objective_value(&v);
                                if feasibility {
                                    return MilpSolution {
                                        status: MilpStatus::Optimal,
                                        values: v,
                                        objective: obj,
                                        nodes,
                                        elapsed: start.elapsed(),
                                    };
                                }
                                if incumbent.as_ref().map_or(true, |(_, best)| obj < *best) {
                                    incumbent = Some((v, obj));
                                }
                            } else {
                                numerical_trouble = true;
                            }
                        }
                        Some((idx, x)) => {
                            let parent = Rc::new(sol);
                            let preferred = x.round();
                            for val in [1.0 - preferred, preferred] {
                                seq += 1;
                                heap.push(Node { parent: Rc::clone(&parent), fix: (idx, val), depth: depth + 1, bound, seq });
                            }
                        }
                    }
                }
            }
            let Some(node) = heap.pop() else { break };
            if let Some((_, best)) = &incumbent {
                if node.bound >= best - tol * (1.0 + best.abs()) {
                    continue;
                }
            }
            if nodes >= config.node_limit {
                return self.limit(model, incumbent, MilpStatus::IterationLimit, nodes, start);
            }
            if config.time_limit.is_some_and(|lim| start.elapsed() >= lim) {
                return self.limit(model, incumbent, MilpStatus::TimeLimit, nodes, start);
            }
            nodes += 1;
            let parent = Rc::try_unwrap(node.parent).unwrap_or_else(|rc| (*rc).clone());
            match fix_var(parent, vars[node.fix.0], node.fix.1) {
                Lp::Solved(s) => pending = Some((s, node.depth)),
                Lp::Infeasible => {}
                Lp::Unbounded | Lp::Failed => numerical_trouble = true,
            }
        }
        match incumbent {
            Some((values, objective)) => {
                MilpSolution { status: MilpStatus::Optimal, values, objective, nodes, elapsed: start.elapsed() }
            }
            None if numerical_trouble => fail(MilpStatus::NumericalError, nodes),
            None => fail(MilpStatus::Infeasible, nodes),
        }
    }
}

impl BranchAndBound {
    fn limit(
        &self,
        model: &MilpModel,
        incumbent: Option<(Vec<f64>, f64)>,
        status: MilpStatus,
        nodes: usize,
        start: Instant,
    ) -> MilpSolution {
        match incumbent {
            Some((values, objective)) => {
                MilpSolution { status: MilpStatus::Feasible, values, objective, nodes, elapsed: start.elapsed() }
            }
            None => MilpSolution {
                status,
                values: vec![f64::NAN; model.vars().len()],
                objective: f64::NAN,
                nodes,
                elapsed: start.elapsed(),
            },
        }
    }
}
