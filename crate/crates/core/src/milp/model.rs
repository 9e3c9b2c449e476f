use std::sync::atomic::{AtomicU32, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

static NEXT_MODEL_ID: AtomicU32 = AtomicU32::new(1);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MilpError {
    #[error("invalid bounds for `{name}`: [{lb}, {ub}]")]
    InvalidBounds { name: String, lb: f64, ub: f64 },
    #[error("constraint expression is empty")]
    EmptyExpression,
    #[error("non-finite coefficient or right-hand side")]
    NonFinite,
    #[error("variable id does not belong to this model")]
    UnknownVar,
    #[error("LP parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Opaque handle to a model variable. Only valid for the issuing model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId {
    model: u32,
    index: u32,
}

impl VarId {
    pub fn index(self) -> usize {
        self.index as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    /// Branching priority; higher is branched on first.
    pub priority: i32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }
}

/// Sparse affine expression `Σ c_j x_j + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(v: VarId) -> Self {
        Self { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn term(mut self, v: VarId, c: f64) -> Self {
        self.terms.push((v, c));
        self
    }

    pub fn plus_const(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn add_term(&mut self, v: VarId, c: f64) {
        self.terms.push((v, c));
    }

    pub fn add_expr(&mut self, other: &LinExpr, scale: f64) {
        self.terms.extend(other.terms.iter().map(|&(v, c)| (v, c * scale)));
        self.constant += other.constant * scale;
    }

    pub fn scaled(&self, k: f64) -> LinExpr {
        LinExpr { terms: self.terms.iter().map(|&(v, c)| (v, c * k)).collect(), constant: self.constant * k }
    }

    /// Merges duplicate variables and drops exact zeros, sorted by index.
    pub fn normalized(&self) -> LinExpr {
        let mut terms = self.terms.clone();
        terms.sort_by_key(|(v, _)| *v);
        let mut out: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
        for (v, c) in terms {
            match out.last_mut() {
                Some((lv, lc)) if *lv == v => *lc += c,
                _ => out.push((v, c)),
            }
        }
        out.retain(|(_, c)| *c != 0.0);
        LinExpr { terms: out, constant: self.constant }
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(v, c)| c * values[v.index()]).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    /// Amount by which `values` violates the constraint (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs: f64 = self.terms.iter().map(|(v, c)| c * values[v.index()]).sum();
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveSense {
    Minimize,
    /// Pure feasibility problem; the objective is identically zero.
    Feasibility,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConstraintId(pub usize);

/// Solver-neutral mixed-integer linear model.
#[derive(Clone, Debug)]
pub struct MilpModel {
    id: u32,
    pub name: String,
    vars: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Vec<(VarId, f64)>,
    objective_constant: f64,
    sense: ObjectiveSense,
}

impl Default for MilpModel {
    fn default() -> Self {
        Self::new("model")
    }
}

impl MilpModel {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            id: NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed),
            name: name.into(),
            vars: Vec::new(),
            constraints: Vec::new(),
            objective: Vec::new(),
            objective_constant: 0.0,
            sense: ObjectiveSense::Feasibility,
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lb: f64, ub: f64) -> Result<VarId, MilpError> {
        let name = name.into();
        let bad = lb.is_nan() || ub.is_nan() || lb > ub || lb == f64::INFINITY || ub == f64::NEG_INFINITY;
        if bad || (kind == VarKind::Binary && (lb != 0.0 || ub != 1.0)) {
            return Err(MilpError::InvalidBounds { name, lb, ub });
        }
        let id = VarId { model: self.id, index: self.vars.len() as u32 };
        self.vars.push(Variable { name, kind, lower: lb, upper: ub, priority: 0 });
        Ok(id)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, VarKind::Binary, 0.0, 1.0).expect("binary bounds are valid")
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lb: f64, ub: f64) -> Result<VarId, MilpError> {
        self.add_var(name, VarKind::Continuous, lb, ub)
    }

    fn check(&self, v: VarId) -> Result<(), MilpError> {
        if v.model != self.id || v.index() >= self.vars.len() {
            return Err(MilpError::UnknownVar);
        }
        Ok(())
    }

    /// Adds `expr (sense) rhs`; the expression's constant moves to the right.
    pub fn add_constraint(&mut self, expr: &LinExpr, sense: Sense, rhs: f64) -> Result<ConstraintId, MilpError> {
        self.add_named_constraint(format!("c{}", self.constraints.len()), expr, sense, rhs)
    }

    pub fn add_named_constraint(
        &mut self,
        name: impl Into<String>,
        expr: &LinExpr,
        sense: Sense,
        rhs: f64,
    ) -> Result<ConstraintId, MilpError> {
        if expr.terms.is_empty() {
            return Err(MilpError::EmptyExpression);
        }
        if !rhs.is_finite() || !expr.constant.is_finite() || expr.terms.iter().any(|(_, c)| !c.is_finite()) {
            return Err(MilpError::NonFinite);
        }
        for (v, _) in &expr.terms {
            self.check(*v)?;
        }
        let e = expr.normalized();
        let id = ConstraintId(self.constraints.len());
        self.constraints.push(Constraint { name: name.into(), terms: e.terms, sense, rhs: rhs - e.constant });
        Ok(id)
    }

    pub fn set_objective(&mut self, expr: &LinExpr) -> Result<(), MilpError> {
        for (v, c) in &expr.terms {
            self.check(*v)?;
            if !c.is_finite() {
                return Err(MilpError::NonFinite);
            }
        }
        let e = expr.normalized();
        self.objective = e.terms;
        self.objective_constant = e.constant;
        self.sense = ObjectiveSense::Minimize;
        Ok(())
    }

    pub fn set_feasibility(&mut self) {
        self.objective.clear();
        self.objective_constant = 0.0;
        self.sense = ObjectiveSense::Feasibility;
    }

    pub fn sense(&self) -> ObjectiveSense {
        self.sense
    }

    pub fn objective(&self) -> &[(VarId, f64)] {
        &self.objective
    }

    pub fn objective_constant(&self) -> f64 {
        self.objective_constant
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().map(|(v, c)| c * values[v.index()]).sum::<f64>()
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var(&self, v: VarId) -> &Variable {
        &self.vars[v.index()]
    }

    /// Handle for the `index`-th variable.
    pub fn var_id(&self, index: usize) -> VarId {
        assert!(index < self.vars.len());
        VarId { model: self.id, index: index as u32 }
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn binaries(&self) -> Vec<VarId> {
        (0..self.vars.len()).filter(|&i| self.vars[i].kind == VarKind::Binary).map(|i| self.var_id(i)).collect()
    }

    /// Tightens a variable's bounds (used to fix variables).
    pub fn set_bounds(&mut self, v: VarId, lb: f64, ub: f64) -> Result<(), MilpError> {
        self.check(v)?;
        let var = &mut self.vars[v.index()];
        if lb.is_nan() || ub.is_nan() || lb > ub {
            return Err(MilpError::InvalidBounds { name: var.name.clone(), lb, ub });
        }
        var.lower = lb;
        var.upper = ub;
        Ok(())
    }

    pub fn set_priority(&mut self, v: VarId, priority: i32) {
        self.vars[v.index()].priority = priority;
    }

    /// Turns an existing variable into a binary with bounds `[0, 1]`.
    pub fn set_binary(&mut self, v: VarId) {
        let var = &mut self.vars[v.index()];
        var.kind = VarKind::Binary;
        var.lower = 0.0;
        var.upper = 1.0;
    }

    /// Largest violation of any constraint, bound, or integrality requirement.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for c in &self.constraints {
            worst = worst.max(c.violation(values));
        }
        for (var, &x) in self.vars.iter().zip(values) {
            worst = worst.max(var.lower - x).max(x - var.upper);
            if var.kind == VarKind::Binary {
                worst = worst.max(x.min(1.0 - x).max(0.0));
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_var_contract() {
        let mut m = MilpModel::new("t");
        let z = m.add_var("z_0_0_1", VarKind::Binary, 0.0, 1.0).unwrap();
        let l = m.add_var("lam_n", VarKind::Continuous, 0.0, 100.0).unwrap();
        assert_ne!(z, l);
        assert_eq!(m.var(l).name, "lam_n");
        assert!(m.add_var("bad", VarKind::Continuous, 2.0, 1.0).is_err());
        assert!(m.add_var("bad", VarKind::Binary, 0.0, 2.0).is_err());
        assert!(m.add_var("bad", VarKind::Continuous, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn add_constraint_contract() {
        let mut m = MilpModel::new("t");
        let x = m.add_continuous("x", 0.0, 1.0).unwrap();
        let y = m.add_continuous("y", 0.0, 1.0).unwrap();
        let id = m.add_constraint(&LinExpr::var(x).term(y, 1.0), Sense::Eq, 1.0).unwrap();
        assert_eq!(id, ConstraintId(0));
        assert_eq!(m.add_constraint(&LinExpr::new(), Sense::Eq, 1.0), Err(MilpError::EmptyExpression));
        assert_eq!(m.add_constraint(&LinExpr::var(x).term(y, f64::NAN), Sense::Le, 1.0), Err(MilpError::NonFinite));
        let other = MilpModel::new("o").add_continuous("q", 0.0, 1.0).unwrap();
        let mut o = MilpModel::new("o2");
        o.add_continuous("q", 0.0, 1.0).unwrap();
        assert_eq!(m.add_constraint(&LinExpr::var(other), Sense::Le, 1.0), Err(MilpError::UnknownVar));
    }

    #[test]
    fn constant_moves_to_rhs_and_terms_merge() {
        let mut m = MilpModel::new("t");
        let x = m.add_continuous("x", 0.0, 1.0).unwrap();
        m.add_constraint(&LinExpr::var(x).term(x, 2.0).plus_const(1.0), Sense::Le, 4.0).unwrap();
        let c = &m.constraints()[0];
        assert_eq!(c.terms, vec![(x, 3.0)]);
        assert_eq!(c.rhs, 3.0);
    }
}
