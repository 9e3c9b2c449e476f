//! Exhaustive binary enumeration over LP subproblems.
#![allow(dead_code)]

use hcto::milp::{LinExpr, MilpModel, Sense, VarId};
use microlp::{ComparisonOp, OptimizationDirection, Problem};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// LP optimum with every binary fixed, solved straight through microlp.
pub fn lp_with_fixed(model: &MilpModel, fixed: &[(usize, f64)]) -> Option<f64> {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mut obj = vec![0.0; model.vars().len()];
    for (v, c) in model.objective() {
        obj[v.index()] += c;
    }
    let vars: Vec<_> = model
        .vars()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let b = fixed.iter().find(|(j, _)| *j == i).map_or((v.lower, v.upper), |(_, x)| (*x, *x));
            lp.add_var(obj[i], b)
        })
        .collect();
    for c in model.constraints() {
        let terms: Vec<_> = c.terms.iter().map(|(v, a)| (vars[v.index()], *a)).collect();
        let op = match c.sense {
            Sense::Le => ComparisonOp::Le,
            Sense::Eq => ComparisonOp::Eq,
            Sense::Ge => ComparisonOp::Ge,
        };
        lp.add_constraint(terms.as_slice(), op, c.rhs);
    }
    lp.solve().ok().and_then(|o| o.into_solution().ok()).map(|s| s.objective() + model.objective_constant())
}

pub fn enumerate(model: &MilpModel) -> Option<f64> {
    let bins: Vec<usize> = model.binaries().iter().map(|b| b.index()).collect();
    let mut best: Option<f64> = None;
    for mask in 0u64..(1u64 << bins.len()) {
        let fixed: Vec<_> = bins.iter().enumerate().map(|(k, &i)| (i, ((mask >> k) & 1) as f64)).collect();
        if let Some(v) = lp_with_fixed(model, &fixed) {
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

pub fn random_model(rng: &mut ChaCha8Rng, n_bin: usize, n_cont: usize, n_cons: usize) -> MilpModel {
    let mut m = MilpModel::new("rand");
    let mut vars: Vec<VarId> = (0..n_bin).map(|i| m.add_binary(format!("b{i}"))).collect();
    for i in 0..n_cont {
        let lo = rng.gen_range(-3.0..0.0);
        let hi = rng.gen_range(0.5..4.0);
        vars.push(m.add_continuous(format!("x{i}"), lo, hi).unwrap());
    }
    for _ in 0..n_cons {
        let mut e = LinExpr::new();
        for &v in &vars {
            if rng.gen_bool(0.6) {
                e.add_term(v, rng.gen_range(-3i32..=3) as f64);
            }
        }
        if e.normalized().terms.is_empty() {
            e.add_term(vars[0], 1.0);
        }
        let sense = match rng.gen_range(0..5) {
            0 => Sense::Eq,
            1 | 2 => Sense::Le,
            _ => Sense::Ge,
        };
        let rhs = if sense == Sense::Eq { 0.0 } else { rng.gen_range(-2.0..3.0) };
        let _ = m.add_constraint(&e, sense, rhs);
    }
    let mut obj = LinExpr::new();
    for &v in &vars {
        obj.add_term(v, rng.gen_range(-5.0..5.0));
    }
    m.set_objective(&obj).unwrap();
    m
}
