//! Brute-force attainable sets of bilinear relaxations on a grid.
#![allow(dead_code)]

use hcto::milp::{MilpModel, Sense, VarId};
use microlp::{ComparisonOp, OptimizationDirection, Problem};
use hcto::relax::{
    binary_encoded, envelope_interval, mccormick, piecewise_naive, Axis, BilinearTerm,
    PartitionSpec, Region,
};

pub const XB: (f64, f64) = (-0.5, 1.5);
pub const YB: (f64, f64) = (-1.0, 3.0);

#[derive(Clone, Copy)]
pub enum Kind {
    McCormick,
    Naive(usize),
    Encoded(usize),
}

pub struct Built {
    pub model: MilpModel,
    pub term: BilinearTerm,
    pub bins: Vec<VarId>,
}

pub fn build(kind: Kind) -> Built {
    let mut model = MilpModel::new("relax");
    let x = model.add_continuous("x", XB.0, XB.1).unwrap();
    let y = model.add_continuous("y", YB.0, YB.1).unwrap();
    let term = BilinearTerm::new(&mut model, "w", x, y).unwrap();
    let bins = match kind {
        Kind::McCormick => {
            mccormick(&mut model, &term).unwrap();
            vec![]
        }
        Kind::Naive(c) => {
            let spec = PartitionSpec::uniform(&term, Axis::X, c).unwrap();
            piecewise_naive(&mut model, &term, &spec).unwrap().eta
        }
        Kind::Encoded(c) => {
            let spec = PartitionSpec::uniform(&term, Axis::X, c).unwrap();
            binary_encoded(&mut model, &term, &spec).unwrap().nu
        }
    };
    Built { model, term, bins }
}

/// LP relaxation of a built model. Every binary assignment is fixed once at
/// the root, for both objective signs; infeasible assignments drop out here.
pub struct Oracle {
    pub vars: Vec<microlp::Variable>,
    pub fixed: Vec<[microlp::Solution; 2]>,
}

pub fn lp_oracle(b: &Built) -> Oracle {
    let m = &b.model;
    let root = |sign: f64| {
        let mut lp = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<_> = m
            .vars()
            .iter()
            .enumerate()
            .map(|(i, v)| lp.add_var(if i == b.term.w.index() { sign } else { 0.0 }, (v.lower, v.upper)))
            .collect();
        for c in m.constraints() {
            let terms: Vec<_> = c.terms.iter().map(|(v, a)| (vars[v.index()], *a)).collect();
            let op = match c.sense {
                Sense::Le => ComparisonOp::Le,
                Sense::Eq => ComparisonOp::Eq,
                Sense::Ge => ComparisonOp::Ge,
            };
            lp.add_constraint(terms.as_slice(), op, c.rhs);
        }
        (lp.solve().unwrap().into_solution().unwrap(), vars)
    };
    let (lo, vars) = root(1.0);
    let (hi, _) = root(-1.0);
    let mut fixed = Vec::new();
    for mask in 0u32..(1 << b.bins.len()) {
        let pin = |sol: &microlp::Solution| {
            let mut cur = Some(sol.clone());
            for (k, &v) in b.bins.iter().enumerate() {
                cur = cur.and_then(|s| fix(s, vars[v.index()], ((mask >> k) & 1) as f64));
            }
            cur
        };
        if let (Some(a), Some(c)) = (pin(&lo), pin(&hi)) {
            fixed.push([a, c]);
        }
    }
    Oracle { vars, fixed }
}

pub fn fix(sol: microlp::Solution, v: microlp::Variable, val: f64) -> Option<microlp::Solution> {
    // fix_var can refuse a degenerate basic variable already at `val`
    if (sol.var_value_raw(v) - val).abs() <= 1e-9 {
        return sol.add_constraint([(v, 1.0)], ComparisonOp::Eq, val).ok()?.into_solution().ok();
    }
    sol.fix_var(v, val).ok()?.into_solution().ok()
}

/// Attainable `w` at fixed `(x, y)` over every binary assignment.
pub fn attainable(b: &Built, o: &Oracle, x: f64, y: f64) -> Option<(f64, f64)> {
    let idx = |v: VarId| o.vars[v.index()];
    let mut ends = [f64::INFINITY, f64::NEG_INFINITY];
    let mut any = false;
    for pair in &o.fixed {
        for (slot, sol) in pair.iter().enumerate() {
            let at = fix(sol.clone(), idx(b.term.x), x).and_then(|s| fix(s, idx(b.term.y), y));
            if let Some(s) = at {
                let w = s.var_value_raw(idx(b.term.w));
                any = true;
                ends[slot] = if slot == 0 { ends[0].min(w) } else { ends[1].max(w) };
            }
        }
    }
    any.then_some((ends[0], ends[1]))
}

/// Closed-form union of the envelopes of every region containing `x`.
pub fn oracle(c: usize, x: f64, y: f64) -> (f64, f64) {
    let width = (XB.1 - XB.0) / c as f64;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..c {
        let r = Region { x: (XB.0 + width * k as f64, XB.0 + width * (k + 1) as f64), y: YB };
        if x >= r.x.0 - 1e-12 && x <= r.x.1 + 1e-12 {
            let (a, b) = envelope_interval(x, y, &r);
            lo = lo.min(a);
            hi = hi.max(b);
        }
    }
    (lo, hi)
}

pub fn grid() -> Vec<(f64, f64)> {
    let mut pts = Vec::new();
    for i in 0..=20 {
        for j in 0..=20 {
            pts.push((XB.0 + (XB.1 - XB.0) * i as f64 / 20.0, YB.0 + (YB.1 - YB.0) * j as f64 / 20.0));
        }
    }
    pts
}

