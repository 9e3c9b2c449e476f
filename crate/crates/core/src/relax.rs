//! Linear relaxations of bilinear products `w = x·y`.
//!
//! Three flavours are provided: the plain McCormick envelope, a piecewise
//! envelope selected by one binary per region, and the logarithmic variant in
//! which regions are addressed by binary codewords. Implications are encoded
//! with big-M constants derived from the variable boxes.

use thiserror::Error;

use crate::milp::{ConstraintId, LinExpr, MilpError, MilpModel, Sense, VarId};
use crate::num::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelaxError {
    #[error("variable `{0}` is unbounded")]
    Unbounded(String),
    #[error("invalid partition: {0}")]
    Partition(String),
    #[error("duplicate codeword for regions {0} and {1}")]
    DuplicateCode(usize, usize),
    #[error("big-M constant is not finite")]
    NonFiniteM,
    #[error(transparent)]
    Milp(#[from] MilpError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BilinearTerm {
    pub w: VarId,
    pub x: VarId,
    pub y: VarId,
    pub x_bounds: (f64, f64),
    pub y_bounds: (f64, f64),
}

impl BilinearTerm {
    /// Adds `w` with the interval-product bounds of the current `x`, `y` boxes.
    pub fn new(model: &mut MilpModel, name: &str, x: VarId, y: VarId) -> Result<Self, RelaxError> {
        let xb = finite_bounds(model, x)?;
        let yb = finite_bounds(model, y)?;
        let (lo, hi) = product_range(xb, yb);
        let w = model.add_continuous(name, lo, hi)?;
        Ok(Self { w, x, y, x_bounds: xb, y_bounds: yb })
    }

    /// Uses an existing `w`.
    pub fn with_w(model: &MilpModel, w: VarId, x: VarId, y: VarId) -> Result<Self, RelaxError> {
        Ok(Self { w, x, y, x_bounds: finite_bounds(model, x)?, y_bounds: finite_bounds(model, y)? })
    }

    pub fn global_region(&self) -> Region {
        Region { x: self.x_bounds, y: self.y_bounds }
    }
}

fn finite_bounds(model: &MilpModel, v: VarId) -> Result<(f64, f64), RelaxError> {
    let var = model.var(v);
    if var.lower.is_finite() && var.upper.is_finite() {
        Ok((var.lower, var.upper))
    } else {
        Err(RelaxError::Unbounded(var.name.clone()))
    }
}

fn product_range(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let p = [a.0 * b.0, a.0 * b.1, a.1 * b.0, a.1 * b.1];
    (p.iter().copied().fold(f64::INFINITY, f64::min), p.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

/// Regions along one axis with their codewords. `codes[c][k]` is the `k`-th
/// bit of region `c`, most significant first.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionSpec {
    pub axis: Axis,
    pub regions: Vec<Region>,
    pub codes: Vec<Vec<u8>>,
}

fn bits_for(c: usize) -> usize {
    if c <= 1 {
        0
    } else {
        (usize::BITS - (c - 1).leading_zeros()) as usize
    }
}

fn plain_codes(c: usize) -> Vec<Vec<u8>> {
    let k = bits_for(c);
    (0..c).map(|i| (0..k).map(|b| ((i >> (k - 1 - b)) & 1) as u8).collect()).collect()
}

impl PartitionSpec {
    /// `count` equal-width regions of `axis`; the other axis keeps the global box.
    pub fn uniform(term: &BilinearTerm, axis: Axis, count: usize) -> Result<Self, RelaxError> {
        if count == 0 {
            return Err(RelaxError::Partition("region count must be positive".into()));
        }
        let (lo, hi) = match axis {
            Axis::X => term.x_bounds,
            Axis::Y => term.y_bounds,
        };
        if !(lo < hi) {
            return Err(RelaxError::Partition(format!("degenerate axis range [{lo}, {hi}]")));
        }
        let width = (hi - lo) / count as f64;
        let regions = (0..count)
            .map(|c| {
                let a = lo + width * c as f64;
                let b = if c + 1 == count { hi } else { lo + width * (c + 1) as f64 };
                match axis {
                    Axis::X => Region { x: (a, b), y: term.y_bounds },
                    Axis::Y => Region { x: term.x_bounds, y: (a, b) },
                }
            })
            .collect();
        Ok(Self { axis, regions, codes: plain_codes(count) })
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn bits(&self) -> usize {
        self.codes.first().map_or(0, Vec::len)
    }

    /// Splits the last region in half until the count is a power of two, then
    /// reassigns plain binary codes.
    pub fn padded(&self) -> Self {
        let mut regions = self.regions.clone();
        while !regions.len().is_power_of_two() {
            let last = regions.pop().expect("non-empty");
            let (a, b) = self.span(&last);
            let mid = 0.5 * (a + b);
            regions.push(self.with_span(&last, a, mid));
            regions.push(self.with_span(&last, mid, b));
        }
        let codes = plain_codes(regions.len());
        Self { axis: self.axis, regions, codes }
    }

    fn span(&self, r: &Region) -> (f64, f64) {
        match self.axis {
            Axis::X => r.x,
            Axis::Y => r.y,
        }
    }

    fn with_span(&self, r: &Region, a: f64, b: f64) -> Region {
        match self.axis {
            Axis::X => Region { x: (a, b), ..*r },
            Axis::Y => Region { y: (a, b), ..*r },
        }
    }

    pub fn validate(&self, term: &BilinearTerm) -> Result<(), RelaxError> {
        if self.regions.is_empty() || self.codes.len() != self.regions.len() {
            return Err(RelaxError::Partition("one codeword per region required".into()));
        }
        let k = self.bits();
        if self.codes.iter().any(|c| c.len() != k || c.iter().any(|&b| b > 1)) {
            return Err(RelaxError::Partition("codewords must be equal-length bit strings".into()));
        }
        for i in 0..self.codes.len() {
            for j in i + 1..self.codes.len() {
                if self.codes[i] == self.codes[j] {
                    return Err(RelaxError::DuplicateCode(i, j));
                }
            }
        }
        let (lo, hi) = match self.axis {
            Axis::X => term.x_bounds,
            Axis::Y => term.y_bounds,
        };
        let tol = 1e-12 * (1.0 + hi.abs().max(lo.abs()));
        let mut at = lo;
        for r in &self.regions {
            let (a, b) = self.span(r);
            if (a - at).abs() > tol || b < a {
                return Err(RelaxError::Partition(format!("regions do not tile [{lo}, {hi}]")));
            }
            at = b;
        }
        if (at - hi).abs() > tol {
            return Err(RelaxError::Partition(format!("regions do not tile [{lo}, {hi}]")));
        }
        Ok(())
    }
}

/// The four envelope inequalities as `g ≤ 0`.
pub fn envelope_rows(term: &BilinearTerm, r: &Region) -> [LinExpr; 4] {
    let (xl, xu) = r.x;
    let (yl, yu) = r.y;
    let (w, x, y) = (term.w, term.x, term.y);
    [
        // w ≥ xL·y + yL·x − xL·yL
        LinExpr::new().term(y, xl).term(x, yl).term(w, -1.0).plus_const(-xl * yl),
        // w ≥ xU·y + yU·x − xU·yU
        LinExpr::new().term(y, xu).term(x, yu).term(w, -1.0).plus_const(-xu * yu),
        // w ≤ xU·y + yL·x − xU·yL
        LinExpr::new().term(w, 1.0).term(y, -xu).term(x, -yl).plus_const(xu * yl),
        // w ≤ xL·y + yU·x − xL·yU
        LinExpr::new().term(w, 1.0).term(y, -xl).term(x, -yu).plus_const(xl * yu),
    ]
}

/// Box rows `x ∈ r.x`, `y ∈ r.y` as `g ≤ 0`, skipping sides already implied by
/// the variable bounds.
fn box_rows(model: &MilpModel, term: &BilinearTerm, r: &Region) -> Vec<LinExpr> {
    let mut rows = Vec::new();
    for (v, (lo, hi)) in [(term.x, r.x), (term.y, r.y)] {
        let var = model.var(v);
        if lo > var.lower {
            rows.push(LinExpr::new().term(v, -1.0).plus_const(lo));
        }
        if hi < var.upper {
            rows.push(LinExpr::var(v).plus_const(-hi));
        }
    }
    rows
}

/// Interval of `w` allowed by the envelope of `r` at fixed `(x, y)`.
pub fn envelope_interval<S: Real>(x: S, y: S, r: &Region) -> (S, S) {
    let [xl, xu, yl, yu] = [r.x.0, r.x.1, r.y.0, r.y.1].map(S::lit);
    let lo = (xl * y + yl * x - xl * yl).max(xu * y + yu * x - xu * yu);
    let hi = (xu * y + yl * x - xu * yl).min(xl * y + yu * x - xl * yu);
    (lo, hi)
}

/// Largest possible `|w − xy|` inside the envelope of `r`.
pub fn envelope_gap<S: Real>(r: &Region) -> S {
    S::lit((r.x.1 - r.x.0) * (r.y.1 - r.y.0)) / S::lit(4.0)
}

/// Adds the McCormick envelope of `term` over its global bounds.
pub fn mccormick(model: &mut MilpModel, term: &BilinearTerm) -> Result<[ConstraintId; 4], RelaxError> {
    check_term(model, term)?;
    let rows = envelope_rows(term, &term.global_region());
    let mut ids = [ConstraintId(0); 4];
    for (k, g) in rows.iter().enumerate() {
        ids[k] = model.add_constraint(g, Sense::Le, 0.0)?;
    }
    Ok(ids)
}

fn check_term(model: &MilpModel, term: &BilinearTerm) -> Result<(), RelaxError> {
    finite_bounds(model, term.x)?;
    finite_bounds(model, term.y)?;
    finite_bounds(model, term.w)?;
    Ok(())
}

/// Interval bound on `|expr|` over the variable boxes, times 1.05.
pub fn compute_big_m(expr: &LinExpr, model: &MilpModel) -> Result<f64, RelaxError> {
    let (mut lo, mut hi) = (expr.constant, expr.constant);
    for (v, c) in &expr.terms {
        let (a, b) = finite_bounds(model, *v)?;
        lo += (c * a).min(c * b);
        hi += (c * a).max(c * b);
    }
    Ok(1.05 * lo.abs().max(hi.abs()))
}

/// Which indicator value switches the implied row on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActiveWhen {
    One,
    Zero,
}

/// `{indicator = 1} ⟹ g ≤ 0` as `g ≤ M(1 − indicator)`, or
/// `{indicator = 0} ⟹ g ≤ 0` as `g ≤ M·indicator`.
pub fn implication(
    model: &mut MilpModel,
    indicator: &LinExpr,
    when: ActiveWhen,
    g: &LinExpr,
    m: f64,
) -> Result<ConstraintId, RelaxError> {
    if !m.is_finite() {
        return Err(RelaxError::NonFiniteM);
    }
    let mut row = g.clone();
    match when {
        ActiveWhen::One => {
            row.add_expr(indicator, m);
            row.constant -= m;
        }
        ActiveWhen::Zero => row.add_expr(indicator, -m),
    }
    Ok(model.add_constraint(&row, Sense::Le, 0.0)?)
}

/// Implication with M taken from `compute_big_m(g)`. Rows that already hold
/// everywhere on the box are skipped.
pub fn implication_auto(
    model: &mut MilpModel,
    indicator: &LinExpr,
    when: ActiveWhen,
    g: &LinExpr,
) -> Result<Option<ConstraintId>, RelaxError> {
    let g = g.normalized();
    if g.terms.is_empty() {
        return if g.constant <= 0.0 {
            Ok(None)
        } else {
            // constant violation: indicator must stay off
            let off = match when {
                ActiveWhen::One => model.add_constraint(indicator, Sense::Eq, 0.0)?,
                ActiveWhen::Zero => model.add_constraint(indicator, Sense::Ge, 1.0)?,
            };
            Ok(Some(off))
        };
    }
    let m = compute_big_m(&g, model)?;
    Ok(Some(implication(model, indicator, when, &g, m)?))
}

/// `{indicator} ⟹ g = 0` as two opposing rows.
pub fn implication_eq(
    model: &mut MilpModel,
    indicator: &LinExpr,
    when: ActiveWhen,
    g: &LinExpr,
) -> Result<Vec<ConstraintId>, RelaxError> {
    let mut ids = Vec::new();
    ids.extend(implication_auto(model, indicator, when, g)?);
    ids.extend(implication_auto(model, indicator, when, &g.scaled(-1.0))?);
    Ok(ids)
}

#[derive(Clone, Debug)]
pub struct NaiveRelaxation {
    pub eta: Vec<VarId>,
    pub constraints: Vec<ConstraintId>,
}

#[derive(Clone, Debug)]
pub struct EncodedRelaxation {
    pub nu: Vec<VarId>,
    /// `s[c][k]`
    pub s: Vec<Vec<VarId>>,
    pub eta: Vec<VarId>,
    pub constraints: Vec<ConstraintId>,
    pub spec: PartitionSpec,
}

/// Piecewise envelope with one binary per region.
pub fn piecewise_naive(
    model: &mut MilpModel,
    term: &BilinearTerm,
    spec: &PartitionSpec,
) -> Result<NaiveRelaxation, RelaxError> {
    piecewise_naive_shared(model, std::slice::from_ref(term), spec)
}

/// Piecewise envelope for several terms sharing the partitioned variable and
/// one set of region binaries. Region bounds of the free axis are taken from
/// each term.
pub fn piecewise_naive_shared(
    model: &mut MilpModel,
    terms: &[BilinearTerm],
    spec: &PartitionSpec,
) -> Result<NaiveRelaxation, RelaxError> {
    let first = shared_check(model, terms, spec)?;
    let eta: Vec<VarId> =
        (0..spec.len()).map(|c| model.add_binary(format!("{}_eta{c}", model.var(first.w).name))).collect();
    let mut constraints = Vec::new();
    let mut sum = LinExpr::new();
    for &e in &eta {
        sum.add_term(e, 1.0);
    }
    constraints.push(model.add_constraint(&sum, Sense::Eq, 1.0)?);
    for (c, r) in spec.regions.iter().enumerate() {
        let ind = LinExpr::var(eta[c]);
        for g in region_rows(model, terms, spec, r) {
            constraints.extend(implication_auto(model, &ind, ActiveWhen::One, &g)?);
        }
    }
    Ok(NaiveRelaxation { eta, constraints })
}

/// Logarithmic piecewise envelope: `⌈log₂ C⌉` binaries select the region.
pub fn binary_encoded(
    model: &mut MilpModel,
    term: &BilinearTerm,
    spec: &PartitionSpec,
) -> Result<EncodedRelaxation, RelaxError> {
    binary_encoded_shared(model, std::slice::from_ref(term), spec)
}

/// Logarithmic piecewise envelope for several terms sharing the partitioned
/// variable and the codeword binaries.
pub fn binary_encoded_shared(
    model: &mut MilpModel,
    terms: &[BilinearTerm],
    spec: &PartitionSpec,
) -> Result<EncodedRelaxation, RelaxError> {
    let first = shared_check(model, terms, spec)?;
    let spec = if spec.len().is_power_of_two() { spec.clone() } else { spec.padded() };
    let k_bits = spec.bits();
    let base = model.var(first.w).name.clone();
    let nu: Vec<VarId> = (0..k_bits).map(|k| model.add_binary(format!("{base}_nu{k}"))).collect();
    let mut constraints = Vec::new();
    let mut s = Vec::with_capacity(spec.len());
    let mut eta = Vec::with_capacity(spec.len());
    for (c, code) in spec.codes.iter().enumerate() {
        let e = model.add_continuous(format!("{base}_eta{c}"), 0.0, k_bits as f64)?;
        let mut sum = LinExpr::new().term(e, -1.0);
        let mut row = Vec::with_capacity(k_bits);
        for (k, &bit) in code.iter().enumerate() {
            let d = bit as f64;
            let sv = model.add_continuous(format!("{base}_s{c}_{k}"), 0.0, 1.0)?;
            // s ≥ ν − d and s ≥ d − ν
            constraints.push(model.add_constraint(&LinExpr::var(sv).term(nu[k], -1.0), Sense::Ge, -d)?);
            constraints.push(model.add_constraint(&LinExpr::var(sv).term(nu[k], 1.0), Sense::Ge, d)?);
            // s ≤ M(ν + d − 2νd), linear because d is a constant; M = 1 bounds s.
            let m = 1.0;
            let coef = m * (1.0 - 2.0 * d);
            constraints.push(model.add_constraint(&LinExpr::var(sv).term(nu[k], -coef), Sense::Le, m * d)?);
            sum.add_term(sv, 1.0);
            row.push(sv);
        }
        constraints.push(model.add_constraint(&sum, Sense::Eq, 0.0)?);
        s.push(row);
        eta.push(e);
    }
    for (c, r) in spec.regions.iter().enumerate() {
        let ind = LinExpr::var(eta[c]);
        for g in region_rows(model, terms, &spec, r) {
            constraints.extend(implication_auto(model, &ind, ActiveWhen::Zero, &g)?);
        }
    }
    Ok(EncodedRelaxation { nu, s, eta, constraints, spec })
}

fn shared_check<'a>(
    model: &MilpModel,
    terms: &'a [BilinearTerm],
    spec: &PartitionSpec,
) -> Result<&'a BilinearTerm, RelaxError> {
    let first = terms.first().ok_or_else(|| RelaxError::Partition("no terms".into()))?;
    for t in terms {
        check_term(model, t)?;
        let same = match spec.axis {
            Axis::X => t.x == first.x && t.x_bounds == first.x_bounds,
            Axis::Y => t.y == first.y && t.y_bounds == first.y_bounds,
        };
        if !same {
            return Err(RelaxError::Partition("terms must share the partitioned variable".into()));
        }
    }
    spec.validate(first)?;
    Ok(first)
}

fn region_rows(model: &MilpModel, terms: &[BilinearTerm], spec: &PartitionSpec, r: &Region) -> Vec<LinExpr> {
    let mut rows = Vec::new();
    for (j, t) in terms.iter().enumerate() {
        let local = match spec.axis {
            Axis::X => Region { x: r.x, y: t.y_bounds },
            Axis::Y => Region { x: t.x_bounds, y: r.y },
        };
        rows.extend(envelope_rows(t, &local));
        let b = box_rows(model, t, &local);
        // the partition box is shared; add it once
        if j == 0 {
            rows.extend(b);
        } else {
            let free = match spec.axis {
                Axis::X => t.y,
                Axis::Y => t.x,
            };
            rows.extend(b.into_iter().filter(|g| g.terms.iter().any(|(v, _)| *v == free)));
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn term(m: &mut MilpModel, xb: (f64, f64), yb: (f64, f64)) -> BilinearTerm {
        let x = m.add_continuous("x", xb.0, xb.1).unwrap();
        let y = m.add_continuous("y", yb.0, yb.1).unwrap();
        BilinearTerm::new(m, "w", x, y).unwrap()
    }

    #[test]
    fn envelope_examples() {
        let r = Region { x: (0.0, 2.0), y: (0.0, 3.0) };
        assert_eq!(envelope_interval(2.0, 3.0, &r), (6.0, 6.0));
        let r = Region { x: (-1.0, 1.0), y: (-1.0, 1.0) };
        assert_eq!(envelope_interval(0.0, 0.0, &r), (-1.0, 1.0));
        let r = Region { x: (0.0, 1.0), y: (0.0, 1.0) };
        for k in 0..=10 {
            let y = k as f64 / 10.0;
            assert_eq!(envelope_interval(0.0, y, &r), (0.0, 0.0));
        }
    }

    #[test]
    fn big_m_examples() {
        let mut m = MilpModel::new("m");
        let x = m.add_continuous("x", 0.0, 1.0).unwrap();
        let y = m.add_continuous("y", -1.0, 1.0).unwrap();
        let e = LinExpr::var(x).term(y, 2.0);
        assert!((compute_big_m(&e, &m).unwrap() - 3.15).abs() < 1e-12);
        assert!((compute_big_m(&LinExpr::constant(5.0), &m).unwrap() - 5.25).abs() < 1e-12);
        let free = m.add_continuous("f", f64::NEG_INFINITY, f64::INFINITY).unwrap();
        assert!(matches!(compute_big_m(&LinExpr::var(free), &m), Err(RelaxError::Unbounded(_))));
    }

    #[test]
    fn codes_follow_plain_binary() {
        let mut m = MilpModel::new("m");
        let t = term(&mut m, (0.0, 1.0), (0.0, 1.0));
        let spec = PartitionSpec::uniform(&t, Axis::X, 4).unwrap();
        assert_eq!(spec.codes, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert_eq!(spec.codes[2], vec![1, 0]);
    }

    #[test]
    fn padding_splits_last_region() {
        let mut m = MilpModel::new("m");
        let t = term(&mut m, (0.0, 3.0), (0.0, 1.0));
        let spec = PartitionSpec::uniform(&t, Axis::X, 3).unwrap().padded();
        let xs: Vec<_> = spec.regions.iter().map(|r| r.x).collect();
        assert_eq!(xs, vec![(0.0, 1.0), (1.0, 2.0), (2.0, 2.5), (2.5, 3.0)]);
        assert_eq!(spec.bits(), 2);
        spec.validate(&t).unwrap();
    }

    #[test]
    fn duplicate_codes_rejected() {
        let mut m = MilpModel::new("m");
        let t = term(&mut m, (0.0, 1.0), (0.0, 1.0));
        let mut spec = PartitionSpec::uniform(&t, Axis::X, 2).unwrap();
        spec.codes[1] = spec.codes[0].clone();
        assert_eq!(binary_encoded(&mut m, &t, &spec).unwrap_err(), RelaxError::DuplicateCode(0, 1));
    }

    #[test]
    fn implication_rows() {
        let mut m = MilpModel::new("m");
        let z = m.add_binary("z");
        let x = m.add_continuous("x", 0.0, 4.0).unwrap();
        // z = 1 ⟹ x ≤ 1
        let g = LinExpr::var(x).plus_const(-1.0);
        implication(&mut m, &LinExpr::var(z), ActiveWhen::One, &g, 3.0).unwrap();
        assert!(m.max_violation(&[1.0, 1.0]) <= 0.0);
        assert!(m.max_violation(&[1.0, 1.5]) > 0.0);
        assert!(m.max_violation(&[0.0, 4.0]) <= 0.0);
        assert_eq!(implication(&mut m, &LinExpr::var(z), ActiveWhen::One, &g, f64::NAN), Err(RelaxError::NonFiniteM));
        let ids = implication_eq(&mut m, &LinExpr::var(z), ActiveWhen::Zero, &g).unwrap();
        assert_eq!(ids.len(), 2);
    }
}
