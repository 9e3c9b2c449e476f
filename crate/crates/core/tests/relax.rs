#[path = "common/relax_grid.rs"]
mod relax_grid;

use hcto::milp::{solve, SolveConfig};
use hcto::relax::{envelope_gap, envelope_interval, Region};
use proptest::prelude::*;
use relax_grid::*;
#[test]
fn encoded_and_naive_sets_coincide_on_grid() {
    for c in [2, 4, 8] {
        let naive = build(Kind::Naive(c));
        let enc = build(Kind::Encoded(c));
        let (on, oe) = (lp_oracle(&naive), lp_oracle(&enc));
        for (x, y) in grid() {
            let a = attainable(&naive, &on, x, y).expect("naive feasible");
            let b = attainable(&enc, &oe, x, y).expect("encoded feasible");
            assert!((a.0 - b.0).abs() <= 1e-9 && (a.1 - b.1).abs() <= 1e-9, "C={c} ({x},{y}): {a:?} vs {b:?}");
            let o = oracle(c, x, y);
            assert!((a.0 - o.0).abs() <= 1e-9 && (a.1 - o.1).abs() <= 1e-9, "C={c} ({x},{y}): {a:?} vs oracle {o:?}");
        }
    }
}

#[test]
fn binary_counts() {
    for c in [2usize, 4, 8, 16] {
        let naive = build(Kind::Naive(c));
        let enc = build(Kind::Encoded(c));
        assert_eq!(naive.model.num_binaries(), c);
        assert_eq!(enc.model.num_binaries(), c.trailing_zeros() as usize);
    }
    assert_eq!(build(Kind::McCormick).model.num_binaries(), 0);
    // non-power-of-two counts round up
    assert_eq!(build(Kind::Encoded(5)).model.num_binaries(), 3);
}

#[test]
fn single_region_is_plain_mccormick() {
    let one = build(Kind::Naive(1));
    let plain = build(Kind::McCormick);
    let (o1, op) = (lp_oracle(&one), lp_oracle(&plain));
    for (x, y) in grid() {
        let a = attainable(&one, &o1, x, y).unwrap();
        let b = attainable(&plain, &op, x, y).unwrap();
        assert!((a.0 - b.0).abs() <= 1e-9 && (a.1 - b.1).abs() <= 1e-9);
    }
}

#[test]
fn finer_partitions_are_tighter() {
    let ms = [build(Kind::McCormick), build(Kind::Encoded(2)), build(Kind::Encoded(4))];
    let os: Vec<_> = ms.iter().map(lp_oracle).collect();
    for (x, y) in grid() {
        let i1 = attainable(&ms[0], &os[0], x, y).unwrap();
        let i2 = attainable(&ms[1], &os[1], x, y).unwrap();
        let i4 = attainable(&ms[2], &os[2], x, y).unwrap();
        assert!(i2.0 >= i1.0 - 1e-9 && i2.1 <= i1.1 + 1e-9, "({x},{y})");
        assert!(i4.0 >= i2.0 - 1e-9 && i4.1 <= i2.1 + 1e-9, "({x},{y})");
    }
}

#[test]
fn active_code_zeroes_its_slacks() {
    // With ν = (1, 0) only region 2 has η = 0; a one-bit mismatch gives η = 1.
    let mut b = build(Kind::Encoded(4));
    b.model.set_bounds(b.bins[0], 1.0, 1.0).unwrap();
    b.model.set_bounds(b.bins[1], 0.0, 0.0).unwrap();
    b.model.set_feasibility();
    let s = solve(&b.model, &SolveConfig::default());
    assert!(s.status.has_solution());
    let eta: Vec<f64> = (0..4)
        .map(|c| {
            let id = b.model.vars().iter().position(|v| v.name == format!("w_eta{c}")).unwrap();
            s.values[id]
        })
        .collect();
    assert!((eta[2]).abs() < 1e-9);
    assert!((eta[0] - 1.0).abs() < 1e-9 && (eta[3] - 1.0).abs() < 1e-9);
    assert!((eta[1] - 2.0).abs() < 1e-9);
    let x = s.value(b.term.x);
    assert!((0.5 - 1e-9..=1.0 + 1e-9).contains(&x));
}

proptest! {
    #[test]
    fn corners_are_exact(xl in -5.0..5.0f64, dx in 0.01..4.0f64, yl in -5.0..5.0f64, dy in 0.01..4.0f64,
                         cx in 0usize..2, cy in 0usize..2) {
        let r = Region { x: (xl, xl + dx), y: (yl, yl + dy) };
        let x = if cx == 0 { r.x.0 } else { r.x.1 };
        let y = if cy == 0 { r.y.0 } else { r.y.1 };
        let (lo, hi) = envelope_interval(x, y, &r);
        prop_assert!((lo - x * y).abs() <= 1e-9 && (hi - x * y).abs() <= 1e-9);
    }

    #[test]
    fn envelope_is_sound(xl in -5.0..5.0f64, dx in 0.01..4.0f64, yl in -5.0..5.0f64, dy in 0.01..4.0f64,
                         fx in 0.0..=1.0f64, fy in 0.0..=1.0f64, fw in 0.0..=1.0f64) {
        let r = Region { x: (xl, xl + dx), y: (yl, yl + dy) };
        let x = r.x.0 + fx * dx;
        let y = r.y.0 + fy * dy;
        let (lo, hi) = envelope_interval(x, y, &r);
        prop_assert!(lo <= x * y + 1e-9 && x * y <= hi + 1e-9);
        let w = lo + fw * (hi - lo);
        prop_assert!((w - x * y).abs() <= envelope_gap::<f64>(&r) + 1e-9);
    }
}
