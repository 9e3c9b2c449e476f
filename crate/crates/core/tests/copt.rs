use std::collections::HashMap;

use hcto::copt::{
    add_no_good_cut, build_copt, check_schedule, contact_point, relax_pose_variables, rotate_linearized, solve_copt,
    term_gap, ContactSchedule, CoptError, CoptModel, Relaxation,
};
use hcto::kopt::{contact_maps, solve_kopt, KinematicsSolution};
use hcto::milp::{write_lp, Sense, SolveConfig};
use hcto::scenarios::{grasp_lift, resting_box, two_arm_pivot, BOX_H, BOX_MASS, BOX_W};
use hcto::scene::{Halfspace, WorkspaceGate};
use hcto::{Pose, Scenario, Vec2};
use proptest::prelude::*;

const TOL: f64 = 1e-6;

fn cfg() -> SolveConfig {
    SolveConfig::default()
}

fn static_kin(s: &Scenario) -> KinematicsSolution {
    let q = s.q_start.to_array();
    contact_maps(s, &vec![q; s.horizon + 1])
}

/// Schedule invariants that hold for any relaxation.
fn check_invariants(s: &Scenario, kin: &KinematicsSolution, sch: &ContactSchedule) {
    let rep = check_schedule(s, kin, sch);
    assert!(rep.passes(TOL), "{rep:?}");
    for t in 0..sch.z.len() {
        for i in 0..s.robots.len() {
            assert_eq!(sch.z[t][i].iter().filter(|b| **b).count(), 1);
            for p in 0..s.object.surfaces.len() {
                let [ln, ls] = sch.lambda[t][i][p];
                if !sch.z[t][i][p] {
                    assert!(ln.abs() <= TOL && ls.abs() <= TOL);
                }
                assert!(ls.abs() <= s.robots[i].mu * ln + TOL);
                if t + 1 < sch.z.len() && sch.z[t][i][p] != sch.z[t + 1][i][p] {
                    assert!(ln <= TOL && sch.lambda[t + 1][i][p][0] <= TOL);
                }
            }
            let p = sch.surface(t, i);
            let at = contact_point(s, &sch.poses[t], p, sch.alpha[t][i]);
            assert!((at - Vec2::new(sch.p_world[t][i][0], sch.p_world[t][i][1])).norm() <= TOL);
            if s.robots[i].gated(t, &kin.poses[t]) {
                assert!(sch.lambda[t][i].iter().all(|l| l[0].abs() <= TOL && l[1].abs() <= TOL));
            }
        }
    }
}

fn robot_force_vars(m: &CoptModel) -> Vec<hcto::milp::VarId> {
    let mut out = Vec::new();
    for t in 0..m.steps() {
        for i in 0..m.scenario.robots.len() {
            out.extend(m.index.lambda_n[t][i].iter().chain(&m.index.lambda_s[t][i]).copied());
        }
    }
    out
}

#[test]
fn rest_is_an_equilibrium() {
    let s = resting_box(3);
    let kin = solve_kopt(&s).unwrap();
    let mut m = build_copt(&s, &kin, Relaxation::BinaryEncoded(4)).unwrap();
    let sch = solve_copt(&m, &cfg()).unwrap();
    check_invariants(&s, &kin, &sch);
    // and the same with the robot forbidden to push
    for v in robot_force_vars(&m) {
        m.model.set_bounds(v, 0.0, 0.0).unwrap();
    }
    let sch = solve_copt(&m, &cfg()).unwrap();
    let mg = BOX_MASS * 9.81;
    for t in 0..=s.horizon {
        let normal: f64 = sch.f[t].iter().map(|f| f[1]).sum();
        assert!((normal - mg).abs() <= TOL, "t={t}: {normal}");
        assert!(sch.u[t][0].iter().all(|u| u.abs() <= TOL));
    }
}

/// A box held in the air at a tilt: with no horizontal surface, a single
/// finger needs friction to hold it.
fn floating_tilted(mu: f64) -> Scenario {
    let mut s = resting_box(2);
    s.env.halfspaces = vec![Halfspace::new(Vec2::new(0.0, 1.0), -1.0).unwrap()];
    s.robots[0].mu = mu;
    s.q_start = Pose::new(0.0, 0.0, 0.3);
    s.q_goal = s.q_start;
    s
}

#[test]
fn frictionless_finger_cannot_hold_a_tilted_box() {
    let s = floating_tilted(1.0);
    let kin = static_kin(&s);
    let sch = solve_copt(&build_copt(&s, &kin, Relaxation::McCormick).unwrap(), &cfg()).unwrap();
    check_invariants(&s, &kin, &sch);

    let s = floating_tilted(0.0);
    let kin = static_kin(&s);
    let r = solve_copt(&build_copt(&s, &kin, Relaxation::McCormick).unwrap(), &cfg());
    assert!(matches!(r, Err(CoptError::Infeasible(_))), "{r:?}");
}

/// Box balanced on its bottom-left corner with the center of mass `offset`
/// to the right of it; the robot is gated at every step.
fn on_corner(offset: f64, horizon: usize) -> Scenario {
    let mut s = resting_box(horizon);
    let corner = Vec2::new(-BOX_W / 2.0, -BOX_H / 2.0);
    let r = corner.norm();
    let phi = corner.y.atan2(corner.x);
    let a = (offset / r).asin();
    let theta = -std::f64::consts::FRAC_PI_2 - a - phi;
    let q = Pose::new(0.0, r * a.cos(), theta);
    s.q_start = q;
    s.q_goal = q;
    s.robots[0].workspace_gates.push(WorkspaceGate { coeffs: None, rhs: 0.0, steps: (0..=horizon).collect() });
    s
}

#[test]
fn corner_instance_touches_one_vertex() {
    let s = on_corner(0.01, 2);
    let kin = static_kin(&s);
    for t in 0..=2 {
        assert_eq!(kin.active(t), vec![0]);
        let e = s.object.vertices[0].rotated(kin.poses[t][2]) + Vec2::new(kin.poses[t][0], kin.poses[t][1]);
        assert!(e.y.abs() < 1e-12 && (kin.poses[t][0] - e.x - 0.01).abs() < 1e-12);
    }
}

#[test]
fn off_center_support_is_infeasible() {
    let s = on_corner(0.01, 2);
    let kin = static_kin(&s);
    let r = solve_copt(&build_copt(&s, &kin, Relaxation::McCormick).unwrap(), &cfg());
    assert!(matches!(r, Err(CoptError::Infeasible(_))), "{r:?}");
    // centered over the corner it balances
    let s = on_corner(0.0, 2);
    let kin = static_kin(&s);
    let sch = solve_copt(&build_copt(&s, &kin, Relaxation::McCormick).unwrap(), &cfg()).unwrap();
    check_invariants(&s, &kin, &sch);
}

#[test]
fn pose_relaxation_recovers_the_corner_instance() {
    let s = on_corner(0.01, 2);
    let kin = static_kin(&s);
    let m = build_copt(&s, &kin, Relaxation::McCormick).unwrap();
    let relaxed = relax_pose_variables(&m, [0.02, 0.02, 0.3]).unwrap();
    let sch = solve_copt(&relaxed, &cfg()).unwrap();
    for t in 0..=s.horizon {
        for c in 0..2 {
            assert!((sch.poses[t][c] - kin.poses[t][c]).abs() <= 0.02 + 1e-9);
        }
        assert!((sch.poses[t][2] - kin.poses[t][2]).abs() <= 0.3 + 1e-9);
    }
    // without room to move it stays infeasible
    let pinned = relax_pose_variables(&m, [0.0; 3]).unwrap();
    assert!(matches!(solve_copt(&pinned, &cfg()), Err(CoptError::Infeasible(_))));
}

fn values_by_name(m: &CoptModel, x: &[f64]) -> HashMap<String, f64> {
    m.model.vars().iter().zip(x).map(|(v, x)| (v.name.clone(), *x)).collect()
}

/// Carries a solution across models by variable name; names missing from
/// `from` default to zero.
fn transfer(from: &CoptModel, x: &[f64], to: &CoptModel) -> (Vec<f64>, usize) {
    let named = values_by_name(from, x);
    let mut missing = 0;
    let y = to
        .model
        .vars()
        .iter()
        .map(|v| {
            named.get(&v.name).copied().unwrap_or_else(|| {
                missing += 1;
                0.0
            })
        })
        .collect();
    (y, missing)
}

#[test]
fn zero_pose_box_keeps_the_feasible_set() {
    let s = two_arm_pivot(4);
    let kin = solve_kopt(&s).unwrap();
    let m = build_copt(&s, &kin, Relaxation::McCormick).unwrap();
    let r = relax_pose_variables(&m, [0.0; 3]).unwrap();
    assert!(r.model.vars().len() > m.model.vars().len());
    let a = hcto::milp::solve(&m.model, &cfg());
    let b = hcto::milp::solve(&r.model, &cfg());
    assert!(a.status.has_solution() && b.status.has_solution());
    // each solution, mapped by name, is feasible in the other model
    let (x, missing) = transfer(&m, &a.values, &r);
    assert!(missing > 0);
    assert!(r.model.max_violation(&x) <= TOL, "{}", r.model.max_violation(&x));
    let (y, missing) = transfer(&r, &b.values, &m);
    assert_eq!(missing, 0);
    assert!(m.model.max_violation(&y) <= TOL, "{}", m.model.max_violation(&y));
}

#[test]
fn two_arm_pivot_schedule_checks_out() {
    let s = two_arm_pivot(10);
    let kin = solve_kopt(&s).unwrap();
    let m = build_copt(&s, &kin, Relaxation::BinaryEncoded(8)).unwrap();
    let sch = solve_copt(&m, &cfg()).unwrap();
    check_invariants(&s, &kin, &sch);
    // a robot pushes on a side, the pivot vertex carries load
    let side_push = (0..=s.horizon).any(|t| (0..2).any(|i| [1, 3].iter().any(|&p| sch.lambda[t][i][p][0] > 1e-3)));
    assert!(side_push);
    assert!((0..=s.horizon).all(|t| kin.contact_map[0][t]));
    assert!(sch.f.iter().any(|f| f[0][1] > 0.1));
    // the second arm only pushes once the box is up
    for t in 0..=s.horizon {
        if kin.poses[t][1] <= 0.03 {
            assert!(sch.lambda[t][1].iter().all(|l| l[0] == 0.0));
        }
    }
}

#[test]
fn grasp_lift_moment_within_gap() {
    let s = grasp_lift(0.02, 5);
    let kin = solve_kopt(&s).unwrap();
    let lmax = 5.0 * BOX_MASS * 9.81;
    let mut worst = Vec::new();
    for rel in [Relaxation::McCormick, Relaxation::BinaryEncoded(4)] {
        let sch = solve_copt(&build_copt(&s, &kin, rel).unwrap(), &cfg()).unwrap();
        check_invariants(&s, &kin, &sch);
        let rep = check_schedule(&s, &kin, &sch);
        // two robots, each on one surface of length at most BOX_W
        let per_term = term_gap(rel, BOX_W, lmax);
        for (t, m) in rep.moment.iter().enumerate() {
            assert!(*m <= 2.0 * per_term + TOL, "{rel} t={t}: {m}");
        }
        worst.push(rep.moment.iter().fold(0.0, |a: f64, b| a.max(*b)));
    }
    assert!(worst[1] <= worst[0], "{worst:?}");
}

#[test]
fn gap_shrinks_with_regions() {
    let (a, l) = (0.07, 4.905);
    assert!((term_gap(Relaxation::McCormick, a, l) - a * l / 4.0).abs() < 1e-15);
    assert!((term_gap(Relaxation::BinaryEncoded(4), a, l) - a / 4.0 * l / 4.0).abs() < 1e-15);
    assert_eq!(term_gap(Relaxation::NaivePiecewise(8), a, l), term_gap(Relaxation::BinaryEncoded(8), a, l));
}

#[test]
fn no_good_cuts() {
    let s = two_arm_pivot(4);
    let kin = solve_kopt(&s).unwrap();
    let mut m = build_copt(&s, &kin, Relaxation::McCormick).unwrap();
    let first = solve_copt(&m, &cfg()).unwrap();

    // three entries: their sum may reach two at most
    let three: Vec<_> = first.active_set().into_iter().take(3).collect();
    let id = add_no_good_cut(&mut m, &three).unwrap();
    let c = &m.model.constraints()[id.0];
    assert_eq!(c.rhs, 2.0);
    assert_eq!(c.sense, Sense::Le);
    assert_eq!(c.terms.len(), 3);
    assert!(c.terms.iter().all(|(_, k)| *k == 1.0));
    let second = solve_copt(&m, &cfg()).unwrap();
    assert!(three.iter().any(|&(t, i, p)| !second.z[t][i][p]));
    check_invariants(&s, &kin, &second);

    // one entry: that assignment is gone
    let (t, i, p) = second.active_set()[5];
    add_no_good_cut(&mut m, &[(t, i, p)]).unwrap();
    let third = solve_copt(&m, &cfg()).unwrap();
    assert!(!third.z[t][i][p]);
    assert!(three.iter().any(|&(t, i, p)| !third.z[t][i][p]));

    assert!(matches!(add_no_good_cut(&mut m, &[]), Err(CoptError::EmptyCut)));
    assert!(matches!(add_no_good_cut(&mut m, &[(99, 0, 0)]), Err(CoptError::BadIndex(_))));
    // cuts carry over a rebuild
    let r = relax_pose_variables(&m, [0.0; 3]).unwrap();
    assert_eq!(r.cuts, m.cuts);
}

#[test]
fn full_cut_changes_the_schedule() {
    let s = two_arm_pivot(4);
    let kin = solve_kopt(&s).unwrap();
    let mut m = build_copt(&s, &kin, Relaxation::BinaryEncoded(4)).unwrap();
    let first = solve_copt(&m, &cfg()).unwrap();
    let active = first.active_set();
    add_no_good_cut(&mut m, &active).unwrap();
    let next = solve_copt(&m, &cfg()).unwrap();
    assert!(active.iter().any(|&(t, i, p)| !next.z[t][i][p]));
}

#[test]
fn horizon_mismatch_is_reported() {
    let s = resting_box(3);
    let kin = solve_kopt(&resting_box(2)).unwrap();
    assert!(matches!(build_copt(&s, &kin, Relaxation::McCormick), Err(CoptError::HorizonMismatch { .. })));
}

#[test]
fn schedule_json_round_trip() {
    let s = resting_box(2);
    let kin = solve_kopt(&s).unwrap();
    let sch = solve_copt(&build_copt(&s, &kin, Relaxation::NaivePiecewise(2)).unwrap(), &cfg()).unwrap();
    assert_eq!(ContactSchedule::from_json(&sch.to_json()).unwrap(), sch);
}

#[test]
fn lp_export_names_every_variable() {
    let s = resting_box(2);
    let kin = solve_kopt(&s).unwrap();
    let m = build_copt(&s, &kin, Relaxation::BinaryEncoded(2)).unwrap();
    let lp = write_lp(&m.model);
    assert!(lp.contains("Binaries"));
    for name in ["z_0_0_0", "alpha_1_0", "ln_0_0_2", "fx_1_0"] {
        assert!(lp.contains(name), "{name}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn linearized_rotation_error(vx in -1.0..1.0f64, vy in -1.0..1.0f64, th in -3.2..3.2f64, d in -0.3..0.3f64) {
        let v = Vec2::new(vx, vy);
        let err = (v.rotated(th + d) - rotate_linearized(v, th, d)).norm();
        prop_assert!(err <= v.norm() * d * d / 2.0 + 1e-15);
    }

    #[test]
    fn random_rest_poses_give_valid_schedules(x in -0.05..0.05f64, mu in 0.3..1.0f64, c in 1usize..4) {
        let mut s = resting_box(2);
        s.q_start = Pose::new(x, BOX_H / 2.0, 0.0);
        s.q_goal = s.q_start;
        s.robots[0].mu = mu;
        let kin = static_kin(&s);
        let rel = Relaxation::BinaryEncoded(1 << c);
        let sch = solve_copt(&build_copt(&s, &kin, rel).unwrap(), &cfg()).unwrap();
        check_invariants(&s, &kin, &sch);
    }
}
