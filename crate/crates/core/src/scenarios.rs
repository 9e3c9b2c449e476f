//! Built-in problem instances.
//!
//! All use the 0.07 m × 0.05 m box. The table, where present, is the
//! halfspace `y ≥ 0`.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scene::{Halfspace, PoseBounds, WorkspaceGate};
use crate::{EnvModel, ObjectModel, Pose, RobotSpec, Scenario, Vec2};

pub const BOX_W: f64 = 0.07;
pub const BOX_H: f64 = 0.05;
pub const BOX_MASS: f64 = 0.1;

fn table(offset: f64) -> EnvModel {
    EnvModel { halfspaces: vec![Halfspace::new(Vec2::new(0.0, 1.0), offset).unwrap()] }
}

fn boxed(mu_env: f64) -> ObjectModel {
    ObjectModel::rectangle(BOX_W, BOX_H, BOX_MASS, mu_env).unwrap()
}

fn base(name: &str, robots: Vec<RobotSpec>, env: EnvModel, start: Pose, goal: Pose, horizon: usize) -> Scenario {
    Scenario {
        name: name.into(),
        object: boxed(0.8),
        robots,
        env,
        q_start: start,
        q_goal: goal,
        horizon,
        step: 0.2,
        gravity: Vec2::new(0.0, -9.81),
        pose_bounds: PoseBounds::loose(),
    }
}

/// Box resting on the table with start = goal.
pub fn resting_box(horizon: usize) -> Scenario {
    let q = Pose::new(0.0, BOX_H / 2.0, 0.0);
    base("resting", vec![RobotSpec::new(0, 1.0, 0.5)], table(0.0), q, q, horizon)
}

/// Box translated along the table by `dx`.
pub fn sliding_box(dx: f64, horizon: usize) -> Scenario {
    let a = Pose::new(0.0, BOX_H / 2.0, 0.0);
    let b = Pose::new(dx, BOX_H / 2.0, 0.0);
    base("sliding", vec![RobotSpec::new(0, 1.0, 0.5)], table(0.0), a, b, horizon)
}

/// Quarter turn about the bottom-left vertex, ending on the box's left side.
pub fn pivot(horizon: usize) -> Scenario {
    let a = Pose::new(0.0, BOX_H / 2.0, 0.0);
    let b = Pose::new(-BOX_W / 2.0 - BOX_H / 2.0, BOX_W / 2.0, FRAC_PI_2);
    let mut s = base("pivot", vec![RobotSpec::new(0, 1.0, 0.5)], table(0.0), a, b, horizon);
    s.pose_bounds.pin_goal = true;
    s
}

/// Pivot with two arms; the second may only touch once the box center is
/// above `gate_height`.
pub fn two_arm_pivot(horizon: usize) -> Scenario {
    let mut s = pivot(horizon);
    s.name = "two-arm-pivot".into();
    let mut second = RobotSpec::new(1, 1.0, 0.5);
    second.workspace_gates.push(WorkspaceGate { coeffs: Some([0.0, -1.0, 0.0]), rhs: -0.03, steps: vec![] });
    s.robots.push(second);
    s
}

/// Two arms lift the box off the table by `lift`.
pub fn grasp_lift(lift: f64, horizon: usize) -> Scenario {
    let a = Pose::new(0.0, BOX_H / 2.0, 0.0);
    let b = Pose::new(0.0, BOX_H / 2.0 + lift, 0.0);
    let robots = vec![RobotSpec::new(0, 0.8, 0.5), RobotSpec::new(1, 0.8, 0.5)];
    let mut s = base("grasp-lift", robots, table(0.0), a, b, horizon);
    s.pose_bounds.pin_goal = true;
    s
}

/// Ranges for randomized instances. Angles in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRanges {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Default for SampleRanges {
    fn default() -> Self {
        Self { x: 0.05, y: 0.05, theta: FRAC_PI_2 }
    }
}

/// Bimanual reorientation in free space with start and goal drawn uniformly
/// from the ranges. A distant table keeps the environment nonempty but is
/// out of reach of every sampled pose.
pub fn sample_bimanual<R: Rng>(rng: &mut R, ranges: &SampleRanges, horizon: usize, step: f64) -> Scenario {
    sample_bimanual_sized(rng, ranges, [BOX_W, BOX_H], horizon, step)
}

/// `sample_bimanual` with a `[width, height]` box in meters.
pub fn sample_bimanual_sized<R: Rng>(
    rng: &mut R,
    ranges: &SampleRanges,
    size: [f64; 2],
    horizon: usize,
    step: f64,
) -> Scenario {
    let mut draw = || {
        Pose::new(
            rng.gen_range(-ranges.x..=ranges.x),
            rng.gen_range(-ranges.y..=ranges.y),
            rng.gen_range(-ranges.theta..=ranges.theta),
        )
    };
    let (a, b) = (draw(), draw());
    let robots = vec![RobotSpec::new(0, 0.8, 0.5), RobotSpec::new(1, 0.8, 0.5)];
    let object = ObjectModel::rectangle(size[0], size[1], BOX_MASS, 0.8).expect("positive box size");
    let floor = -(ranges.y + object.radius()) - 0.01;
    let mut s = base("bimanual", robots, table(floor), a, b, horizon);
    s.object = object;
    s.step = step;
    s.pose_bounds.pin_goal = true;
    s
}

/// Instance by name, for the command line.
pub fn by_name(name: &str, horizon: usize) -> Option<Scenario> {
    Some(match name {
        "resting" => resting_box(horizon),
        "sliding" => sliding_box(0.05, horizon),
        "pivot" => pivot(horizon),
        "two-arm-pivot" => two_arm_pivot(horizon),
        "grasp-lift" => grasp_lift(0.02, horizon),
        _ => return None,
    })
}

pub const NAMES: [&str; 5] = ["resting", "sliding", "pivot", "two-arm-pivot", "grasp-lift"];
