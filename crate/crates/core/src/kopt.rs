//! Kinematic trajectory optimization for the object pose.
//!
//! Decision vector, per step `t = 0..=T`: `[x, y, θ, ẋ, ẏ, θ̇]`. The pose
//! tracks the straight-line reference under collision constraints; the contact
//! and slip maps are read off the result afterwards.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nlp::{self, Block, NlpConfig, NlpProblem, NlpResult, NlpStatus};
use crate::scene::SceneError;
use crate::{Pose, Scenario, Vec2};

pub const Q_KIN: [f64; 3] = [1.0, 1.0, 0.3];
pub const CONTACT_TOL: f64 = 1e-4;
pub const SLIP_TOL: f64 = 1e-4;

const NV: usize = 6;

#[derive(Debug, Error)]
pub enum KoptError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("kinematic NLP did not converge: {}", .0.message)]
    NotConverged(Box<NlpResult>),
}

/// Object pose trajectory with the extrinsic contact and slip maps.
///
/// Maps are indexed `[vertex][step]`. Angles are unwrapped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KinematicsSolution {
    pub poses: Vec<[f64; 3]>,
    pub rates: Vec<[f64; 3]>,
    pub contact_map: Vec<Vec<bool>>,
    pub slip_map: Vec<Vec<bool>>,
    /// Halfspace touched by each contact, `None` where `A` is false.
    pub contact_halfspace: Vec<Vec<Option<usize>>>,
    /// Signed tangential vertex speed along the touched halfspace tangent.
    pub slip_velocity: Vec<Vec<f64>>,
}

impl KinematicsSolution {
    pub fn steps(&self) -> usize {
        self.poses.len()
    }

    pub fn pose(&self, t: usize) -> Pose {
        let q = self.poses[t];
        Pose::new(q[0], q[1], q[2])
    }

    /// Vertices in contact at step `t`.
    pub fn active(&self, t: usize) -> Vec<usize> {
        (0..self.contact_map.len()).filter(|&v| self.contact_map[v][t]).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

pub fn pose_index(t: usize) -> usize {
    NV * t
}

pub fn rate_index(t: usize) -> usize {
    NV * t + 3
}

pub fn build_kopt(scenario: &Scenario) -> NlpProblem {
    let steps = scenario.horizon + 1;
    let h = scenario.step;
    let b = &scenario.pose_bounds;
    let mut p = NlpProblem::new(NV * steps);

    for t in 0..steps {
        let r = scenario.reference(t);
        let (qi, ri) = (pose_index(t), rate_index(t));
        for k in 0..3 {
            p.set_bounds(qi + k, b.lower[k], b.upper[k]);
            // the last rate drives nothing
            if t + 1 < steps {
                p.set_bounds(ri + k, b.rate_lower[k], b.rate_upper[k]);
            } else {
                p.set_bounds(ri + k, 0.0, 0.0);
            }
            p.x0[qi + k] = r[k];
        }
        if t + 1 < steps {
            let next = scenario.reference(t + 1);
            for k in 0..3 {
                p.x0[ri + k] = ((next[k] - r[k]) / h).clamp(b.rate_lower[k], b.rate_upper[k]);
            }
        }
        p.add_objective(tracking_block(t, r));
    }
    let pin = |p: &mut NlpProblem, t: usize, q: [f64; 3]| {
        for k in 0..3 {
            p.set_bounds(pose_index(t) + k, q[k], q[k]);
            p.x0[pose_index(t) + k] = q[k];
        }
    };
    if b.pin_start {
        pin(&mut p, 0, scenario.reference(0));
    }
    if b.pin_goal {
        pin(&mut p, scenario.horizon, scenario.reference(scenario.horizon));
    }

    for t in 0..scenario.horizon {
        let (q0, q1, r0) = (pose_index(t), pose_index(t + 1), rate_index(t));
        let vars = vec![q0, q0 + 1, q0 + 2, q1, q1 + 1, q1 + 2, r0, r0 + 1, r0 + 2];
        let rows = (0..3)
            .map(|k| {
                let mut a = vec![0.0; 9];
                a[k] = -1.0;
                a[3 + k] = 1.0;
                a[6 + k] = -h;
                (a, 0.0)
            })
            .collect();
        p.add_eq(Block::affine(format!("dynamics[{t}]"), vars, rows));
    }

    for t in 0..steps {
        let qi = pose_index(t);
        for (v, &body) in scenario.object.vertices.iter().enumerate() {
            for hs in &scenario.env.halfspaces {
                let (n, d) = (hs.normal, hs.offset);
                p.add_ineq(
                    Block::new(format!("sdf[{t}][{v}]"), vec![qi, qi + 1, qi + 2], 1, move |x, o| {
                        let w = body.rotated(x[2]) + Vec2::new(x[0], x[1]);
                        o[0] = n.dot(w) - d;
                    })
                    .with_jacobian(move |x, j| {
                        j[0] = n.x;
                        j[1] = n.y;
                        j[2] = n.dot(body.rotated_deriv(x[2]));
                    }),
                );
            }
        }
    }
    p
}

fn tracking_block(t: usize, r: [f64; 3]) -> Block {
    let qi = pose_index(t);
    Block::new(format!("track[{t}]"), vec![qi, qi + 1, qi + 2], 1, move |x, o| {
        o[0] = (0..3).map(|k| Q_KIN[k] * (x[k] - r[k]).powi(2)).sum();
    })
    .with_jacobian(move |x, j| {
        for k in 0..3 {
            j[k] = 2.0 * Q_KIN[k] * (x[k] - r[k]);
        }
    })
}

pub fn kopt_config() -> NlpConfig {
    NlpConfig { feas_tol: 1e-10, opt_tol: 1e-8, max_outer: 80, ..NlpConfig::default() }
}

pub fn solve_kopt(scenario: &Scenario) -> Result<KinematicsSolution, KoptError> {
    solve_kopt_with(scenario, &kopt_config())
}

pub fn solve_kopt_with(scenario: &Scenario, config: &NlpConfig) -> Result<KinematicsSolution, KoptError> {
    scenario.validate()?;
    let problem = build_kopt(scenario);
    let result = nlp::solve(&problem, config);
    if result.status != NlpStatus::Converged {
        return Err(KoptError::NotConverged(Box::new(result)));
    }
    let poses: Vec<[f64; 3]> =
        (0..=scenario.horizon).map(|t| std::array::from_fn(|k| result.x[pose_index(t) + k])).collect();
    Ok(contact_maps(scenario, &poses))
}

/// Rates by forward difference and the `A`/`B` maps of a pose sequence.
/// The last step has no forward difference, so nothing slips there.
pub fn contact_maps(scenario: &Scenario, poses: &[[f64; 3]]) -> KinematicsSolution {
    let h = scenario.step;
    let steps = poses.len();
    let nv = scenario.object.vertices.len();
    let mut rates = vec![[0.0; 3]; steps];
    for t in 0..steps.saturating_sub(1) {
        rates[t] = std::array::from_fn(|k| (poses[t + 1][k] - poses[t][k]) / h);
    }
    let world = |v: usize, t: usize| {
        let q = poses[t];
        scenario.object.vertices[v].rotated(q[2]) + Vec2::new(q[0], q[1])
    };
    let mut a = vec![vec![false; steps]; nv];
    let mut b = vec![vec![false; steps]; nv];
    let mut touched = vec![vec![None; steps]; nv];
    let mut slip = vec![vec![0.0; steps]; nv];
    for v in 0..nv {
        for t in 0..steps {
            let p = world(v, t);
            let Some((hs, dist)) = scenario.env.closest(p) else { continue };
            if dist.abs() > CONTACT_TOL {
                continue;
            }
            a[v][t] = true;
            touched[v][t] = Some(hs);
            if t + 1 < steps {
                let vel = (world(v, t + 1) - p) * (1.0 / h);
                let s = vel.dot(scenario.env.halfspaces[hs].tangent());
                slip[v][t] = s;
                b[v][t] = s.abs() > SLIP_TOL;
            }
        }
    }
    KinematicsSolution {
        poses: poses.to_vec(),
        rates,
        contact_map: a,
        slip_map: b,
        contact_halfspace: touched,
        slip_velocity: slip,
    }
}
