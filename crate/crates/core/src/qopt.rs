//! Quasi-static trajectory optimization.
//!
//! Surface assignments and the extrinsic contact map are frozen; poses, robot
//! positions and all forces are free again and the products are exact.
//! Sliding is governed by an ε-relaxed complementarity between tangential
//! velocity and friction-cone margin, tightened over a continuation schedule.
//!
//! Per step the decision vector holds `[x, y, θ, ẋ, ẏ, θ̇]`, then per robot
//! `[p_x, p_y, ṗ_x, ṗ_y, α, λ_n, λ_s]` on the assigned surface, then `f`
//! for each vertex in contact.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::copt::{ContactSchedule, EXTRINSIC_FORCE_FACTOR, ROBOT_FORCE_FACTOR};
use crate::kopt::{KinematicsSolution, Q_KIN};
use crate::nlp::{self, Block, NlpConfig, NlpProblem, NlpStatus, WarmStart};
use crate::{Scenario, Vec2};

pub const DEFAULT_EPS_SCHEDULE: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-6];
/// Smoothing inside `|g| ≈ √(g² + δ)`.
pub const ABS_SMOOTHING: f64 = 1e-8;

const ROBOT_VARS: usize = 7;
const INTERMEDIATE_OUTER: usize = 15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QoptOptions {
    pub robustness_weight: f64,
    pub eps_schedule: Vec<f64>,
    pub nlp: NlpConfig,
}

impl Default for QoptOptions {
    fn default() -> Self {
        Self {
            robustness_weight: 0.0,
            eps_schedule: DEFAULT_EPS_SCHEDULE.to_vec(),
            nlp: NlpConfig { feas_tol: 1e-7, opt_tol: 1e-6, max_outer: 60, ..NlpConfig::default() },
        }
    }
}

#[derive(Debug, Error)]
pub enum QoptError {
    #[error("schedule has {got} steps, scenario needs {want}")]
    Mismatch { got: usize, want: usize },
    #[error("empty continuation schedule")]
    NoStages,
}

/// Why Q-Opt rejected a schedule. `active_set` lists every `(t, i, p)` with
/// `z = 1`, ready for a no-good cut.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InfeasibilityReport {
    pub active_set: Vec<(usize, usize, usize)>,
    pub eps: f64,
    pub status: NlpStatus,
    pub message: String,
    pub max_violation: f64,
    /// Worst constraint families at the last iterate, largest first.
    pub worst: Vec<(String, f64)>,
}

/// Variable offsets of one step.
#[derive(Clone, Debug)]
pub struct StepLayout {
    pub q: usize,
    pub qd: usize,
    pub robot: Vec<usize>,
    pub f: Vec<Option<usize>>,
}

#[derive(Clone, Debug)]
pub struct QoptProblem {
    pub scenario: Scenario,
    pub active_set: Vec<(usize, usize, usize)>,
    /// `[t][v]`.
    pub contact: Vec<Vec<bool>>,
    pub halfspace: Vec<Vec<usize>>,
    /// Assigned surface `[t][i]`.
    pub surfaces: Vec<Vec<usize>>,
    /// Robot forbidden or switching surfaces: forces pinned to zero.
    pub unloaded: Vec<Vec<bool>>,
    pub layout: Vec<StepLayout>,
    pub n: usize,
    pub options: QoptOptions,
    pub x0: Vec<f64>,
}

/// Exact-physics trajectory. Robots are indexed `[t][i]`, vertices `[t][v]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub poses: Vec<[f64; 3]>,
    pub rates: Vec<[f64; 3]>,
    pub robot_positions: Vec<Vec<[f64; 2]>>,
    pub robot_rates: Vec<Vec<[f64; 2]>>,
    pub surfaces: Vec<Vec<usize>>,
    pub alpha: Vec<Vec<f64>>,
    /// `(λ_n, λ_s)` on the assigned surface.
    pub lambda: Vec<Vec<[f64; 2]>>,
    /// Robot forces on the object, world frame.
    pub u: Vec<Vec<[f64; 2]>>,
    /// Extrinsic forces, zero where the vertex is free.
    pub f: Vec<Vec<[f64; 2]>>,
    pub contact: Vec<Vec<bool>>,
    pub halfspace: Vec<Vec<usize>>,
    pub eps: f64,
    pub objective: f64,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.poses.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Successful solve: the trajectory plus per-stage statistics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QoptSolution {
    pub trajectory: Trajectory,
    pub stages: Vec<StageStats>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageStats {
    pub eps: f64,
    pub status: NlpStatus,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub max_violation: f64,
    pub seconds: f64,
}

fn world_point(q: &[f64], body: Vec2) -> Vec2 {
    body.rotated(q[2]) + Vec2::new(q[0], q[1])
}

/// Distance from the contact vertex to the center of mass, minimized over the
/// vertices in contact; zero when nothing touches.
pub fn lever_arms(scenario: &Scenario, contact: &[Vec<bool>]) -> Vec<f64> {
    let obj = &scenario.object;
    contact
        .iter()
        .map(|row| {
            let r = row
                .iter()
                .enumerate()
                .filter(|(_, a)| **a)
                .map(|(v, _)| (obj.vertices[v] - obj.com).norm())
                .fold(f64::INFINITY, f64::min);
            if r.is_finite() {
                r
            } else {
                0.0
            }
        })
        .collect()
}

/// `Σ_t R_t cos²θ_t`.
pub fn robustness_score(scenario: &Scenario, traj: &Trajectory) -> f64 {
    lever_arms(scenario, &traj.contact)
        .iter()
        .zip(&traj.poses)
        .map(|(r, q)| r * q[2].cos().powi(2))
        .sum()
}

pub fn build_qopt(
    scenario: &Scenario,
    kin: &KinematicsSolution,
    schedule: &ContactSchedule,
    options: &QoptOptions,
) -> Result<QoptProblem, QoptError> {
    let steps = scenario.horizon + 1;
    if schedule.z.len() != steps || kin.poses.len() != steps {
        return Err(QoptError::Mismatch { got: schedule.z.len().min(kin.poses.len()), want: steps });
    }
    let nr = scenario.robots.len();
    let nv = scenario.object.vertices.len();
    let mut layout = Vec::with_capacity(steps);
    let mut n = 0;
    for t in 0..steps {
        let (q, qd) = (n, n + 3);
        n += 6;
        let robot: Vec<usize> = (0..nr).map(|i| n + ROBOT_VARS * i).collect();
        n += ROBOT_VARS * nr;
        let mut f = Vec::with_capacity(nv);
        for v in 0..nv {
            if kin.contact_map[v][t] {
                f.push(Some(n));
                n += 2;
            } else {
                f.push(None);
            }
        }
        layout.push(StepLayout { q, qd, robot, f });
    }
    let surfaces: Vec<Vec<usize>> = (0..steps).map(|t| (0..nr).map(|i| schedule.surface(t, i)).collect()).collect();
    let contact: Vec<Vec<bool>> = (0..steps).map(|t| (0..nv).map(|v| kin.contact_map[v][t]).collect()).collect();
    let halfspace: Vec<Vec<usize>> = (0..steps)
        .map(|t| {
            (0..nv)
                .map(|v| {
                    kin.contact_halfspace[v][t]
                        .or_else(|| {
                            let e = world_point(&kin.poses[t], scenario.object.vertices[v]);
                            scenario.env.closest(e).map(|c| c.0)
                        })
                        .unwrap_or(0)
                })
                .collect()
        })
        .collect();
    let mut unloaded = vec![vec![false; nr]; steps];
    for t in 0..steps {
        for i in 0..nr {
            if scenario.robots[i].gated(t, &kin.poses[t]) {
                unloaded[t][i] = true;
            }
            if t + 1 < steps && surfaces[t][i] != surfaces[t + 1][i] {
                unloaded[t][i] = true;
                unloaded[t + 1][i] = true;
            }
        }
    }

    let mut x0 = vec![0.0; n];
    for t in 0..steps {
        let l = &layout[t];
        x0[l.q..l.q + 3].copy_from_slice(&schedule.poses[t]);
        if t + 1 < steps {
            for c in 0..3 {
                x0[l.qd + c] = (schedule.poses[t + 1][c] - schedule.poses[t][c]) / scenario.step;
            }
        }
        for i in 0..nr {
            let b = l.robot[i];
            let p = surfaces[t][i];
            x0[b..b + 2].copy_from_slice(&schedule.p_world[t][i]);
            if t + 1 < steps {
                for c in 0..2 {
                    x0[b + 2 + c] = (schedule.p_world[t + 1][i][c] - schedule.p_world[t][i][c]) / scenario.step;
                }
            }
            x0[b + 4] = schedule.alpha[t][i];
            x0[b + 5] = schedule.lambda[t][i][p][0];
            x0[b + 6] = schedule.lambda[t][i][p][1];
        }
        for v in 0..nv {
            if let Some(k) = l.f[v] {
                x0[k..k + 2].copy_from_slice(&schedule.f[t][v]);
            }
        }
    }
    Ok(QoptProblem {
        scenario: scenario.clone(),
        active_set: schedule.active_set(),
        contact,
        halfspace,
        surfaces,
        unloaded,
        layout,
        n,
        options: options.clone(),
        x0,
    })
}

impl QoptProblem {
    pub fn steps(&self) -> usize {
        self.layout.len()
    }

    /// The NLP at relaxation level `eps`.
    pub fn nlp(&self, eps: f64) -> NlpProblem {
        let s = &self.scenario;
        let obj = &s.object;
        let h = s.step;
        let steps = self.steps();
        let nr = s.robots.len();
        let nv = obj.vertices.len();
        let weight = s.weight();
        let fmax = ROBOT_FORCE_FACTOR * weight.norm();
        let emax = EXTRINSIC_FORCE_FACTOR * weight.norm();
        let pb = &s.pose_bounds;
        let mut p = NlpProblem::new(self.n);
        p.x0 = self.x0.clone();

        for (t, l) in self.layout.iter().enumerate() {
            for c in 0..3 {
                p.set_bounds(l.q + c, pb.lower[c], pb.upper[c]);
                if t + 1 < steps {
                    p.set_bounds(l.qd + c, pb.rate_lower[c], pb.rate_upper[c]);
                } else {
                    p.set_bounds(l.qd + c, 0.0, 0.0);
                }
            }
            for i in 0..nr {
                let b = l.robot[i];
                let robot = &s.robots[i];
                let surf = &obj.surfaces[self.surfaces[t][i]];
                p.set_bounds(b, -f64::INFINITY, f64::INFINITY);
                p.set_bounds(b + 1, -f64::INFINITY, f64::INFINITY);
                if t + 1 < steps {
                    p.set_bounds(b + 2, robot.vel_lb.x, robot.vel_ub.x);
                    p.set_bounds(b + 3, robot.vel_lb.y, robot.vel_ub.y);
                } else {
                    p.set_bounds(b + 2, 0.0, 0.0);
                    p.set_bounds(b + 3, 0.0, 0.0);
                }
                p.set_bounds(b + 4, 0.0, surf.length);
                if self.unloaded[t][i] {
                    p.set_bounds(b + 5, 0.0, 0.0);
                    p.set_bounds(b + 6, 0.0, 0.0);
                } else {
                    p.set_bounds(b + 5, 0.0, fmax);
                    p.set_bounds(b + 6, -fmax, fmax);
                }
            }
            for v in 0..nv {
                if let Some(k) = l.f[v] {
                    p.set_bounds(k, -emax, emax);
                    p.set_bounds(k + 1, -emax, emax);
                }
            }
        }
        let pin = |p: &mut NlpProblem, t: usize, q: [f64; 3]| {
            for c in 0..3 {
                let k = self.layout[t].q + c;
                p.set_bounds(k, q[c], q[c]);
                p.x0[k] = q[c];
            }
        };
        if pb.pin_start {
            pin(&mut p, 0, s.reference(0));
        }
        if pb.pin_goal {
            pin(&mut p, s.horizon, s.reference(s.horizon));
        }

        // objective: tracking minus robustness
        let arms = lever_arms(s, &self.contact);
        let w = self.options.robustness_weight;
        for (t, l) in self.layout.iter().enumerate() {
            let r = s.reference(t);
            let wr = w * arms[t];
            p.add_objective(
                Block::new(format!("cost[{t}]"), vec![l.q, l.q + 1, l.q + 2], 1, move |x, o| {
                    o[0] = (0..3).map(|k| Q_KIN[k] * (x[k] - r[k]).powi(2)).sum::<f64>() - wr * x[2].cos().powi(2);
                })
                .with_jacobian(move |x, j| {
                    for k in 0..3 {
                        j[k] = 2.0 * Q_KIN[k] * (x[k] - r[k]);
                    }
                    j[2] += wr * (2.0 * x[2]).sin();
                }),
            );
        }

        // dynamics
        for t in 0..steps - 1 {
            let (a, b) = (&self.layout[t], &self.layout[t + 1]);
            let mut vars = Vec::new();
            let mut rows = Vec::new();
            for c in 0..3 {
                vars.extend([a.q + c, b.q + c, a.qd + c]);
            }
            for i in 0..nr {
                for c in 0..2 {
                    vars.extend([a.robot[i] + c, b.robot[i] + c, a.robot[i] + 2 + c]);
                }
            }
            for r in 0..vars.len() / 3 {
                let mut row = vec![0.0; vars.len()];
                row[3 * r] = -1.0;
                row[3 * r + 1] = 1.0;
                row[3 * r + 2] = -h;
                rows.push((row, 0.0));
            }
            p.add_eq(Block::affine(format!("dynamics[{t}]"), vars, rows));
        }

        for (t, l) in self.layout.iter().enumerate() {
            // robot on its assigned surface
            for i in 0..nr {
                let b = l.robot[i];
                let surf = obj.surfaces[self.surfaces[t][i]].clone();
                let (a0, tg) = (surf.a, surf.tangent());
                p.add_eq(
                    Block::new(
                        format!("membership[{t}][{i}]"),
                        vec![l.q, l.q + 1, l.q + 2, b, b + 1, b + 4],
                        2,
                        move |x, o| {
                            let c = (a0 + tg * x[5]).rotated(x[2]) + Vec2::new(x[0], x[1]);
                            o[0] = x[3] - c.x;
                            o[1] = x[4] - c.y;
                        },
                    )
                    .with_jacobian(move |x, j| {
                        let dth = (a0 + tg * x[5]).rotated_deriv(x[2]);
                        let da = tg.rotated(x[2]);
                        j.fill(0.0);
                        j[0] = -1.0;
                        j[2] = -dth.x;
                        j[3] = 1.0;
                        j[5] = -da.x;
                        j[6 + 1] = -1.0;
                        j[6 + 2] = -dth.y;
                        j[6 + 4] = 1.0;
                        j[6 + 5] = -da.y;
                    }),
                );
                // friction cone, linear
                let mu = s.robots[i].mu;
                p.add_ineq(Block::affine(
                    format!("robot_friction[{t}][{i}]"),
                    vec![b + 5, b + 6],
                    vec![(vec![mu, -1.0], 0.0), (vec![mu, 1.0], 0.0)],
                ));
            }
            for v in 0..nv {
                let Some(k) = l.f[v] else { continue };
                let hs = s.env.halfspaces[self.halfspace[t][v]];
                let (nh, th) = (hs.normal, hs.tangent());
                let mu = obj.mu_env[v];
                p.add_ineq(Block::affine(
                    format!("env_friction[{t}][{v}]"),
                    vec![k, k + 1],
                    vec![
                        (vec![nh.x, nh.y], 0.0),
                        (vec![mu * nh.x - th.x, mu * nh.y - th.y], 0.0),
                        (vec![mu * nh.x + th.x, mu * nh.y + th.y], 0.0),
                    ],
                ));
            }

            // balance
            let wrench = WrenchBlock::new(self, t);
            p.add_eq(wrench.force_block(format!("force[{t}]"), weight));
            p.add_eq(wrench.moment_block(format!("moment[{t}]")));

            // geometry: touching vertices stay on their halfspace, the rest clear
            for (v, &body) in obj.vertices.iter().enumerate() {
                for (hi, hs) in s.env.halfspaces.iter().enumerate() {
                    let (nh, d) = (hs.normal, hs.offset);
                    let blk = Block::new(format!("sdf[{t}][{v}]"), vec![l.q, l.q + 1, l.q + 2], 1, move |x, o| {
                        o[0] = nh.dot(world_point(x, body)) - d;
                    })
                    .with_jacobian(move |x, j| {
                        j[0] = nh.x;
                        j[1] = nh.y;
                        j[2] = nh.dot(body.rotated_deriv(x[2]));
                    });
                    if self.contact[t][v] && self.halfspace[t][v] == hi {
                        p.add_eq(Block { label: format!("contact_gap[{t}][{v}]"), ..blk });
                    } else {
                        p.add_ineq(blk);
                    }
                }
            }
        }

        // complementarity
        for t in 0..steps - 1 {
            let (a, b) = (&self.layout[t], &self.layout[t + 1]);
            for i in 0..nr {
                if self.unloaded[t][i] {
                    continue;
                }
                let mu = s.robots[i].mu;
                let vars = vec![a.robot[i] + 4, b.robot[i] + 4, a.robot[i] + 5, a.robot[i] + 6];
                p.add_ineq(complementarity_block(format!("robot_comp[{t}][{i}]"), vars, eps, move |x| {
                    // object relative to the finger moves by -α̇ along the tangent
                    let v = -(x[1] - x[0]) / h;
                    let mut dv = [0.0; 8];
                    dv[0] = 1.0 / h;
                    dv[1] = -1.0 / h;
                    let mut dn = [0.0; 8];
                    dn[2] = mu;
                    let mut dg = [0.0; 8];
                    dg[3] = 1.0;
                    (v, dv, mu * x[2], dn, x[3], dg)
                }));
            }
            for v in 0..nv {
                let Some(k) = a.f[v] else { continue };
                let hs = s.env.halfspaces[self.halfspace[t][v]];
                let (nh, th) = (hs.normal, hs.tangent());
                let mu = obj.mu_env[v];
                let body = obj.vertices[v];
                let vars = vec![a.q, a.q + 1, a.q + 2, b.q, b.q + 1, b.q + 2, k, k + 1];
                p.add_ineq(complementarity_block(format!("env_comp[{t}][{v}]"), vars, eps, move |x| {
                    let e0 = world_point(&x[0..3], body);
                    let e1 = world_point(&x[3..6], body);
                    let vel = th.dot(e1 - e0) / h;
                    let d0 = th.dot(body.rotated_deriv(x[2])) / h;
                    let d1 = th.dot(body.rotated_deriv(x[5])) / h;
                    let dv = [-th.x / h, -th.y / h, -d0, th.x / h, th.y / h, d1, 0.0, 0.0];
                    let f = Vec2::new(x[6], x[7]);
                    let mut dn = [0.0; 8];
                    dn[6] = mu * nh.x;
                    dn[7] = mu * nh.y;
                    let mut dg = [0.0; 8];
                    dg[6] = th.x;
                    dg[7] = th.y;
                    (vel, dv, mu * nh.dot(f), dn, th.dot(f), dg)
                }));
            }
        }
        p
    }

    /// Unpacks a decision vector.
    pub fn trajectory(&self, x: &[f64], eps: f64, objective: f64) -> Trajectory {
        let s = &self.scenario;
        let nr = s.robots.len();
        let nv = s.object.vertices.len();
        let mut tr = Trajectory {
            poses: Vec::new(),
            rates: Vec::new(),
            robot_positions: Vec::new(),
            robot_rates: Vec::new(),
            surfaces: self.surfaces.clone(),
            alpha: Vec::new(),
            lambda: Vec::new(),
            u: Vec::new(),
            f: Vec::new(),
            contact: self.contact.clone(),
            halfspace: self.halfspace.clone(),
            eps,
            objective,
        };
        for (t, l) in self.layout.iter().enumerate() {
            let q = [x[l.q], x[l.q + 1], x[l.q + 2]];
            tr.poses.push(q);
            tr.rates.push([x[l.qd], x[l.qd + 1], x[l.qd + 2]]);
            let mut pos = Vec::new();
            let mut rate = Vec::new();
            let mut al = Vec::new();
            let mut la = Vec::new();
            let mut u = Vec::new();
            for i in 0..nr {
                let b = l.robot[i];
                pos.push([x[b], x[b + 1]]);
                rate.push([x[b + 2], x[b + 3]]);
                al.push(x[b + 4]);
                la.push([x[b + 5], x[b + 6]]);
                let surf = &s.object.surfaces[self.surfaces[t][i]];
                u.push(surf.local_force_to_body(x[b + 5], x[b + 6]).rotated(q[2]).to_array());
            }
            tr.robot_positions.push(pos);
            tr.robot_rates.push(rate);
            tr.alpha.push(al);
            tr.lambda.push(la);
            tr.u.push(u);
            tr.f.push((0..nv).map(|v| l.f[v].map_or([0.0; 2], |k| [x[k], x[k + 1]])).collect());
        }
        tr
    }
}

/// Velocity, normal-cone term `μ f_n` and tangential force `g`, each with
/// its gradient over the block variables (zero padded).
type CompEval = (f64, [f64; 8], f64, [f64; 8], f64, [f64; 8]);

/// Rows `ε - c·v ≥ 0`, `ε + c·v ≥ 0`, `ε - g·v ≥ 0` with
/// `c = μ f_n - √(g² + δ)`.
fn complementarity_block<F>(label: String, vars: Vec<usize>, eps: f64, parts: F) -> Block
where
    F: Fn(&[f64]) -> CompEval + Send + Sync + Clone + 'static,
{
    let k = vars.len();
    let p2 = parts.clone();
    Block::new(label, vars, 3, move |x, o| {
        let (v, _, mn, _, g, _) = parts(x);
        let c = mn - (g * g + ABS_SMOOTHING).sqrt();
        o[0] = eps - c * v;
        o[1] = eps + c * v;
        o[2] = eps - g * v;
    })
    .with_jacobian(move |x, j| {
        let (v, dv, mn, dmn, g, dg) = p2(x);
        let root = (g * g + ABS_SMOOTHING).sqrt();
        let c = mn - root;
        for m in 0..k {
            let dc = dmn[m] - g / root * dg[m];
            let dcv = dc * v + c * dv[m];
            j[m] = -dcv;
            j[k + m] = dcv;
            j[2 * k + m] = -(dg[m] * v + g * dv[m]);
        }
    })
}

/// Shared bookkeeping for the force and moment balance at one step.
struct WrenchBlock {
    vars: Vec<usize>,
    /// Per robot: local offset of `p_x` and the surface frame.
    robots: Vec<(usize, Vec2, Vec2)>,
    /// Per contact: local offset of `f_x` and the body vertex.
    contacts: Vec<(usize, Vec2)>,
    com: Vec2,
}

impl WrenchBlock {
    fn new(pr: &QoptProblem, t: usize) -> Self {
        let l = &pr.layout[t];
        let obj = &pr.scenario.object;
        let mut vars = vec![l.q, l.q + 1, l.q + 2];
        let mut robots = Vec::new();
        for (i, &b) in l.robot.iter().enumerate() {
            let surf = &obj.surfaces[pr.surfaces[t][i]];
            robots.push((vars.len(), surf.outward_normal, surf.tangent()));
            vars.extend([b, b + 1, b + 5, b + 6]);
        }
        let mut contacts = Vec::new();
        for (v, f) in l.f.iter().enumerate() {
            if let Some(k) = f {
                contacts.push((vars.len(), obj.vertices[v]));
                vars.extend([*k, k + 1]);
            }
        }
        Self { vars, robots, contacts, com: obj.com }
    }

    fn force_block(&self, label: String, weight: Vec2) -> Block {
        let (robots, contacts) = (self.robots.clone(), self.contacts.clone());
        let (r2, c2) = (robots.clone(), contacts.clone());
        let k = self.vars.len();
        Block::new(label, self.vars.clone(), 2, move |x, o| {
            let mut f = weight;
            for &(off, n, tg) in &robots {
                f = f + (n * (-x[off + 2]) + tg * x[off + 3]).rotated(x[2]);
            }
            for &(off, _) in &contacts {
                f = f + Vec2::new(x[off], x[off + 1]);
            }
            o[0] = f.x;
            o[1] = f.y;
        })
        .with_jacobian(move |x, j| {
            j.fill(0.0);
            for &(off, n, tg) in &r2 {
                let d = (n * (-x[off + 2]) + tg * x[off + 3]).rotated_deriv(x[2]);
                let dn = (n * -1.0).rotated(x[2]);
                let dt = tg.rotated(x[2]);
                j[2] += d.x;
                j[k + 2] += d.y;
                j[off + 2] = dn.x;
                j[k + off + 2] = dn.y;
                j[off + 3] = dt.x;
                j[k + off + 3] = dt.y;
            }
            for &(off, _) in &c2 {
                j[off] = 1.0;
                j[k + off + 1] = 1.0;
            }
        })
    }

    fn moment_block(&self, label: String) -> Block {
        let (robots, contacts, com) = (self.robots.clone(), self.contacts.clone(), self.com);
        let (r2, c2) = (robots.clone(), contacts.clone());
        Block::new(label, self.vars.clone(), 1, move |x, o| {
            let c = world_point(x, com);
            let mut m = 0.0;
            for &(off, n, tg) in &robots {
                let u = (n * (-x[off + 2]) + tg * x[off + 3]).rotated(x[2]);
                m += (Vec2::new(x[off], x[off + 1]) - c).cross(u);
            }
            for &(off, body) in &contacts {
                m += (body - com).rotated(x[2]).cross(Vec2::new(x[off], x[off + 1]));
            }
            o[0] = m;
        })
        .with_jacobian(move |x, j| {
            j.fill(0.0);
            let c = world_point(x, com);
            let dc = com.rotated_deriv(x[2]);
            for &(off, n, tg) in &r2 {
                let local = n * (-x[off + 2]) + tg * x[off + 3];
                let u = local.rotated(x[2]);
                let du = local.rotated_deriv(x[2]);
                let d = Vec2::new(x[off], x[off + 1]) - c;
                j[0] -= u.y;
                j[1] += u.x;
                j[2] += (dc * -1.0).cross(u) + d.cross(du);
                j[off] = u.y;
                j[off + 1] = -u.x;
                j[off + 2] = d.cross((n * -1.0).rotated(x[2]));
                j[off + 3] = d.cross(tg.rotated(x[2]));
            }
            for &(off, body) in &c2 {
                let a = (body - com).rotated(x[2]);
                let da = (body - com).rotated_deriv(x[2]);
                let f = Vec2::new(x[off], x[off + 1]);
                j[2] += da.cross(f);
                j[off] = -a.y;
                j[off + 1] = a.x;
            }
        })
    }
}

/// Runs the continuation, warm-starting each stage from the previous one.
pub fn solve_qopt(problem: &QoptProblem) -> Result<QoptSolution, Box<InfeasibilityReport>> {
    let schedule = &problem.options.eps_schedule;
    let mut x = problem.x0.clone();
    let mut warm: Option<WarmStart> = None;
    let mut stages = Vec::new();
    let mut last = None;
    for (k, &eps) in schedule.iter().enumerate() {
        let nlp = problem.nlp(eps);
        if stages.is_empty() {
            x = nlp.x0.clone();
        }
        // intermediate stages only need to hand over a good start
        let mut config = problem.options.nlp.clone();
        if k + 1 < schedule.len() {
            config.max_outer = config.max_outer.min(INTERMEDIATE_OUTER);
        }
        let start = Instant::now();
        let res = nlp::solve_warm(&nlp, &x, warm.as_ref(), &config);
        stages.push(StageStats {
            eps,
            status: res.status,
            outer_iterations: res.outer_iterations,
            inner_iterations: res.inner_iterations,
            max_violation: res.max_violation(),
            seconds: start.elapsed().as_secs_f64(),
        });
        log::debug!("qopt eps {eps:e}: {:?} viol {:.2e}", res.status, res.max_violation());
        x = res.x.clone();
        warm = Some(res.warm.clone());
        last = Some((nlp, res));
    }
    let Some((nlp, res)) = last else {
        return Err(Box::new(InfeasibilityReport {
            active_set: problem.active_set.clone(),
            eps: f64::NAN,
            status: NlpStatus::MaxIter,
            message: "empty continuation schedule".into(),
            max_violation: f64::INFINITY,
            worst: Vec::new(),
        }));
    };
    let eps = *schedule.last().expect("nonempty");
    if res.status != NlpStatus::Converged || res.max_violation() > problem.options.nlp.feas_tol.max(1e-6) {
        let mut worst = nlp.violation_by_label(&res.x);
        // collapse per-step labels to families
        let mut fam: Vec<(String, f64)> = Vec::new();
        for (label, v) in worst.drain(..) {
            let name = label.split('[').next().unwrap_or(&label).to_string();
            match fam.iter_mut().find(|(n, _)| *n == name) {
                Some((_, m)) => *m = m.max(v),
                None => fam.push((name, v)),
            }
        }
        fam.sort_by(|a, b| b.1.total_cmp(&a.1));
        return Err(Box::new(InfeasibilityReport {
            active_set: problem.active_set.clone(),
            eps,
            status: res.status,
            message: res.message.clone(),
            max_violation: res.max_violation(),
            worst: fam,
        }));
    }
    Ok(QoptSolution { trajectory: problem.trajectory(&res.x, eps, res.objective), stages })
}

/// Worst exact residual per constraint family, recomputed from the
/// trajectory alone.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub pose_dynamics: f64,
    pub robot_dynamics: f64,
    pub bounds: f64,
    pub membership: f64,
    pub force_balance: f64,
    pub moment_balance: f64,
    pub robot_friction: f64,
    pub env_friction: f64,
    pub contact_gap: f64,
    pub penetration: f64,
    pub inactive_force: f64,
    /// `max(|c·v|, g·v)` with the exact `|g|`.
    pub complementarity: f64,
    /// `min(cone margin, |v|)`, worst over contacts.
    pub sliding_margin: f64,
}

impl ResidualReport {
    /// Largest residual outside the complementarity families.
    pub fn max_exact(&self) -> f64 {
        [
            self.pose_dynamics,
            self.robot_dynamics,
            self.bounds,
            self.membership,
            self.force_balance,
            self.moment_balance,
            self.robot_friction,
            self.env_friction,
            self.contact_gap,
            self.penetration,
            self.inactive_force,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64, comp_tol: f64) -> bool {
        self.max_exact() <= tol && self.complementarity <= comp_tol
    }
}

pub fn verify_trajectory(s: &Scenario, tr: &Trajectory) -> ResidualReport {
    let mut r = ResidualReport::default();
    let up = |slot: &mut f64, v: f64| *slot = slot.max(v);
    let h = s.step;
    let steps = tr.steps();
    let obj = &s.object;
    let weight = s.weight();
    let pb = &s.pose_bounds;
    for t in 0..steps {
        let q = tr.poses[t];
        for c in 0..3 {
            up(&mut r.bounds, (pb.lower[c] - q[c]).max(q[c] - pb.upper[c]));
        }
        if t + 1 < steps {
            for c in 0..3 {
                up(&mut r.pose_dynamics, (tr.poses[t + 1][c] - q[c] - h * tr.rates[t][c]).abs());
                up(&mut r.bounds, (pb.rate_lower[c] - tr.rates[t][c]).max(tr.rates[t][c] - pb.rate_upper[c]));
            }
        }
        let com = world_point(&q, obj.com);
        let mut force = weight;
        let mut moment = 0.0;
        for (i, robot) in s.robots.iter().enumerate() {
            let surf = &obj.surfaces[tr.surfaces[t][i]];
            let p = Vec2::new(tr.robot_positions[t][i][0], tr.robot_positions[t][i][1]);
            let al = tr.alpha[t][i];
            up(&mut r.bounds, (-al).max(al - surf.length));
            up(&mut r.membership, (p - world_point(&q, surf.point_at(al))).norm());
            let [ln, ls] = tr.lambda[t][i];
            up(&mut r.robot_friction, (-ln).max(ls.abs() - robot.mu * ln));
            let u = surf.local_force_to_body(ln, ls).rotated(q[2]);
            force = force + u;
            moment += (p - com).cross(u);
            if t + 1 < steps {
                let pn = Vec2::new(tr.robot_positions[t + 1][i][0], tr.robot_positions[t + 1][i][1]);
                let pd = Vec2::new(tr.robot_rates[t][i][0], tr.robot_rates[t][i][1]);
                up(&mut r.robot_dynamics, (pn - p - pd * h).norm());
                up(&mut r.bounds, (robot.vel_lb.x - pd.x).max(pd.x - robot.vel_ub.x));
                up(&mut r.bounds, (robot.vel_lb.y - pd.y).max(pd.y - robot.vel_ub.y));
                if tr.surfaces[t + 1][i] == tr.surfaces[t][i] {
                    let v = -(tr.alpha[t + 1][i] - al) / h;
                    let c = robot.mu * ln - ls.abs();
                    up(&mut r.complementarity, (c * v).abs().max(ls * v));
                    up(&mut r.sliding_margin, c.abs().min(v.abs()));
                }
            }
        }
        for (v, &body) in obj.vertices.iter().enumerate() {
            let e = world_point(&q, body);
            for (hi, hs) in s.env.halfspaces.iter().enumerate() {
                let d = hs.distance(e);
                up(&mut r.penetration, -d);
                if tr.contact[t][v] && tr.halfspace[t][v] == hi {
                    up(&mut r.contact_gap, d.abs());
                }
            }
            let f = Vec2::new(tr.f[t][v][0], tr.f[t][v][1]);
            if !tr.contact[t][v] {
                up(&mut r.inactive_force, f.norm());
                continue;
            }
            let hs = &s.env.halfspaces[tr.halfspace[t][v]];
            let (fnorm, fs) = (hs.normal.dot(f), hs.tangent().dot(f));
            let mu = obj.mu_env[v];
            up(&mut r.env_friction, (-fnorm).max(fs.abs() - mu * fnorm));
            force = force + f;
            moment += (e - com).cross(f);
            if t + 1 < steps {
                let vel = hs.tangent().dot(world_point(&tr.poses[t + 1], body) - e) / h;
                let c = mu * fnorm - fs.abs();
                up(&mut r.complementarity, (c * vel).abs().max(fs * vel));
                up(&mut r.sliding_margin, c.abs().min(vel.abs()));
            }
        }
        up(&mut r.force_balance, force.norm());
        up(&mut r.moment_balance, moment.abs());
    }
    r
}
