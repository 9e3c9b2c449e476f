//! Contact trajectory optimization.
//!
//! With the object poses fixed by K-Opt, robot contacts, robot forces and
//! extrinsic forces are found from a MILP: quasi-static force and moment
//! balance, surface assignment, friction cones and the stable contact-change
//! rule. The robot contact point is `a_p + α·t_p` on its assigned surface, so
//! the only nonlinearity is `α·λ_n` in the moment balance, which is replaced by
//! a relaxed auxiliary variable.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kopt::KinematicsSolution;
use crate::milp::{self, ConstraintId, LinExpr, MilpError, MilpModel, MilpStatus, Sense, SolveConfig, VarId};
use crate::relax::{
    binary_encoded_shared, implication_auto, implication_eq, mccormick, piecewise_naive_shared, ActiveWhen, Axis,
    BilinearTerm, PartitionSpec, RelaxError,
};
use crate::{Scenario, Vec2};

/// Robot force bound per component, in multiples of the object weight.
pub const ROBOT_FORCE_FACTOR: f64 = 5.0;
/// Extrinsic force bound per component, in multiples of the object weight.
pub const EXTRINSIC_FORCE_FACTOR: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relaxation {
    McCormick,
    NaivePiecewise(usize),
    BinaryEncoded(usize),
}

impl Relaxation {
    /// Number of regions along `α`.
    pub fn regions(self) -> usize {
        match self {
            Relaxation::McCormick => 1,
            Relaxation::NaivePiecewise(c) | Relaxation::BinaryEncoded(c) => c,
        }
    }
}

impl fmt::Display for Relaxation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relaxation::McCormick => write!(f, "mccormick"),
            Relaxation::NaivePiecewise(c) => write!(f, "naive:{c}"),
            Relaxation::BinaryEncoded(c) => write!(f, "encoded:{c}"),
        }
    }
}

impl FromStr for Relaxation {
    type Err = String;

    /// `mccormick`, `naive:C` or `encoded:C`.
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim().to_ascii_lowercase();
        if s == "mccormick" {
            return Ok(Relaxation::McCormick);
        }
        let (kind, c) = s.split_once(':').ok_or_else(|| format!("unknown relaxation `{s}`"))?;
        let c: usize = c.parse().map_err(|_| format!("bad region count in `{s}`"))?;
        if c == 0 {
            return Err("region count must be positive".into());
        }
        match kind {
            "naive" => Ok(Relaxation::NaivePiecewise(c)),
            "encoded" => Ok(Relaxation::BinaryEncoded(c)),
            _ => Err(format!("unknown relaxation `{s}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum CoptError {
    #[error("kinematic solution has {got} steps, scenario needs {want}")]
    HorizonMismatch { got: usize, want: usize },
    #[error("contact MILP has no solution ({0:?})")]
    Infeasible(MilpStatus),
    #[error("contact MILP stopped without a solution ({0:?})")]
    Limit(MilpStatus),
    #[error("no-good cut needs a nonempty active set")]
    EmptyCut,
    #[error("active set entry {0:?} is out of range")]
    BadIndex((usize, usize, usize)),
    #[error(transparent)]
    Relax(#[from] RelaxError),
    #[error(transparent)]
    Milp(#[from] MilpError),
}

/// Variable handles, indexed `[t][i][p]`, `[t][i]` or `[t][v]`.
#[derive(Clone, Debug)]
pub struct CoptIndex {
    pub z: Vec<Vec<Vec<VarId>>>,
    pub alpha: Vec<Vec<VarId>>,
    pub p_world: Vec<Vec<[VarId; 2]>>,
    /// Steps `0..T`.
    pub p_rate: Vec<Vec<[VarId; 2]>>,
    pub lambda_n: Vec<Vec<Vec<VarId>>>,
    pub lambda_s: Vec<Vec<Vec<VarId>>>,
    pub w: Vec<Vec<Vec<VarId>>>,
    pub u: Vec<Vec<[VarId; 2]>>,
    pub f: Vec<Vec<Option<[VarId; 2]>>>,
    /// Pose deviations, present after `relax_pose_variables`.
    pub dq: Option<Vec<[VarId; 3]>>,
}

/// Relaxed product `w ≈ α·λ_n` and the worst-case gap of its envelope.
#[derive(Clone, Copy, Debug)]
pub struct TermHandle {
    pub t: usize,
    pub i: usize,
    pub p: usize,
    pub term: BilinearTerm,
    pub gap: f64,
}

#[derive(Clone, Debug)]
pub struct CoptModel {
    pub model: MilpModel,
    pub index: CoptIndex,
    pub terms: Vec<TermHandle>,
    pub relaxation: Relaxation,
    pub scenario: Scenario,
    pub kin: KinematicsSolution,
    pub pose_box: Option<[f64; 3]>,
    pub cuts: Vec<Vec<(usize, usize, usize)>>,
}

impl CoptModel {
    pub fn steps(&self) -> usize {
        self.index.z.len()
    }

    pub fn robot_force_bound(&self) -> f64 {
        ROBOT_FORCE_FACTOR * self.scenario.weight().norm()
    }
}

/// Decoded C-Opt solution. Forces in newtons, positions in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactSchedule {
    /// Object poses the schedule was computed for.
    pub poses: Vec<[f64; 3]>,
    pub z: Vec<Vec<Vec<bool>>>,
    pub alpha: Vec<Vec<f64>>,
    pub p_world: Vec<Vec<[f64; 2]>>,
    pub u: Vec<Vec<[f64; 2]>>,
    /// `(λ_n, λ_s)` in the surface frame.
    pub lambda: Vec<Vec<Vec<[f64; 2]>>>,
    /// Relaxed values of `α·λ_n`.
    pub w: Vec<Vec<Vec<f64>>>,
    pub f: Vec<Vec<[f64; 2]>>,
    pub relaxation: Relaxation,
}

impl ContactSchedule {
    pub fn surface(&self, t: usize, i: usize) -> usize {
        self.z[t][i].iter().position(|&b| b).expect("one surface per robot and step")
    }

    /// Every `(t, i, p)` with `z = 1`.
    pub fn active_set(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for (t, zt) in self.z.iter().enumerate() {
            for i in 0..zt.len() {
                out.push((t, i, self.surface(t, i)));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

pub fn build_copt(scenario: &Scenario, kin: &KinematicsSolution, relaxation: Relaxation) -> Result<CoptModel, CoptError> {
    Builder::new(scenario, kin, relaxation, None)?.build()
}

/// Rebuilds with the object poses as decisions: `q_t = q_t^kin + Δq_t` with
/// `|Δq_t| ≤ pose_box`, rotations linearized about the kinematic angle and
/// products with `Δθ` relaxed by McCormick envelopes. Existing cuts carry over.
pub fn relax_pose_variables(model: &CoptModel, pose_box: [f64; 3]) -> Result<CoptModel, CoptError> {
    let mut out = Builder::new(&model.scenario, &model.kin, model.relaxation, Some(pose_box))?.build()?;
    for cut in &model.cuts {
        add_no_good_cut(&mut out, cut)?;
    }
    Ok(out)
}

/// `Σ z ≤ N − 1` over the given `(t, i, p)` entries.
pub fn add_no_good_cut(model: &mut CoptModel, active_set: &[(usize, usize, usize)]) -> Result<ConstraintId, CoptError> {
    if active_set.is_empty() {
        return Err(CoptError::EmptyCut);
    }
    let mut e = LinExpr::new();
    for &(t, i, p) in active_set {
        let z = model
            .index
            .z
            .get(t)
            .and_then(|zt| zt.get(i))
            .and_then(|zi| zi.get(p))
            .ok_or(CoptError::BadIndex((t, i, p)))?;
        e.add_term(*z, 1.0);
    }
    let name = format!("cut{}", model.cuts.len());
    let id = model.model.add_named_constraint(name, &e, Sense::Le, active_set.len() as f64 - 1.0)?;
    model.cuts.push(active_set.to_vec());
    Ok(id)
}

pub fn solve_copt(model: &CoptModel, config: &SolveConfig) -> Result<ContactSchedule, CoptError> {
    let sol = milp::solve(&model.model, config);
    match sol.status {
        MilpStatus::Optimal | MilpStatus::Feasible => Ok(decode(model, &sol.values)),
        MilpStatus::Infeasible => Err(CoptError::Infeasible(sol.status)),
        s => Err(CoptError::Limit(s)),
    }
}

/// Reads a schedule from a full assignment of the model's variables.
pub fn decode(model: &CoptModel, x: &[f64]) -> ContactSchedule {
    let ix = &model.index;
    let s = &model.scenario;
    let val = |v: VarId| x[v.index()];
    let steps = model.steps();
    let poses: Vec<[f64; 3]> = (0..steps)
        .map(|t| {
            let mut q = model.kin.poses[t];
            if let Some(dq) = &ix.dq {
                for c in 0..3 {
                    q[c] += val(dq[t][c]);
                }
            }
            q
        })
        .collect();
    let z: Vec<Vec<Vec<bool>>> = ix
        .z
        .iter()
        .map(|zt| {
            zt.iter()
                .map(|zi| {
                    // exactly one, even if the LP left the binaries slightly off
                    let best = (0..zi.len()).max_by(|&a, &b| val(zi[a]).total_cmp(&val(zi[b]))).unwrap();
                    (0..zi.len()).map(|p| p == best).collect()
                })
                .collect()
        })
        .collect();
    let alpha: Vec<Vec<f64>> = ix.alpha.iter().map(|at| at.iter().map(|&a| val(a)).collect()).collect();
    let p_world = (0..steps)
        .map(|t| {
            (0..s.robots.len())
                .map(|i| {
                    let p = z[t][i].iter().position(|&b| b).unwrap();
                    contact_point(s, &poses[t], p, alpha[t][i]).to_array()
                })
                .collect()
        })
        .collect();
    let pair = |v: [VarId; 2]| [val(v[0]), val(v[1])];
    ContactSchedule {
        poses,
        alpha,
        p_world,
        u: ix.u.iter().map(|ut| ut.iter().map(|&v| pair(v)).collect()).collect(),
        lambda: (0..steps)
            .map(|t| {
                (0..s.robots.len())
                    .map(|i| {
                        (0..ix.lambda_n[t][i].len())
                            .map(|p| [val(ix.lambda_n[t][i][p]), val(ix.lambda_s[t][i][p])])
                            .collect()
                    })
                    .collect()
            })
            .collect(),
        w: ix.w.iter().map(|wt| wt.iter().map(|wi| wi.iter().map(|&v| val(v)).collect()).collect()).collect(),
        f: ix.f.iter().map(|ft| ft.iter().map(|fv| fv.map_or([0.0, 0.0], pair)).collect()).collect(),
        z,
        relaxation: model.relaxation,
    }
}

/// World position of the point at `α` along surface `p`.
pub fn contact_point(s: &Scenario, q: &[f64; 3], p: usize, alpha: f64) -> Vec2 {
    let surf = &s.object.surfaces[p];
    surf.point_at(alpha).rotated(q[2]) + Vec2::new(q[0], q[1])
}

/// `R(θ + Δ)v` to first order in `Δ`.
pub fn rotate_linearized(v: Vec2, theta: f64, delta: f64) -> Vec2 {
    v.rotated(theta) + v.rotated_deriv(theta) * delta
}

struct Builder<'a> {
    s: &'a Scenario,
    kin: &'a KinematicsSolution,
    relaxation: Relaxation,
    pose_box: Option<[f64; 3]>,
    m: MilpModel,
    fmax: f64,
    fext: f64,
    lmax: f64,
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.cross(b)
}

impl<'a> Builder<'a> {
    fn new(
        s: &'a Scenario,
        kin: &'a KinematicsSolution,
        relaxation: Relaxation,
        pose_box: Option<[f64; 3]>,
    ) -> Result<Self, CoptError> {
        let want = s.horizon + 1;
        if kin.poses.len() != want || kin.contact_map.iter().any(|row| row.len() != want) {
            return Err(CoptError::HorizonMismatch { got: kin.poses.len(), want });
        }
        let weight = s.weight().norm();
        Ok(Self {
            s,
            kin,
            relaxation,
            pose_box,
            m: MilpModel::new(format!("copt_{}", s.name.replace(|c: char| !c.is_ascii_alphanumeric(), "_"))),
            fmax: ROBOT_FORCE_FACTOR * weight,
            fext: EXTRINSIC_FORCE_FACTOR * weight,
            lmax: s.object.surfaces.iter().map(|p| p.length).fold(0.0, f64::max),
        })
    }

    fn cont(&mut self, name: String, lo: f64, hi: f64) -> Result<VarId, CoptError> {
        Ok(self.m.add_continuous(name, lo, hi)?)
    }

    fn eq(&mut self, e: &LinExpr, rhs: f64) -> Result<(), CoptError> {
        self.m.add_constraint(e, Sense::Eq, rhs)?;
        Ok(())
    }

    fn le(&mut self, e: &LinExpr, rhs: f64) -> Result<(), CoptError> {
        self.m.add_constraint(e, Sense::Le, rhs)?;
        Ok(())
    }

    /// McCormick-relaxed product of two bounded variables.
    fn product(&mut self, name: String, x: VarId, y: VarId) -> Result<VarId, CoptError> {
        let term = BilinearTerm::new(&mut self.m, &name, x, y)?;
        mccormick(&mut self.m, &term)?;
        Ok(term.w)
    }

    fn build(mut self) -> Result<CoptModel, CoptError> {
        let s = self.s;
        let steps = s.horizon + 1;
        let nr = s.robots.len();
        let ns = s.object.surfaces.len();
        let nv = s.object.vertices.len();
        let h = s.step;
        let radius = s.object.radius() + 0.01;
        let mut terms = Vec::new();

        let dq = match self.pose_box {
            Some(b) => {
                let mut dq = Vec::with_capacity(steps);
                for t in 0..steps {
                    let row = [
                        self.cont(format!("dq_{t}_0"), -b[0], b[0])?,
                        self.cont(format!("dq_{t}_1"), -b[1], b[1])?,
                        self.cont(format!("dq_{t}_2"), -b[2], b[2])?,
                    ];
                    dq.push(row);
                }
                let pb = &s.pose_bounds;
                for t in 0..s.horizon {
                    for c in 0..3 {
                        let kr = self.kin.rates[t][c];
                        let r = self.cont(format!("dqd_{t}_{c}"), pb.rate_lower[c] - kr, pb.rate_upper[c] - kr)?;
                        let e = LinExpr::var(dq[t + 1][c]).term(dq[t][c], -1.0).term(r, -h);
                        self.eq(&e, 0.0)?;
                    }
                }
                Some(dq)
            }
            None => None,
        };
        let shift = self.pose_box.map_or(0.0, |b| b[0].max(b[1]));

        let mut ix = CoptIndex {
            z: Vec::with_capacity(steps),
            alpha: Vec::with_capacity(steps),
            p_world: Vec::with_capacity(steps),
            p_rate: Vec::new(),
            lambda_n: Vec::with_capacity(steps),
            lambda_s: Vec::with_capacity(steps),
            w: Vec::with_capacity(steps),
            u: Vec::with_capacity(steps),
            f: Vec::with_capacity(steps),
            dq: dq.clone(),
        };

        for t in 0..steps {
            let q = self.kin.poses[t];
            let th = q[2];
            let com = s.object.com.rotated(th) + Vec2::new(q[0], q[1]);
            let dth_alpha_needed = dq.is_some();
            let (mut zt, mut at, mut pt, mut lnt, mut lst, mut wt, mut ut) =
                (vec![], vec![], vec![], vec![], vec![], vec![], vec![]);
            // force balance accumulators
            let mut fx = LinExpr::new();
            let mut fy = LinExpr::new();
            let mut moment = LinExpr::new();

            for (i, robot) in s.robots.iter().enumerate() {
                let gated = robot.gated(t, &q);
                let alpha = self.cont(format!("alpha_{t}_{i}"), 0.0, self.lmax)?;
                let px = self.cont(format!("px_{t}_{i}"), com.x - radius - shift, com.x + radius + shift)?;
                let py = self.cont(format!("py_{t}_{i}"), com.y - radius - shift, com.y + radius + shift)?;
                let u = [
                    self.cont(format!("ux_{t}_{i}"), -2.0 * self.fmax, 2.0 * self.fmax)?,
                    self.cont(format!("uy_{t}_{i}"), -2.0 * self.fmax, 2.0 * self.fmax)?,
                ];
                let dth_alpha = match (&dq, dth_alpha_needed) {
                    (Some(dq), true) => Some(self.product(format!("dthal_{t}_{i}"), dq[t][2], alpha)?),
                    _ => None,
                };
                let mut excl = LinExpr::new();
                let mut ux = LinExpr::var(u[0]).scaled(-1.0);
                let mut uy = LinExpr::var(u[1]).scaled(-1.0);
                let (mut zi, mut lni, mut lsi, mut wi) = (vec![], vec![], vec![], vec![]);
                for (p, surf) in s.object.surfaces.iter().enumerate() {
                    let z = self.m.add_binary(format!("z_{t}_{i}_{p}"));
                    self.m.set_priority(z, -2 * t as i32);
                    excl.add_term(z, 1.0);
                    let cap = if gated { 0.0 } else { self.fmax };
                    let ln = self.cont(format!("ln_{t}_{i}_{p}"), 0.0, cap)?;
                    let ls = self.cont(format!("ls_{t}_{i}_{p}"), -cap, cap)?;
                    let ind = LinExpr::var(z);
                    // z = 0 ⟹ no normal force, and the cone then zeroes λ_s
                    if !gated {
                        self.le(&LinExpr::var(ln).term(z, -self.fmax), 0.0)?;
                    }
                    self.le(&LinExpr::var(ls).term(ln, -robot.mu), 0.0)?;
                    self.le(&LinExpr::var(ls).scaled(-1.0).term(ln, -robot.mu), 0.0)?;
                    // z = 1 ⟹ contact point on the segment
                    if surf.length < self.lmax {
                        implication_auto(&mut self.m, &ind, ActiveWhen::One, &LinExpr::var(alpha).plus_const(-surf.length))?;
                    }
                    let a_w = surf.a.rotated(th) + Vec2::new(q[0], q[1]);
                    let t_w = surf.tangent().rotated(th);
                    let mut gx = LinExpr::var(px).term(alpha, -t_w.x).plus_const(-a_w.x);
                    let mut gy = LinExpr::var(py).term(alpha, -t_w.y).plus_const(-a_w.y);
                    if let (Some(dq), Some(da)) = (&dq, dth_alpha) {
                        let ad = surf.a.rotated_deriv(th);
                        let td = surf.tangent().rotated_deriv(th);
                        gx = gx.term(dq[t][0], -1.0).term(dq[t][2], -ad.x).term(da, -td.x);
                        gy = gy.term(dq[t][1], -1.0).term(dq[t][2], -ad.y).term(da, -td.y);
                    }
                    implication_eq(&mut self.m, &ind, ActiveWhen::One, &gx)?;
                    implication_eq(&mut self.m, &ind, ActiveWhen::One, &gy)?;

                    // u = Σ_p R (−λ_n n + λ_s t)
                    let n_w = surf.outward_normal.rotated(th);
                    ux = ux.term(ln, -n_w.x).term(ls, t_w.x);
                    uy = uy.term(ln, -n_w.y).term(ls, t_w.y);
                    if let Some(dq) = &dq {
                        let nd = surf.outward_normal.rotated_deriv(th);
                        let td = surf.tangent().rotated_deriv(th);
                        let dl = self.product(format!("dthln_{t}_{i}_{p}"), dq[t][2], ln)?;
                        let ds = self.product(format!("dthls_{t}_{i}_{p}"), dq[t][2], ls)?;
                        ux = ux.term(dl, -nd.x).term(ds, td.x);
                        uy = uy.term(dl, -nd.y).term(ds, td.y);
                    }

                    // moment about the COM in body coordinates:
                    // (a − c + α t) × (−λ_n n + λ_s t)
                    let arm = surf.a - s.object.com;
                    let term = BilinearTerm::new(&mut self.m, &format!("w_{t}_{i}_{p}"), alpha, ln)?;
                    moment = moment
                        .term(ln, cross(arm, -surf.outward_normal))
                        .term(ls, cross(arm, surf.tangent()))
                        .term(term.w, cross(surf.tangent(), -surf.outward_normal));
                    zi.push(z);
                    lni.push(ln);
                    lsi.push(ls);
                    wi.push(term.w);
                    let region_width = self.lmax / self.relaxation.regions() as f64;
                    terms.push(TermHandle { t, i, p, term, gap: region_width * cap / 4.0 });
                }
                self.eq(&excl, 1.0)?;
                self.eq(&ux, 0.0)?;
                self.eq(&uy, 0.0)?;
                fx.add_term(u[0], 1.0);
                fy.add_term(u[1], 1.0);

                let group: Vec<BilinearTerm> = terms[terms.len() - ns..].iter().map(|h| h.term).collect();
                match self.relaxation {
                    Relaxation::McCormick => {
                        for term in &group {
                            mccormick(&mut self.m, term)?;
                        }
                    }
                    Relaxation::NaivePiecewise(c) => {
                        let spec = PartitionSpec::uniform(&group[0], Axis::X, c)?;
                        let r = piecewise_naive_shared(&mut self.m, &group, &spec)?;
                        for b in r.eta {
                            self.m.set_priority(b, -2 * t as i32 - 1);
                        }
                    }
                    Relaxation::BinaryEncoded(c) => {
                        let spec = PartitionSpec::uniform(&group[0], Axis::X, c)?;
                        let r = binary_encoded_shared(&mut self.m, &group, &spec)?;
                        for b in r.nu {
                            self.m.set_priority(b, -2 * t as i32 - 1);
                        }
                    }
                }
                zt.push(zi);
                at.push(alpha);
                pt.push([px, py]);
                lnt.push(lni);
                lst.push(lsi);
                wt.push(wi);
                ut.push(u);
            }

            let mut ft = vec![None; nv];
            for v in 0..nv {
                if !self.kin.contact_map[v][t] {
                    continue;
                }
                let body = s.object.vertices[v];
                let e = body.rotated(th) + Vec2::new(q[0], q[1]);
                let hs_idx = self.kin.contact_halfspace[v][t].or_else(|| s.env.closest(e).map(|c| c.0)).unwrap();
                let hs = s.env.halfspaces[hs_idx];
                let (n, tg) = (hs.normal, hs.tangent());
                let f = [
                    self.cont(format!("fx_{t}_{v}"), -self.fext, self.fext)?,
                    self.cont(format!("fy_{t}_{v}"), -self.fext, self.fext)?,
                ];
                let mu = s.object.mu_env[v];
                let fnorm = LinExpr::new().term(f[0], n.x).term(f[1], n.y);
                let fs = LinExpr::new().term(f[0], tg.x).term(f[1], tg.y);
                self.le(&fnorm.scaled(-1.0), 0.0)?;
                let mut a = fs.clone();
                a.add_expr(&fnorm, -mu);
                self.le(&a, 0.0)?;
                let mut b = fs.scaled(-1.0);
                b.add_expr(&fnorm, -mu);
                self.le(&b, 0.0)?;
                if self.kin.slip_map[v][t] {
                    // friction on the cone boundary, opposing the slip
                    let sign = self.kin.slip_velocity[v][t].signum();
                    let mut pin = fs.clone();
                    pin.add_expr(&fnorm, sign * mu);
                    self.eq(&pin, 0.0)?;
                }
                fx.add_term(f[0], 1.0);
                fy.add_term(f[1], 1.0);
                let arm = (body - s.object.com).rotated(th);
                moment = moment.term(f[1], arm.x).term(f[0], -arm.y);
                if let Some(dq) = &dq {
                    let ad = (body - s.object.com).rotated_deriv(th);
                    let dfx = self.product(format!("dthfx_{t}_{v}"), dq[t][2], f[0])?;
                    let dfy = self.product(format!("dthfy_{t}_{v}"), dq[t][2], f[1])?;
                    moment = moment.term(dfy, ad.x).term(dfx, -ad.y);
                    // the contact keeps its offset from the surface
                    let rd = body.rotated_deriv(th);
                    let keep = LinExpr::new().term(dq[t][0], n.x).term(dq[t][1], n.y).term(dq[t][2], n.dot(rd));
                    self.eq(&keep, 0.0)?;
                }
                ft[v] = Some(f);
            }
            if let Some(dq) = &dq {
                // no vertex may sink through a surface, to first order
                for (v, body) in s.object.vertices.iter().enumerate() {
                    if self.kin.contact_map[v][t] {
                        continue;
                    }
                    let e = body.rotated(th) + Vec2::new(q[0], q[1]);
                    let rd = body.rotated_deriv(th);
                    for hs in &s.env.halfspaces {
                        let d = hs.distance(e);
                        let row = LinExpr::new()
                            .term(dq[t][0], -hs.normal.x)
                            .term(dq[t][1], -hs.normal.y)
                            .term(dq[t][2], -hs.normal.dot(rd));
                        self.le(&row, d.max(0.0))?;
                    }
                }
            }
            let weight = s.weight();
            self.eq(&fx, -weight.x)?;
            self.eq(&fy, -weight.y)?;
            self.eq(&moment, 0.0)?;

            ix.z.push(zt);
            ix.alpha.push(at);
            ix.p_world.push(pt);
            ix.lambda_n.push(lnt);
            ix.lambda_s.push(lst);
            ix.w.push(wt);
            ix.u.push(ut);
            ix.f.push(ft);
        }

        // robot motion between steps
        for t in 0..s.horizon {
            let mut rates = Vec::with_capacity(nr);
            for (i, robot) in s.robots.iter().enumerate() {
                let lb = [robot.vel_lb.x, robot.vel_lb.y];
                let ub = [robot.vel_ub.x, robot.vel_ub.y];
                let r = [
                    self.cont(format!("pdx_{t}_{i}"), lb[0], ub[0])?,
                    self.cont(format!("pdy_{t}_{i}"), lb[1], ub[1])?,
                ];
                for c in 0..2 {
                    let e = LinExpr::var(ix.p_world[t + 1][i][c]).term(ix.p_world[t][i][c], -1.0).term(r[c], -h);
                    self.eq(&e, 0.0)?;
                }
                rates.push(r);
            }
            ix.p_rate.push(rates);
        }

        // contact changes only with zero normal force on both sides
        for t in 0..s.horizon {
            for i in 0..nr {
                for p in 0..ns {
                    let (z0, z1) = (ix.z[t][i][p], ix.z[t + 1][i][p]);
                    for ln in [ix.lambda_n[t][i][p], ix.lambda_n[t + 1][i][p]] {
                        if self.m.var(ln).upper == 0.0 {
                            continue;
                        }
                        self.le(&LinExpr::var(ln).term(z0, self.fmax).term(z1, -self.fmax), self.fmax)?;
                        self.le(&LinExpr::var(ln).term(z1, self.fmax).term(z0, -self.fmax), self.fmax)?;
                    }
                }
            }
        }
        self.m.set_feasibility();

        Ok(CoptModel {
            model: self.m,
            index: ix,
            terms,
            relaxation: self.relaxation,
            scenario: self.s.clone(),
            kin: self.kin.clone(),
            pose_box: self.pose_box,
            cuts: Vec::new(),
        })
    }
}

/// Worst residual per constraint family, recomputed from geometry.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub force_balance: f64,
    /// Moment residual with true products, per step.
    pub moment: Vec<f64>,
    /// Envelope-gap bound on the moment residual, per step.
    pub moment_bound: Vec<f64>,
    pub exclusivity: f64,
    pub inactive_force: f64,
    pub conversion: f64,
    pub membership: f64,
    pub robot_friction: f64,
    pub env_friction: f64,
    pub slip_pin: f64,
    pub stable_change: f64,
    pub gated: f64,
    pub velocity: f64,
}

impl ScheduleReport {
    /// True when every exact family is within `tol` and the moment residual
    /// within its gap bound plus `tol`.
    pub fn passes(&self, tol: f64) -> bool {
        let exact = [
            self.force_balance,
            self.exclusivity,
            self.inactive_force,
            self.conversion,
            self.membership,
            self.robot_friction,
            self.env_friction,
            self.slip_pin,
            self.stable_change,
            self.gated,
            self.velocity,
        ];
        exact.iter().all(|v| *v <= tol) && self.moment.iter().zip(&self.moment_bound).all(|(m, b)| *m <= b + tol)
    }
}

/// Gap bound of one relaxed product over `α ∈ [0, α_max]`, `λ_n ∈ [0, λ_max]`.
pub fn term_gap(relaxation: Relaxation, alpha_max: f64, lambda_max: f64) -> f64 {
    alpha_max / relaxation.regions() as f64 * lambda_max / 4.0
}

/// Re-evaluates a schedule against the scenario and kinematic maps with exact
/// products. Poses are taken from the schedule.
pub fn check_schedule(s: &Scenario, kin: &KinematicsSolution, sch: &ContactSchedule) -> ScheduleReport {
    let mut r = ScheduleReport::default();
    let weight = s.weight();
    let fmax = ROBOT_FORCE_FACTOR * weight.norm();
    let lmax = s.object.surfaces.iter().map(|p| p.length).fold(0.0, f64::max);
    let steps = sch.poses.len();
    let up = |slot: &mut f64, v: f64| *slot = slot.max(v);
    for t in 0..steps {
        let q = sch.poses[t];
        let th = q[2];
        let com = s.object.com.rotated(th) + Vec2::new(q[0], q[1]);
        let mut force = weight;
        let mut moment = 0.0;
        let mut bound = 0.0;
        for (i, robot) in s.robots.iter().enumerate() {
            let count = sch.z[t][i].iter().filter(|b| **b).count();
            up(&mut r.exclusivity, (count as f64 - 1.0).abs());
            let mut u = Vec2::zero();
            let gated = robot.gated(t, &kin.poses[t]);
            for (p, surf) in s.object.surfaces.iter().enumerate() {
                let [ln, ls] = sch.lambda[t][i][p];
                if !sch.z[t][i][p] {
                    up(&mut r.inactive_force, ln.hypot(ls));
                } else {
                    up(&mut r.membership, -sch.alpha[t][i]);
                    up(&mut r.membership, sch.alpha[t][i] - surf.length);
                    let expect = contact_point(s, &q, p, sch.alpha[t][i]);
                    up(&mut r.membership, (expect - Vec2::new(sch.p_world[t][i][0], sch.p_world[t][i][1])).norm());
                    bound += term_gap(sch.relaxation, lmax, if gated { 0.0 } else { fmax });
                }
                up(&mut r.robot_friction, ls.abs() - robot.mu * ln);
                up(&mut r.robot_friction, -ln);
                if gated {
                    up(&mut r.gated, ln.hypot(ls));
                }
                u = u + surf.local_force_to_body(ln, ls).rotated(th);
            }
            let su = Vec2::new(sch.u[t][i][0], sch.u[t][i][1]);
            up(&mut r.conversion, (u - su).norm());
            force = force + su;
            let pw = Vec2::new(sch.p_world[t][i][0], sch.p_world[t][i][1]);
            moment += (pw - com).cross(su);
        }
        for v in 0..s.object.vertices.len() {
            let f = Vec2::new(sch.f[t][v][0], sch.f[t][v][1]);
            if !kin.contact_map[v][t] {
                up(&mut r.env_friction, f.norm());
                continue;
            }
            let e = s.object.vertices[v].rotated(th) + Vec2::new(q[0], q[1]);
            let hs = s.env.halfspaces[kin.contact_halfspace[v][t].unwrap_or(0)];
            let (fnorm, fs) = (hs.normal.dot(f), hs.tangent().dot(f));
            let mu = s.object.mu_env[v];
            up(&mut r.env_friction, -fnorm);
            up(&mut r.env_friction, fs.abs() - mu * fnorm);
            if kin.slip_map[v][t] {
                up(&mut r.slip_pin, (fs + kin.slip_velocity[v][t].signum() * mu * fnorm).abs());
            }
            force = force + f;
            moment += (e - com).cross(f);
        }
        up(&mut r.force_balance, force.norm());
        r.moment.push(moment.abs());
        r.moment_bound.push(bound);
        if t + 1 < steps {
            for i in 0..s.robots.len() {
                for p in 0..s.object.surfaces.len() {
                    if sch.z[t][i][p] != sch.z[t + 1][i][p] {
                        up(&mut r.stable_change, sch.lambda[t][i][p][0].abs());
                        up(&mut r.stable_change, sch.lambda[t + 1][i][p][0].abs());
                    }
                }
                let robot = &s.robots[i];
                for c in 0..2 {
                    let v = (sch.p_world[t + 1][i][c] - sch.p_world[t][i][c]) / s.step;
                    let (lo, hi) = if c == 0 { (robot.vel_lb.x, robot.vel_ub.x) } else { (robot.vel_lb.y, robot.vel_ub.y) };
                    up(&mut r.velocity, (lo - v).max(v - hi) * s.step);
                }
            }
        }
    }
    r
}
