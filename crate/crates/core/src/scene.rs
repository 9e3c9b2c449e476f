//! Planar geometry and problem-instance model.
//!
//! Everything here is generic over the scalar type; the optimizers downstream
//! work on `Scenario<f64>` (re-exported at the crate root as [`crate::Scenario`]).
//!
//! Conventions: world frame has `y` up, bodies are polygons with
//! counter-clockwise vertex order, and a surface's local frame has its first
//! axis along the outward normal and its second axis along the edge direction
//! `b - a`.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{wrap_angle, Real};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("index {index} out of range for {what} (len {len})")]
    IndexOutOfRange { what: &'static str, index: usize, len: usize },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("malformed scenario file: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2<S> {
    pub x: S,
    pub y: S,
}

impl<S: Real> Vec2<S> {
    pub fn new(x: S, y: S) -> Self {
        Self { x, y }
    }

    pub fn zero() -> Self {
        Self::new(S::zero(), S::zero())
    }

    pub fn dot(self, o: Self) -> S {
        self.x * o.x + self.y * o.y
    }

    /// Scalar (z-component) cross product.
    pub fn cross(self, o: Self) -> S {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> S {
        self.x.hypot(self.y)
    }

    /// Counter-clockwise quarter turn.
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    pub fn rotated(self, theta: S) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Derivative of `rotated(theta)` with respect to `theta`.
    pub fn rotated_deriv(self, theta: S) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(-s * self.x - c * self.y, c * self.x - s * self.y)
    }

    pub fn to_array(self) -> [S; 2] {
        [self.x, self.y]
    }
}

impl<S: Real> Add for Vec2<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<S: Real> Sub for Vec2<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<S: Real> Mul<S> for Vec2<S> {
    type Output = Self;
    fn mul(self, k: S) -> Self {
        Self::new(self.x * k, self.y * k)
    }
}

impl<S: Real> Neg for Vec2<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Row-major 2x2 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2<S> {
    pub m: [[S; 2]; 2],
}

impl<S: Real> Mat2<S> {
    pub fn from_cols(c0: Vec2<S>, c1: Vec2<S>) -> Self {
        Self { m: [[c0.x, c1.x], [c0.y, c1.y]] }
    }

    pub fn rotation(theta: S) -> Self {
        let (s, c) = theta.sin_cos();
        Self { m: [[c, -s], [s, c]] }
    }

    pub fn col(&self, j: usize) -> Vec2<S> {
        Vec2::new(self.m[0][j], self.m[1][j])
    }

    pub fn apply(&self, v: Vec2<S>) -> Vec2<S> {
        Vec2::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y,
            self.m[1][0] * v.x + self.m[1][1] * v.y,
        )
    }

    pub fn transpose(&self) -> Self {
        Self { m: [[self.m[0][0], self.m[1][0]], [self.m[0][1], self.m[1][1]]] }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut m = [[S::zero(); 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j];
            }
        }
        Self { m }
    }

    pub fn det(&self) -> S {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }
}

/// Object pose in the plane. `theta` is kept in `(-pi, pi]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose2<S> {
    pub x: S,
    pub y: S,
    pub theta: S,
}

impl<S: Real> Pose2<S> {
    pub fn new(x: S, y: S, theta: S) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn identity() -> Self {
        Self::new(S::zero(), S::zero(), S::zero())
    }

    pub fn translation(&self) -> Vec2<S> {
        Vec2::new(self.x, self.y)
    }

    pub fn transform_point(&self, p: Vec2<S>) -> Vec2<S> {
        p.rotated(self.theta) + self.translation()
    }

    pub fn inverse_transform_point(&self, p: Vec2<S>) -> Vec2<S> {
        (p - self.translation()).rotated(-self.theta)
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        let t = self.transform_point(other.translation());
        Self::new(t.x, t.y, self.theta + other.theta)
    }

    pub fn inverse(&self) -> Self {
        let t = (-self.translation()).rotated(-self.theta);
        Self::new(t.x, t.y, -self.theta)
    }

    pub fn to_array(&self) -> [S; 3] {
        [self.x, self.y, self.theta]
    }
}

/// A straight contact surface of the object, expressed in the body frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surface<S> {
    pub id: usize,
    pub a: Vec2<S>,
    pub b: Vec2<S>,
    pub outward_normal: Vec2<S>,
    pub length: S,
}

impl<S: Real> Surface<S> {
    pub fn new(id: usize, a: Vec2<S>, b: Vec2<S>, outward_normal: Vec2<S>) -> Result<Self, SceneError> {
        let d = b - a;
        let length = d.norm();
        if !(length > S::zero()) {
            return Err(SceneError::Geometry(format!("surface {id} has zero length")));
        }
        let tol = S::lit(1e-9);
        if (outward_normal.norm() - S::one()).abs() > tol {
            return Err(SceneError::Geometry(format!("surface {id} normal is not unit length")));
        }
        if (outward_normal.dot(d) / length).abs() > tol {
            return Err(SceneError::Geometry(format!("surface {id} normal is not orthogonal to the edge")));
        }
        Ok(Self { id, a, b, outward_normal, length })
    }

    /// Unit vector from `a` to `b` in the body frame.
    pub fn tangent(&self) -> Vec2<S> {
        (self.b - self.a) * (S::one() / self.length)
    }

    /// Body-frame point at surface coordinate `alpha` (distance from `a`).
    pub fn point_at(&self, alpha: S) -> Vec2<S> {
        self.a + self.tangent() * alpha
    }

    /// Body-frame force exerted on the object by a contact pressing with
    /// normal magnitude `lambda_n` (compressive, into the object) and
    /// tangential component `lambda_s` along the tangent.
    pub fn local_force_to_body(&self, lambda_n: S, lambda_s: S) -> Vec2<S> {
        self.outward_normal * (-lambda_n) + self.tangent() * lambda_s
    }
}

/// Rotation mapping the surface's local `(normal, tangent)` axes to world
/// axes at pose `q`, and the world position of endpoint `a`.
pub fn surface_frame<S: Real>(surface: &Surface<S>, q: &Pose2<S>) -> (Mat2<S>, Vec2<S>) {
    let n = surface.outward_normal.rotated(q.theta);
    let t = surface.tangent().rotated(q.theta);
    (Mat2::from_cols(n, t), q.transform_point(surface.a))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectModel<S> {
    pub mass: S,
    pub vertices: Vec<Vec2<S>>,
    pub surfaces: Vec<Surface<S>>,
    pub com: Vec2<S>,
    pub mu_env: Vec<S>,
}

fn signed_area<S: Real>(pts: &[Vec2<S>]) -> S {
    let n = pts.len();
    let mut acc = S::zero();
    for i in 0..n {
        acc = acc + pts[i].cross(pts[(i + 1) % n]);
    }
    acc * S::lit(0.5)
}

fn segments_intersect<S: Real>(p1: Vec2<S>, p2: Vec2<S>, p3: Vec2<S>, p4: Vec2<S>) -> bool {
    let d1 = (p4 - p3).cross(p1 - p3);
    let d2 = (p4 - p3).cross(p2 - p3);
    let d3 = (p2 - p1).cross(p3 - p1);
    let d4 = (p2 - p1).cross(p4 - p1);
    ((d1 > S::zero() && d2 < S::zero()) || (d1 < S::zero() && d2 > S::zero()))
        && ((d3 > S::zero() && d4 < S::zero()) || (d3 < S::zero() && d4 > S::zero()))
}

fn point_in_polygon<S: Real>(p: Vec2<S>, poly: &[Vec2<S>]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

impl<S: Real> ObjectModel<S> {
    /// Builds an object whose contact surfaces are its polygon edges.
    pub fn from_polygon(mass: S, vertices: Vec<Vec2<S>>, com: Vec2<S>, mu_env: S) -> Result<Self, SceneError> {
        let n = vertices.len();
        let pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::with_surfaces(mass, vertices, com, vec![mu_env; n], &pairs, None)
    }

    /// Builds an object with explicit surfaces given as vertex index pairs.
    /// Normals default to the outward edge normal.
    pub fn with_surfaces(
        mass: S,
        vertices: Vec<Vec2<S>>,
        com: Vec2<S>,
        mu_env: Vec<S>,
        surface_pairs: &[(usize, usize)],
        normals: Option<&[Vec2<S>]>,
    ) -> Result<Self, SceneError> {
        let n = vertices.len();
        if n < 3 {
            return Err(SceneError::Geometry("object polygon needs at least 3 vertices".into()));
        }
        if !(mass > S::zero()) {
            return Err(SceneError::Geometry("mass must be positive".into()));
        }
        if mu_env.len() != n {
            return Err(SceneError::Geometry(format!("expected {n} friction coefficients, got {}", mu_env.len())));
        }
        if mu_env.iter().any(|m| !(*m >= S::zero())) {
            return Err(SceneError::Geometry("friction coefficients must be nonnegative".into()));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(vertices[i], vertices[(i + 1) % n], vertices[j], vertices[(j + 1) % n]) {
                    return Err(SceneError::Geometry("object polygon is self-intersecting".into()));
                }
            }
        }
        let area = signed_area(&vertices);
        if area == S::zero() {
            return Err(SceneError::Geometry("object polygon is degenerate".into()));
        }
        if !point_in_polygon(com, &vertices) {
            return Err(SceneError::Geometry("center of mass lies outside the polygon".into()));
        }
        let ccw = area > S::zero();
        let mut surfaces = Vec::with_capacity(surface_pairs.len());
        for (id, &(ia, ib)) in surface_pairs.iter().enumerate() {
            for idx in [ia, ib] {
                if idx >= n {
                    return Err(SceneError::IndexOutOfRange { what: "vertex", index: idx, len: n });
                }
            }
            let (a, b) = (vertices[ia], vertices[ib]);
            let normal = match normals {
                Some(ns) => ns[id],
                None => {
                    let d = b - a;
                    let l = d.norm();
                    // outward is to the right of the edge for CCW polygons
                    let right = Vec2::new(d.y, -d.x) * (S::one() / l);
                    if ccw {
                        right
                    } else {
                        -right
                    }
                }
            };
            surfaces.push(Surface::new(id, a, b, normal)?);
        }
        Ok(Self { mass, vertices, surfaces, com, mu_env })
    }

    /// Axis-aligned rectangle centered at the body origin.
    pub fn rectangle(width: S, height: S, mass: S, mu_env: S) -> Result<Self, SceneError> {
        let (hw, hh) = (width * S::lit(0.5), height * S::lit(0.5));
        let vertices = vec![Vec2::new(-hw, -hh), Vec2::new(hw, -hh), Vec2::new(hw, hh), Vec2::new(-hw, hh)];
        Self::from_polygon(mass, vertices, Vec2::zero(), mu_env)
    }

    /// Largest distance from the center of mass to any vertex.
    pub fn radius(&self) -> S {
        self.vertices.iter().map(|v| (*v - self.com).norm()).fold(S::zero(), S::max)
    }
}

/// World position of vertex `v` at pose `q`.
pub fn vertex_world<S: Real>(object: &ObjectModel<S>, v: usize, q: &Pose2<S>) -> Result<Vec2<S>, SceneError> {
    let body = object
        .vertices
        .get(v)
        .ok_or(SceneError::IndexOutOfRange { what: "vertex", index: v, len: object.vertices.len() })?;
    Ok(q.transform_point(*body))
}

/// Free-space halfspace `{x : normal · x >= offset}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Halfspace<S> {
    pub normal: Vec2<S>,
    pub offset: S,
}

impl<S: Real> Halfspace<S> {
    pub fn new(normal: Vec2<S>, offset: S) -> Result<Self, SceneError> {
        if (normal.norm() - S::one()).abs() > S::lit(1e-9) {
            return Err(SceneError::Geometry("halfspace normal must be unit length".into()));
        }
        Ok(Self { normal, offset })
    }

    pub fn distance(&self, p: Vec2<S>) -> S {
        self.normal.dot(p) - self.offset
    }

    /// Tangent direction: the normal turned clockwise a quarter turn.
    pub fn tangent(&self) -> Vec2<S> {
        Vec2::new(self.normal.y, -self.normal.x)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvModel<S> {
    pub halfspaces: Vec<Halfspace<S>>,
}

impl<S: Real> EnvModel<S> {
    /// Index and signed distance of the closest halfspace boundary to `p`.
    /// `None` for an empty environment.
    pub fn closest(&self, p: Vec2<S>) -> Option<(usize, S)> {
        self.halfspaces
            .iter()
            .enumerate()
            .map(|(i, h)| (i, h.distance(p)))
            .fold(None, |best, cur| match best {
                Some((_, d)) if d <= cur.1 => best,
                _ => Some(cur),
            })
    }
}

/// Forbids robot contact at listed steps, and at any step whose object pose
/// satisfies `coeffs · q >= rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceGate<S> {
    pub coeffs: Option<[S; 3]>,
    pub rhs: S,
    #[serde(default)]
    pub steps: Vec<usize>,
}

impl<S: Real> WorkspaceGate<S> {
    pub fn forbids(&self, t: usize, q: &[S; 3]) -> bool {
        if self.steps.contains(&t) {
            return true;
        }
        match self.coeffs {
            Some(c) => c[0] * q[0] + c[1] * q[1] + c[2] * q[2] >= self.rhs,
            None => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec<S> {
    pub id: usize,
    pub mu: S,
    pub vel_lb: Vec2<S>,
    pub vel_ub: Vec2<S>,
    pub workspace_gates: Vec<WorkspaceGate<S>>,
}

impl<S: Real> RobotSpec<S> {
    pub fn new(id: usize, mu: S, vel_limit: S) -> Self {
        Self {
            id,
            mu,
            vel_lb: Vec2::new(-vel_limit, -vel_limit),
            vel_ub: Vec2::new(vel_limit, vel_limit),
            workspace_gates: Vec::new(),
        }
    }

    pub fn gated(&self, t: usize, q: &[S; 3]) -> bool {
        self.workspace_gates.iter().any(|g| g.forbids(t, q))
    }
}

/// Per-step box bounds on the pose and its rate, shared by all steps,
/// with optional pinning of the first and last pose.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseBounds<S> {
    pub lower: [S; 3],
    pub upper: [S; 3],
    pub rate_lower: [S; 3],
    pub rate_upper: [S; 3],
    pub pin_start: bool,
    pub pin_goal: bool,
}

impl<S: Real> PoseBounds<S> {
    pub fn loose() -> Self {
        let big = S::lit(10.0);
        let rate = S::lit(5.0);
        Self {
            lower: [-big, -big, -S::lit(7.0)],
            upper: [big, big, S::lit(7.0)],
            rate_lower: [-rate; 3],
            rate_upper: [rate; 3],
            pin_start: true,
            pin_goal: false,
        }
    }

    pub fn contains(&self, q: &[S; 3]) -> bool {
        (0..3).all(|k| q[k] >= self.lower[k] && q[k] <= self.upper[k])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario<S> {
    pub name: String,
    pub object: ObjectModel<S>,
    pub robots: Vec<RobotSpec<S>>,
    pub env: EnvModel<S>,
    pub q_start: Pose2<S>,
    pub q_goal: Pose2<S>,
    pub horizon: usize,
    pub step: S,
    pub gravity: Vec2<S>,
    pub pose_bounds: PoseBounds<S>,
}

impl<S: Real> Scenario<S> {
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.horizon < 2 {
            return Err(SceneError::Scenario("horizon must be at least 2".into()));
        }
        if !(self.step > S::zero()) {
            return Err(SceneError::Scenario("step must be positive".into()));
        }
        for (label, q) in [("start", &self.q_start), ("goal", &self.q_goal)] {
            if !self.pose_bounds.contains(&q.to_array()) {
                return Err(SceneError::Scenario(format!("{label} pose outside pose bounds")));
            }
        }
        for r in &self.robots {
            if !(r.vel_lb.x < r.vel_ub.x && r.vel_lb.y < r.vel_ub.y) {
                return Err(SceneError::Scenario(format!("robot {} velocity bounds are empty", r.id)));
            }
            if !(r.mu >= S::zero()) {
                return Err(SceneError::Scenario(format!("robot {} friction must be nonnegative", r.id)));
            }
        }
        for h in &self.env.halfspaces {
            if (h.normal.norm() - S::one()).abs() > S::lit(1e-9) {
                return Err(SceneError::Scenario("environment normal must be unit length".into()));
            }
        }
        Ok(())
    }

    /// Unwrapped goal angle: start angle plus the shortest signed rotation.
    pub fn goal_theta_unwrapped(&self) -> S {
        self.q_start.theta + wrap_angle(self.q_goal.theta - self.q_start.theta)
    }

    /// Linear interpolation from start to goal at step `t` of the horizon.
    pub fn reference(&self, t: usize) -> [S; 3] {
        let s = S::from_usize(t).unwrap() / S::from_usize(self.horizon).unwrap();
        let (a, b) = (self.q_start, self.q_goal);
        let th_goal = self.goal_theta_unwrapped();
        [a.x + (b.x - a.x) * s, a.y + (b.y - a.y) * s, a.theta + (th_goal - a.theta) * s]
    }

    pub fn weight(&self) -> Vec2<S> {
        self.gravity * self.object.mass
    }
}

/// Per-vertex signed distance: the minimum over environment halfspaces.
/// An empty environment yields `+inf` for every vertex.
pub fn sdf<S: Real>(scenario: &Scenario<S>, q: &Pose2<S>) -> Vec<S> {
    sdf_raw(&scenario.object, &scenario.env, &q.to_array())
}

/// `sdf` for an unnormalized pose array `[x, y, theta]`.
pub fn sdf_raw<S: Real>(object: &ObjectModel<S>, env: &EnvModel<S>, q: &[S; 3]) -> Vec<S> {
    object
        .vertices
        .iter()
        .map(|v| {
            let p = v.rotated(q[2]) + Vec2::new(q[0], q[1]);
            env.halfspaces.iter().map(|h| h.distance(p)).fold(S::infinity(), S::min)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// JSON scenario files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    pub a: usize,
    pub b: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Friction {
    Uniform(f64),
    PerVertex(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub mass: f64,
    pub vertices: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub com: Option<[f64; 2]>,
    pub mu_env: Friction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surfaces: Option<Vec<SurfaceSpec>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<[f64; 3]>,
    #[serde(default)]
    pub rhs: f64,
    #[serde(default)]
    pub steps: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotFileSpec {
    pub mu: f64,
    pub vel_lb: [f64; 2],
    pub vel_ub: [f64; 2],
    #[serde(default)]
    pub gates: Vec<GateSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfspaceSpec {
    pub normal: [f64; 2],
    pub offset: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseBoundsSpec {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
    pub rate_lower: [f64; 3],
    pub rate_upper: [f64; 3],
    #[serde(default = "default_true")]
    pub pin_start: bool,
    #[serde(default)]
    pub pin_goal: bool,
}

fn default_true() -> bool {
    true
}

fn default_gravity() -> [f64; 2] {
    [0.0, -9.81]
}

/// On-disk scenario schema. Lengths in meters, angles in radians, mass in kg.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: String,
    pub object: ObjectSpec,
    pub robots: Vec<RobotFileSpec>,
    pub env: Vec<HalfspaceSpec>,
    pub q_start: [f64; 3],
    pub q_goal: [f64; 3],
    pub horizon: usize,
    pub step: f64,
    #[serde(default = "default_gravity")]
    pub gravity: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose_bounds: Option<PoseBoundsSpec>,
}

fn v2(a: [f64; 2]) -> Vec2<f64> {
    Vec2::new(a[0], a[1])
}

impl TryFrom<ScenarioFile> for Scenario<f64> {
    type Error = SceneError;

    fn try_from(f: ScenarioFile) -> Result<Self, SceneError> {
        let vertices: Vec<Vec2<f64>> = f.object.vertices.iter().copied().map(v2).collect();
        let n = vertices.len();
        let mu_env = match f.object.mu_env {
            Friction::Uniform(m) => vec![m; n],
            Friction::PerVertex(v) => v,
        };
        let com = f.object.com.map(v2).unwrap_or_else(Vec2::zero);
        let (pairs, normals): (Vec<(usize, usize)>, Option<Vec<Vec2<f64>>>) = match &f.object.surfaces {
            None => ((0..n).map(|i| (i, (i + 1) % n)).collect(), None),
            Some(specs) => {
                let pairs = specs.iter().map(|s| (s.a, s.b)).collect();
                let normals = if specs.iter().all(|s| s.normal.is_some()) {
                    Some(specs.iter().map(|s| v2(s.normal.unwrap())).collect())
                } else if specs.iter().any(|s| s.normal.is_some()) {
                    return Err(SceneError::Scenario("either all or no surfaces may give explicit normals".into()));
                } else {
                    None
                };
                (pairs, normals)
            }
        };
        let object = ObjectModel::with_surfaces(f.object.mass, vertices, com, mu_env, &pairs, normals.as_deref())?;
        let robots = f
            .robots
            .into_iter()
            .enumerate()
            .map(|(id, r)| RobotSpec {
                id,
                mu: r.mu,
                vel_lb: v2(r.vel_lb),
                vel_ub: v2(r.vel_ub),
                workspace_gates: r
                    .gates
                    .into_iter()
                    .map(|g| WorkspaceGate { coeffs: g.coeffs, rhs: g.rhs, steps: g.steps })
                    .collect(),
            })
            .collect();
        let halfspaces = f
            .env
            .iter()
            .map(|h| Halfspace::new(v2(h.normal), h.offset))
            .collect::<Result<Vec<_>, _>>()?;
        let pose_bounds = match f.pose_bounds {
            None => PoseBounds::loose(),
            Some(b) => PoseBounds {
                lower: b.lower,
                upper: b.upper,
                rate_lower: b.rate_lower,
                rate_upper: b.rate_upper,
                pin_start: b.pin_start,
                pin_goal: b.pin_goal,
            },
        };
        let q = |a: [f64; 3]| Pose2::new(a[0], a[1], a[2]);
        let scenario = Scenario {
            name: f.name,
            object,
            robots,
            env: EnvModel { halfspaces },
            q_start: q(f.q_start),
            q_goal: q(f.q_goal),
            horizon: f.horizon,
            step: f.step,
            gravity: v2(f.gravity),
            pose_bounds,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

impl From<&Scenario<f64>> for ScenarioFile {
    fn from(s: &Scenario<f64>) -> Self {
        let o = &s.object;
        let first = o.mu_env.first().copied().unwrap_or(0.0);
        let mu_env = if o.mu_env.iter().all(|m| *m == first) {
            Friction::Uniform(first)
        } else {
            Friction::PerVertex(o.mu_env.clone())
        };
        let index_of = |p: Vec2<f64>| o.vertices.iter().position(|v| *v == p).expect("surface endpoint is a vertex");
        ScenarioFile {
            name: s.name.clone(),
            object: ObjectSpec {
                mass: o.mass,
                vertices: o.vertices.iter().map(|v| v.to_array()).collect(),
                com: Some(o.com.to_array()),
                mu_env,
                surfaces: Some(
                    o.surfaces
                        .iter()
                        .map(|sf| SurfaceSpec {
                            a: index_of(sf.a),
                            b: index_of(sf.b),
                            normal: Some(sf.outward_normal.to_array()),
                        })
                        .collect(),
                ),
            },
            robots: s
                .robots
                .iter()
                .map(|r| RobotFileSpec {
                    mu: r.mu,
                    vel_lb: r.vel_lb.to_array(),
                    vel_ub: r.vel_ub.to_array(),
                    gates: r
                        .workspace_gates
                        .iter()
                        .map(|g| GateSpec { coeffs: g.coeffs, rhs: g.rhs, steps: g.steps.clone() })
                        .collect(),
                })
                .collect(),
            env: s
                .env
                .halfspaces
                .iter()
                .map(|h| HalfspaceSpec { normal: h.normal.to_array(), offset: h.offset })
                .collect(),
            q_start: s.q_start.to_array(),
            q_goal: s.q_goal.to_array(),
            horizon: s.horizon,
            step: s.step,
            gravity: s.gravity.to_array(),
            pose_bounds: Some(PoseBoundsSpec {
                lower: s.pose_bounds.lower,
                upper: s.pose_bounds.upper,
                rate_lower: s.pose_bounds.rate_lower,
                rate_upper: s.pose_bounds.rate_upper,
                pin_start: s.pose_bounds.pin_start,
                pin_goal: s.pose_bounds.pin_goal,
            }),
        }
    }
}

impl Scenario<f64> {
    pub fn from_json_str(text: &str) -> Result<Self, SceneError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        Self::try_from(file)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ScenarioFile::from(self)).expect("scenario serializes")
    }
}
