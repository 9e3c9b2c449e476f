//! SVG snapshots of a trajectory.
//!
//! World meters map to pixels at [`PX_PER_M`] with `y` flipped; forces are
//! drawn as arrows of [`PX_PER_N`] pixels per newton from their point of
//! application.

use std::fmt::Write;

use hcto::qopt::Trajectory;
use hcto::scene::Halfspace;
use hcto::{Scenario, Vec2};

pub const PX_PER_M: f64 = 2000.0;
pub const PX_PER_N: f64 = 40.0;
const MARGIN: f64 = 30.0;
const FORCE_EPS: f64 = 1e-9;

/// Evenly spaced step indices, always ending at the final step.
pub fn snapshot_steps(steps: usize, n: usize) -> Vec<usize> {
    if steps == 0 {
        return Vec::new();
    }
    let n = n.clamp(1, steps);
    if n == 1 {
        return vec![steps - 1];
    }
    (0..n).map(|k| ((k * (steps - 1)) as f64 / (n - 1) as f64).round() as usize).collect()
}

fn px(p: Vec2) -> (f64, f64) {
    (p.x * PX_PER_M, -p.y * PX_PER_M)
}

struct Bounds {
    lo: (f64, f64),
    hi: (f64, f64),
}

impl Bounds {
    fn new() -> Self {
        Self { lo: (f64::INFINITY, f64::INFINITY), hi: (f64::NEG_INFINITY, f64::NEG_INFINITY) }
    }

    fn add(&mut self, (x, y): (f64, f64)) {
        self.lo = (self.lo.0.min(x), self.lo.1.min(y));
        self.hi = (self.hi.0.max(x), self.hi.1.max(y));
    }
}

fn polygon(scenario: &Scenario, q: [f64; 3]) -> Vec<(f64, f64)> {
    let off = Vec2::new(q[0], q[1]);
    scenario.object.vertices.iter().map(|v| px(v.rotated(q[2]) + off)).collect()
}

fn points(poly: &[(f64, f64)]) -> String {
    poly.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect::<Vec<_>>().join(" ")
}

fn arrow(out: &mut String, from: (f64, f64), force: [f64; 2], class: &str) {
    let to = (from.0 + force[0] * PX_PER_N, from.1 - force[1] * PX_PER_N);
    let _ = writeln!(
        out,
        r#"  <line class="{class}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" marker-end="url(#head)"/>"#,
        from.0, from.1, to.0, to.1
    );
}

fn ground(out: &mut String, h: &Halfspace<f64>, b: &Bounds) {
    // a segment of the boundary long enough to cross the whole view
    let span = (b.hi.0 - b.lo.0).hypot(b.hi.1 - b.lo.1) / PX_PER_M + 1.0;
    let base = h.normal * h.offset;
    let (a, c) = (px(base - h.tangent() * span), px(base + h.tangent() * span));
    let _ = writeln!(
        out,
        r#"  <line class="env" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#,
        a.0, a.1, c.0, c.1
    );
}

pub fn render_svg(scenario: &Scenario, traj: &Trajectory, n_snapshots: usize) -> String {
    let steps = snapshot_steps(traj.steps(), n_snapshots);
    let goal = polygon(scenario, scenario.q_goal.to_array());

    let mut b = Bounds::new();
    goal.iter().for_each(|&p| b.add(p));
    let mut body = String::new();
    let n = steps.len();
    for (k, &t) in steps.iter().enumerate() {
        let q = traj.poses[t];
        let poly = polygon(scenario, q);
        poly.iter().for_each(|&p| b.add(p));
        let opacity = if n == 1 { 1.0 } else { 0.15 + 0.85 * k as f64 / (n - 1) as f64 };
        let _ = writeln!(body, r#" <g class="frame" data-step="{t}" opacity="{opacity:.3}">"#);
        let _ = writeln!(body, r#"  <polygon class="snapshot" points="{}"/>"#, points(&poly));

        for (i, pos) in traj.robot_positions.get(t).into_iter().flatten().enumerate() {
            let p = px(Vec2::new(pos[0], pos[1]));
            b.add(p);
            let u = traj.u.get(t).and_then(|u| u.get(i)).copied().unwrap_or([0.0; 2]);
            let loaded = u[0].hypot(u[1]) > FORCE_EPS;
            let class = if loaded { "robot loaded" } else { "robot" };
            let _ = writeln!(body, r#"  <circle class="{class}" cx="{:.2}" cy="{:.2}" r="4"/>"#, p.0, p.1);
            if loaded {
                arrow(&mut body, p, u, "force robot-force");
                b.add((p.0 + u[0] * PX_PER_N, p.1 - u[1] * PX_PER_N));
            }
        }
        let off = Vec2::new(q[0], q[1]);
        for (v, f) in traj.f.get(t).into_iter().flatten().enumerate() {
            if f[0].hypot(f[1]) <= FORCE_EPS {
                continue;
            }
            let p = px(scenario.object.vertices[v].rotated(q[2]) + off);
            arrow(&mut body, p, *f, "force env-force");
            b.add((p.0 + f[0] * PX_PER_N, p.1 - f[1] * PX_PER_N));
        }
        body.push_str(" </g>\n");
    }
    if b.lo.0 > b.hi.0 {
        b.add((0.0, 0.0));
    }

    let mut env = String::new();
    for h in &scenario.env.halfspaces {
        ground(&mut env, h, &b);
    }

    let (x0, y0) = (b.lo.0 - MARGIN, b.lo.1 - MARGIN);
    let (w, h) = (b.hi.0 - b.lo.0 + 2.0 * MARGIN, b.hi.1 - b.lo.1 + 2.0 * MARGIN + 16.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{x0:.2} {y0:.2} {w:.2} {h:.2}" width="{w:.0}" height="{h:.0}">"#
    );
    out.push_str(
        r##" <defs>
  <marker id="head" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="5" markerHeight="5" orient="auto-start-reverse">
   <path d="M 0 0 L 10 5 L 0 10 z" fill="context-stroke"/>
  </marker>
 </defs>
 <style>
  .env { stroke: #555; stroke-width: 2; }
  .snapshot { fill: #9ecae1; stroke: #08519c; stroke-width: 1; }
  .goal { fill: none; stroke: #d62728; stroke-width: 3; stroke-dasharray: 6 3; }
  .robot { fill: white; stroke: #222; stroke-width: 1.5; }
  .robot.loaded { fill: #222; }
  .force { stroke-width: 1.5; }
  .robot-force { stroke: #2ca02c; }
  .env-force { stroke: #ff7f0e; }
  .legend { font: 10px sans-serif; fill: #333; }
 </style>
"##,
    );
    let _ = writeln!(out, " <!-- {} m per px, {} N per px -->", 1.0 / PX_PER_M, 1.0 / PX_PER_N);
    out.push_str(&env);
    out.push_str(&body);
    let _ = writeln!(out, r#" <polygon class="goal" points="{}"/>"#, points(&goal));
    let _ = writeln!(
        out,
        r#" <text class="legend" x="{:.2}" y="{:.2}">1 N = {PX_PER_N} px, 1 cm = {} px</text>"#,
        x0 + 4.0,
        y0 + h - 6.0,
        PX_PER_M / 100.0
    );
    out.push_str("</svg>\n");
    out
}
