//! Augmented Lagrangian with a projected Newton inner loop.
//!
//! Equalities enter as `λc + ρc²/2`, inequalities `g ≥ 0` through the
//! slack-free term `(max(0, μ − ρg)² − μ²)/(2ρ)`. The inner problem is the
//! bound-constrained minimization of that merit. Curvature comes from
//! central differences of block gradients plus the Gauss–Newton part
//! `ρJᵀJ`; the reduced system is regularized until Cholesky succeeds, and a
//! projected Armijo search keeps the merit monotone.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::problem::{Block, NlpProblem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NlpConfig {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub max_outer: usize,
    pub penalty_growth: f64,
    pub initial_penalty: f64,
    pub max_penalty: f64,
    pub max_inner: usize,
    pub time_limit: Option<Duration>,
    /// Keep the merit value after every accepted inner step.
    pub record_merit: bool,
}

impl Default for NlpConfig {
    fn default() -> Self {
        Self {
            feas_tol: 1e-6,
            opt_tol: 1e-6,
            max_outer: 50,
            penalty_growth: 10.0,
            initial_penalty: 10.0,
            max_penalty: 1e12,
            max_inner: 200,
            time_limit: None,
            record_merit: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NlpStatus {
    Converged,
    MaxIter,
    Diverged,
}

/// Multipliers and penalty to resume from.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct WarmStart {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub rho: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NlpResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub max_eq_violation: f64,
    pub max_ineq_violation: f64,
    pub stationarity: f64,
    pub status: NlpStatus,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub message: String,
    pub warm: WarmStart,
    pub merit_trace: Vec<Vec<f64>>,
}

impl NlpResult {
    pub fn max_violation(&self) -> f64 {
        self.max_eq_violation.max(self.max_ineq_violation)
    }
}

pub fn solve(problem: &NlpProblem, config: &NlpConfig) -> NlpResult {
    solve_warm(problem, &problem.x0, None, config)
}

struct Merit<'a> {
    p: &'a NlpProblem,
    lam: &'a [f64],
    mu: &'a [f64],
    rho: f64,
}

struct Derivs {
    merit: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
    grad_f: f64,
}

impl Merit<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let mut local = Vec::new();
        let mut out = Vec::new();
        let mut total = 0.0;
        for b in &self.p.objective {
            eval_block(b, x, &mut local, &mut out);
            total += out[0];
        }
        let mut r = 0;
        for b in &self.p.eq {
            eval_block(b, x, &mut local, &mut out);
            for c in &out {
                total += self.lam[r] * c + 0.5 * self.rho * c * c;
                r += 1;
            }
        }
        r = 0;
        for b in &self.p.ineq {
            eval_block(b, x, &mut local, &mut out);
            for g in &out {
                let t = (self.mu[r] - self.rho * g).max(0.0);
                total += (t * t - self.mu[r] * self.mu[r]) / (2.0 * self.rho);
                r += 1;
            }
        }
        total
    }

    fn derivs(&self, x: &[f64]) -> Derivs {
        let n = self.p.n;
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        let mut local = Vec::new();
        let mut out = Vec::new();
        let mut merit = 0.0;
        let mut grad_f = DVector::zeros(n);
        for b in &self.p.objective {
            eval_block(b, x, &mut local, &mut out);
            merit += out[0];
            let k = b.vars.len();
            let mut jac = vec![0.0; k];
            b.jacobian_local(&local, &mut jac);
            for (j, &i) in b.vars.iter().enumerate() {
                grad[i] += jac[j];
                grad_f[i] += jac[j];
            }
            if !b.linear {
                add_weighted_hessian(b, &local, &[1.0], &mut hess);
            }
        }
        let mut r0 = 0;
        for b in &self.p.eq {
            eval_block(b, x, &mut local, &mut out);
            let k = b.vars.len();
            let mut jac = vec![0.0; b.dim * k];
            b.jacobian_local(&local, &mut jac);
            let mut w = vec![0.0; b.dim];
            for (r, c) in out.iter().enumerate() {
                let lam = self.lam[r0 + r];
                merit += lam * c + 0.5 * self.rho * c * c;
                w[r] = lam + self.rho * c;
                add_row_terms(b, &jac[r * k..(r + 1) * k], w[r], self.rho, &mut grad, &mut hess);
            }
            if !b.linear {
                add_weighted_hessian(b, &local, &w, &mut hess);
            }
            r0 += b.dim;
        }
        r0 = 0;
        for b in &self.p.ineq {
            eval_block(b, x, &mut local, &mut out);
            let k = b.vars.len();
            let mut w = vec![0.0; b.dim];
            let mut any = false;
            for (r, g) in out.iter().enumerate() {
                let mu = self.mu[r0 + r];
                let t = (mu - self.rho * g).max(0.0);
                merit += (t * t - mu * mu) / (2.0 * self.rho);
                if t > 0.0 {
                    w[r] = -t;
                    any = true;
                }
            }
            if any {
                let mut jac = vec![0.0; b.dim * k];
                b.jacobian_local(&local, &mut jac);
                for r in 0..b.dim {
                    if w[r] != 0.0 {
                        add_row_terms(b, &jac[r * k..(r + 1) * k], w[r], self.rho, &mut grad, &mut hess);
                    }
                }
                if !b.linear {
                    add_weighted_hessian(b, &local, &w, &mut hess);
                }
            }
            r0 += b.dim;
        }
        let grad_f = grad_f.amax();
        Derivs { merit, grad, hess, grad_f }
    }
}

fn eval_block(b: &Block, x: &[f64], local: &mut Vec<f64>, out: &mut Vec<f64>) {
    b.gather(x, local);
    out.clear();
    out.resize(b.dim, 0.0);
    (b.eval)(local, out);
}

fn add_row_terms(b: &Block, row: &[f64], w: f64, rho: f64, grad: &mut DVector<f64>, hess: &mut DMatrix<f64>) {
    for (j, &i) in b.vars.iter().enumerate() {
        grad[i] += w * row[j];
        if row[j] == 0.0 {
            continue;
        }
        for (l, &m) in b.vars.iter().enumerate() {
            hess[(i, m)] += rho * row[j] * row[l];
        }
    }
}

/// Adds the Hessian of `Σ w_r f_r` by central differences of the Jacobian.
fn add_weighted_hessian(b: &Block, local: &[f64], w: &[f64], hess: &mut DMatrix<f64>) {
    if w.iter().all(|v| *v == 0.0) {
        return;
    }
    let k = local.len();
    let mut xp = local.to_vec();
    let mut jp = vec![0.0; b.dim * k];
    let mut jm = vec![0.0; b.dim * k];
    let mut h_loc = vec![0.0; k * k];
    for j in 0..k {
        let h = 1e-4 * (1.0 + local[j].abs());
        xp[j] = local[j] + h;
        b.jacobian_local(&xp, &mut jp);
        xp[j] = local[j] - h;
        b.jacobian_local(&xp, &mut jm);
        xp[j] = local[j];
        for l in 0..k {
            let mut s = 0.0;
            for r in 0..b.dim {
                s += w[r] * (jp[r * k + l] - jm[r * k + l]);
            }
            h_loc[l * k + j] = s / (2.0 * h);
        }
    }
    for j in 0..k {
        for l in 0..k {
            let v = 0.5 * (h_loc[j * k + l] + h_loc[l * k + j]);
            hess[(b.vars[j], b.vars[l])] += v;
        }
    }
}

fn projected_gradient_norm(p: &NlpProblem, x: &[f64], g: &DVector<f64>) -> f64 {
    x.iter()
        .enumerate()
        .map(|(i, &xi)| (xi - (xi - g[i]).clamp(p.lower[i], p.upper[i])).abs())
        .fold(0.0, f64::max)
}

enum InnerEnd {
    Converged,
    Stalled,
    IterLimit,
    NonFinite,
}

struct Inner {
    end: InnerEnd,
    iterations: usize,
    pg: f64,
    grad_f: f64,
}

fn inner_solve(merit: &Merit, x: &mut [f64], tol: f64, max_iter: usize, trace: Option<&mut Vec<f64>>) -> Inner {
    let p = merit.p;
    let n = p.n;
    let mut trace = trace;
    let mut tau = 0.0f64;
    let mut last_pg = f64::INFINITY;
    let mut grad_f = 0.0;
    for it in 0..max_iter {
        let d = merit.derivs(x);
        grad_f = d.grad_f;
        if !d.merit.is_finite() || d.grad.iter().any(|v| !v.is_finite()) {
            return Inner { end: InnerEnd::NonFinite, iterations: it, pg: f64::NAN, grad_f };
        }
        if let Some(t) = trace.as_deref_mut() {
            if t.is_empty() {
                t.push(d.merit);
            }
        }
        let pg = projected_gradient_norm(p, x, &d.grad);
        last_pg = pg;
        if pg <= tol {
            return Inner { end: InnerEnd::Converged, iterations: it, pg, grad_f };
        }
        let eps = pg.min(1e-8);
        let free: Vec<usize> = (0..n)
            .filter(|&i| {
                let at_lo = x[i] <= p.lower[i] + eps && d.grad[i] > 0.0;
                let at_hi = x[i] >= p.upper[i] - eps && d.grad[i] < 0.0;
                !(at_lo || at_hi || p.lower[i] == p.upper[i])
            })
            .collect();
        let m = free.len();
        let mut hff = DMatrix::zeros(m, m);
        let mut gf = DVector::zeros(m);
        let mut diag_max = 0.0f64;
        for (a, &i) in free.iter().enumerate() {
            gf[a] = d.grad[i];
            for (b, &j) in free.iter().enumerate() {
                hff[(a, b)] = d.hess[(i, j)];
            }
            diag_max = diag_max.max(d.hess[(i, i)].abs());
        }
        let floor = 1e-12 * diag_max.max(1.0);
        tau = (tau * 0.1).max(0.0);
        let mut accepted = false;
        for attempt in 0..12 {
            let Some(dir) = newton_direction(&hff, &gf, &mut tau, floor) else { break };
            let mut step = vec![0.0; n];
            for (a, &i) in free.iter().enumerate() {
                step[i] = dir[a];
            }
            if let Some(val) = line_search(merit, x, &d.grad, &step, d.merit) {
                if let Some(t) = trace.as_deref_mut() {
                    t.push(val);
                }
                accepted = true;
                break;
            }
            tau = if tau == 0.0 { floor.max(1e-8 * diag_max.max(1.0)) } else { tau * 100.0 };
            if attempt == 11 {
                break;
            }
        }
        if !accepted {
            // steepest descent fallback
            let step: Vec<f64> = (0..n).map(|i| -d.grad[i] / (d.hess[(i, i)].abs().max(1.0))).collect();
            match line_search(merit, x, &d.grad, &step, d.merit) {
                Some(val) => {
                    if let Some(t) = trace.as_deref_mut() {
                        t.push(val);
                    }
                }
                None => return Inner { end: InnerEnd::Stalled, iterations: it, pg, grad_f },
            }
        }
    }
    Inner { end: InnerEnd::IterLimit, iterations: max_iter, pg: last_pg, grad_f }
}

fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>, tau: &mut f64, floor: f64) -> Option<DVector<f64>> {
    if g.is_empty() {
        return Some(DVector::zeros(0));
    }
    for _ in 0..40 {
        let mut m = h.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += *tau + floor;
        }
        if let Some(ch) = m.cholesky() {
            return Some(-ch.solve(g));
        }
        *tau = if *tau == 0.0 { 1e-10_f64.max(floor) } else { *tau * 10.0 };
    }
    None
}

/// Projected Armijo backtracking. Returns the new merit on success and moves `x`.
fn line_search(merit: &Merit, x: &mut [f64], grad: &DVector<f64>, step: &[f64], m0: f64) -> Option<f64> {
    let p = merit.p;
    let mut alpha = 1.0;
    let mut trial = x.to_vec();
    for _ in 0..40 {
        let mut pred = 0.0;
        let mut moved = 0.0f64;
        for i in 0..p.n {
            trial[i] = (x[i] + alpha * step[i]).clamp(p.lower[i], p.upper[i]);
            let dx = trial[i] - x[i];
            pred += grad[i] * dx;
            moved = moved.max(dx.abs() / (1.0 + x[i].abs()));
        }
        if moved < 1e-16 {
            return None;
        }
        if pred < 0.0 {
            let val = merit.value(&trial);
            if val.is_finite() && val <= m0 + 1e-4 * pred {
                x.copy_from_slice(&trial);
                return Some(val);
            }
        }
        alpha *= 0.5;
    }
    None
}

/// Solves from `x0`, optionally resuming multipliers and penalty.
pub fn solve_warm(problem: &NlpProblem, x0: &[f64], warm: Option<&WarmStart>, config: &NlpConfig) -> NlpResult {
    let start = Instant::now();
    let me = problem.eq_dim();
    let mi = problem.ineq_dim();
    let mut x = x0.to_vec();
    problem.project(&mut x);
    let (mut lam, mut mu, mut rho) = match warm {
        Some(w) if w.lambda.len() == me && w.mu.len() == mi && w.rho > 0.0 => (w.lambda.clone(), w.mu.clone(), w.rho),
        _ => (vec![0.0; me], vec![0.0; mi], config.initial_penalty),
    };
    let mut v_prev = f64::INFINITY;
    let mut omega: f64 = 1e-2;
    let mut inner_total = 0;
    let mut traces = Vec::new();
    let mut status = NlpStatus::MaxIter;
    let mut message = String::from("outer iteration limit reached");
    let mut pg = f64::INFINITY;
    let mut outer = 0;
    for k in 0..config.max_outer {
        outer = k + 1;
        let merit = Merit { p: problem, lam: &lam, mu: &mu, rho };
        let mut trace = Vec::new();
        let inner = inner_solve(
            &merit,
            &mut x,
            omega.max(0.1 * config.opt_tol),
            config.max_inner,
            config.record_merit.then_some(&mut trace),
        );
        if config.record_merit {
            traces.push(trace);
        }
        inner_total += inner.iterations;
        if matches!(inner.end, InnerEnd::NonFinite) {
            status = NlpStatus::Diverged;
            message = "objective or residual evaluated to a non-finite value".into();
            break;
        }
        pg = inner.pg;
        let c = problem.eq_residuals(&x);
        let g = problem.ineq_residuals(&x);
        if c.iter().chain(&g).any(|v| !v.is_finite()) {
            status = NlpStatus::Diverged;
            message = "residual evaluated to a non-finite value".into();
            break;
        }
        let v = c.iter().map(|r| r.abs()).chain(g.iter().map(|r| (-r).max(0.0))).fold(0.0, f64::max);
        for (l, r) in lam.iter_mut().zip(&c) {
            *l += rho * r;
        }
        for (m, r) in mu.iter_mut().zip(&g) {
            *m = (*m - rho * r).max(0.0);
        }
        let stationary = pg <= config.opt_tol * (1.0 + inner.grad_f);
        let stalled = matches!(inner.end, InnerEnd::Stalled);
        log::debug!("outer {k}: viol {v:.3e} pg {pg:.3e} rho {rho:.1e} inner {}", inner.iterations);
        if v <= config.feas_tol && (stationary || stalled) {
            status = NlpStatus::Converged;
            message = if stationary { "converged".into() } else { "converged (no further descent)".into() };
            break;
        }
        if v > config.feas_tol && v > 0.25 * v_prev {
            rho = (rho * config.penalty_growth).min(config.max_penalty);
        }
        v_prev = v;
        omega = (omega * 0.1).max(0.1 * config.opt_tol);
        if config.time_limit.is_some_and(|lim| start.elapsed() >= lim) {
            message = "time limit reached".into();
            break;
        }
    }
    NlpResult {
        objective: problem.objective_value(&x),
        max_eq_violation: problem.max_eq_violation(&x),
        max_ineq_violation: problem.max_ineq_violation(&x),
        stationarity: pg,
        status,
        outer_iterations: outer,
        inner_iterations: inner_total,
        message,
        warm: WarmStart { lambda: lam, mu, rho },
        merit_trace: traces,
        x,
    }
}
