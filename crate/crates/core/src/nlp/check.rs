use serde::{Deserialize, Serialize};

use super::problem::{Block, NlpProblem};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradientEntry {
    pub family: String,
    pub row: usize,
    pub var: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradientReport {
    pub checked_blocks: usize,
    pub max_rel_error: f64,
    pub worst: Option<GradientEntry>,
    pub rel_tol: f64,
}

impl GradientReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.rel_tol
    }
}

/// Compares every analytic block Jacobian with central differences using the
/// step `1e-6·(1 + |x_i|)`. Blocks without an analytic Jacobian are skipped.
pub fn check_gradients(problem: &NlpProblem, x: &[f64], rel_tol: f64) -> GradientReport {
    let mut report = GradientReport { checked_blocks: 0, max_rel_error: 0.0, worst: None, rel_tol };
    let blocks = problem.objective.iter().chain(&problem.eq).chain(&problem.ineq);
    for b in blocks {
        if b.jac.is_none() {
            continue;
        }
        report.checked_blocks += 1;
        check_block(b, x, &mut report);
    }
    report
}

fn check_block(b: &Block, x: &[f64], report: &mut GradientReport) {
    let mut local = Vec::new();
    b.gather(x, &mut local);
    let k = local.len();
    let mut analytic = vec![0.0; b.dim * k];
    let mut numeric = vec![0.0; b.dim * k];
    b.jacobian_local(&local, &mut analytic);
    b.fd_jacobian_local(&local, &mut numeric);
    for r in 0..b.dim {
        for j in 0..k {
            let (a, f) = (analytic[r * k + j], numeric[r * k + j]);
            let err = (a - f).abs() / a.abs().max(f.abs()).max(1.0);
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some(GradientEntry {
                    family: b.label.clone(),
                    row: r,
                    var: b.vars[j],
                    analytic: a,
                    numeric: f,
                    rel_error: err,
                });
            }
        }
    }
}
