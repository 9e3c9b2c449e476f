use std::fmt;
use std::sync::Arc;

/// Residual or Jacobian callback on the block's local variables. Jacobians are
/// written row-major, `dim × vars.len()`.
pub type BlockFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// A vector-valued function of a few decision variables.
#[derive(Clone)]
pub struct Block {
    pub label: String,
    pub vars: Vec<usize>,
    pub dim: usize,
    pub eval: BlockFn,
    pub jac: Option<BlockFn>,
    /// Affine blocks skip the second-order terms.
    pub linear: bool,
}

impl fmt::Debug for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Block")
            .field("label", &self.label)
            .field("vars", &self.vars)
            .field("dim", &self.dim)
            .field("analytic", &self.jac.is_some())
            .field("linear", &self.linear)
            .finish()
    }
}

impl Block {
    pub fn new<F>(label: impl Into<String>, vars: Vec<usize>, dim: usize, eval: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self { label: label.into(), vars, dim, eval: Arc::new(eval), jac: None, linear: false }
    }

    pub fn with_jacobian<F>(mut self, jac: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.jac = Some(Arc::new(jac));
        self
    }

    pub fn linear(mut self) -> Self {
        self.linear = true;
        self
    }

    /// Affine rows `a·x + b` with an exact Jacobian.
    pub fn affine(label: impl Into<String>, vars: Vec<usize>, rows: Vec<(Vec<f64>, f64)>) -> Self {
        let k = vars.len();
        assert!(rows.iter().all(|(a, _)| a.len() == k), "row length must match vars");
        let dim = rows.len();
        let rows = Arc::new(rows);
        let r2 = Arc::clone(&rows);
        Self::new(label, vars, dim, move |x, out| {
            for (o, (a, b)) in out.iter_mut().zip(rows.iter()) {
                *o = a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() + b;
            }
        })
        .with_jacobian(move |_, jac| {
            for (r, (a, _)) in r2.iter().enumerate() {
                jac[r * k..(r + 1) * k].copy_from_slice(a);
            }
        })
        .linear()
    }

    pub fn gather(&self, x: &[f64], local: &mut Vec<f64>) {
        local.clear();
        local.extend(self.vars.iter().map(|&i| x[i]));
    }

    pub fn value(&self, x: &[f64]) -> Vec<f64> {
        let mut local = Vec::new();
        self.gather(x, &mut local);
        let mut out = vec![0.0; self.dim];
        (self.eval)(&local, &mut out);
        out
    }

    /// Jacobian at local coordinates, analytic when available.
    pub fn jacobian_local(&self, local: &[f64], out: &mut [f64]) {
        match &self.jac {
            Some(j) => j(local, out),
            None => self.fd_jacobian_local(local, out),
        }
    }

    /// Central differences with step `1e-6·(1 + |x_j|)`.
    pub fn fd_jacobian_local(&self, local: &[f64], out: &mut [f64]) {
        let k = local.len();
        let mut xp = local.to_vec();
        let mut fp = vec![0.0; self.dim];
        let mut fm = vec![0.0; self.dim];
        for j in 0..k {
            let h = 1e-6 * (1.0 + local[j].abs());
            xp[j] = local[j] + h;
            (self.eval)(&xp, &mut fp);
            xp[j] = local[j] - h;
            (self.eval)(&xp, &mut fm);
            xp[j] = local[j];
            for r in 0..self.dim {
                out[r * k + j] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
    }
}

/// `min Σ objective  s.t.  eq = 0, ineq ≥ 0, lower ≤ x ≤ upper`.
#[derive(Clone, Debug)]
pub struct NlpProblem {
    pub n: usize,
    pub x0: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Scalar blocks, summed.
    pub objective: Vec<Block>,
    pub eq: Vec<Block>,
    pub ineq: Vec<Block>,
}

impl NlpProblem {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            x0: vec![0.0; n],
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            objective: Vec::new(),
            eq: Vec::new(),
            ineq: Vec::new(),
        }
    }

    pub fn set_bounds(&mut self, i: usize, lo: f64, hi: f64) {
        self.lower[i] = lo;
        self.upper[i] = hi;
    }

    pub fn add_objective(&mut self, b: Block) {
        assert_eq!(b.dim, 1, "objective blocks are scalar");
        self.check(&b);
        self.objective.push(b);
    }

    pub fn add_eq(&mut self, b: Block) {
        self.check(&b);
        self.eq.push(b);
    }

    pub fn add_ineq(&mut self, b: Block) {
        self.check(&b);
        self.ineq.push(b);
    }

    fn check(&self, b: &Block) {
        assert!(b.vars.iter().all(|&i| i < self.n), "block `{}` references a variable out of range", b.label);
    }

    pub fn eq_dim(&self) -> usize {
        self.eq.iter().map(|b| b.dim).sum()
    }

    pub fn ineq_dim(&self) -> usize {
        self.ineq.iter().map(|b| b.dim).sum()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|b| b.value(x)[0]).sum()
    }

    pub fn eq_residuals(&self, x: &[f64]) -> Vec<f64> {
        self.eq.iter().flat_map(|b| b.value(x)).collect()
    }

    pub fn ineq_residuals(&self, x: &[f64]) -> Vec<f64> {
        self.ineq.iter().flat_map(|b| b.value(x)).collect()
    }

    pub fn max_eq_violation(&self, x: &[f64]) -> f64 {
        self.eq_residuals(x).iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn max_ineq_violation(&self, x: &[f64]) -> f64 {
        self.ineq_residuals(x).iter().fold(0.0, |m, r| m.max(-r))
    }

    pub fn max_bound_violation(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .fold(0.0, |m, (v, (l, u))| m.max(l - v).max(v - u))
    }

    pub fn project(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Worst violation per block label, equalities and inequalities together.
    pub fn violation_by_label(&self, x: &[f64]) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = Vec::new();
        let mut put = |label: &str, v: f64| match out.iter_mut().find(|(l, _)| l == label) {
            Some((_, m)) => *m = m.max(v),
            None => out.push((label.to_string(), v)),
        };
        for b in &self.eq {
            put(&b.label, b.value(x).iter().fold(0.0, |m, r| m.max(r.abs())));
        }
        for b in &self.ineq {
            put(&b.label, b.value(x).iter().fold(0.0, |m, r| m.max(-r)));
        }
        out
    }
}
