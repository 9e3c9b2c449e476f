//! K-Opt → C-Opt → Q-Opt with no-good cuts on rejected schedules.

use std::fs;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::copt::{
    add_no_good_cut, build_copt, relax_pose_variables, solve_copt, ContactSchedule, CoptError, CoptModel, Relaxation,
};
use crate::kopt::{solve_kopt, KinematicsSolution};
use crate::milp::SolveConfig;
use crate::nlp::NlpStatus;
use crate::qopt::{
    build_qopt, solve_qopt, verify_trajectory, InfeasibilityReport, QoptOptions, ResidualReport, Trajectory,
    DEFAULT_EPS_SCHEDULE,
};
use crate::Scenario;

/// Absolute tolerance on every exact residual family of a verified result.
pub const VERIFY_TOL: f64 = 1e-6;
/// Exact complementarity tolerance. The NLP smooths `|g|` with
/// `√(g² + δ)`, which can hide up to `|v|·√δ` of exact residual.
pub const COMPLEMENTARITY_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub relaxation: Relaxation,
    pub max_cuts: usize,
    /// Seconds per C-Opt solve.
    pub copt_time_limit: Option<f64>,
    /// Seconds per Q-Opt continuation stage.
    pub qopt_time_limit: Option<f64>,
    pub robustness_weight: f64,
    pub pose_relax_box: [f64; 3],
    pub eps_schedule: Vec<f64>,
    /// Directory for `kin.json` and `schedule_<k>.json`.
    pub checkpoint_dir: Option<PathBuf>,
    /// Test hook: treat the first this-many Q-Opt solves as rejections.
    pub inject_rejections: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            relaxation: Relaxation::BinaryEncoded(8),
            max_cuts: 25,
            copt_time_limit: Some(60.0),
            qopt_time_limit: Some(60.0),
            robustness_weight: 0.0,
            pose_relax_box: [0.02, 0.02, 0.1],
            eps_schedule: DEFAULT_EPS_SCHEDULE.to_vec(),
            checkpoint_dir: None,
            inject_rejections: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StageStatus {
    Kopt { converged: bool },
    Copt { feasible: bool, detail: String },
    PoseRelaxed,
    Qopt { accepted: bool, detail: String },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub kopt: f64,
    pub copt: Vec<f64>,
    pub qopt: Vec<f64>,
}

/// Table-style metrics: total seconds, C-Opt share of it, cuts added.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub a1_total_seconds: f64,
    pub a2_copt_fraction: f64,
    pub a3_cuts: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineResult {
    pub success: bool,
    pub trajectory: Option<Trajectory>,
    pub residuals: Option<ResidualReport>,
    pub kinematics: Option<KinematicsSolution>,
    /// Every schedule C-Opt produced, in order.
    pub schedules: Vec<ContactSchedule>,
    pub cuts_applied: Vec<Vec<(usize, usize, usize)>>,
    pub pose_relaxed: bool,
    pub statuses: Vec<StageStatus>,
    pub timings: StageTimings,
    pub metrics: Metrics,
    pub last_report: Option<InfeasibilityReport>,
    pub failure: Option<String>,
}

impl PipelineResult {
    fn new() -> Self {
        Self {
            success: false,
            trajectory: None,
            residuals: None,
            kinematics: None,
            schedules: Vec::new(),
            cuts_applied: Vec::new(),
            pose_relaxed: false,
            statuses: Vec::new(),
            timings: StageTimings::default(),
            metrics: Metrics::default(),
            last_report: None,
            failure: None,
        }
    }

    fn finish(mut self, start: Instant, failure: Option<String>) -> Self {
        let total = start.elapsed().as_secs_f64();
        let copt: f64 = self.timings.copt.iter().sum();
        self.metrics = Metrics {
            a1_total_seconds: total,
            a2_copt_fraction: if total > 0.0 { copt / total } else { 0.0 },
            a3_cuts: self.cuts_applied.len(),
        };
        self.success = failure.is_none();
        self.failure = failure;
        self
    }
}

fn checkpoint<T: Serialize>(config: &PipelineConfig, name: &str, value: &T) {
    let Some(dir) = &config.checkpoint_dir else { return };
    let write = || -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(name), serde_json::to_string_pretty(value).expect("plain data"))
    };
    if let Err(e) = write() {
        log::warn!("checkpoint {name}: {e}");
    }
}

fn secs(s: Option<f64>) -> Option<Duration> {
    s.map(Duration::from_secs_f64)
}

pub fn run(scenario: &Scenario, config: &PipelineConfig) -> PipelineResult {
    let start = Instant::now();
    let mut out = PipelineResult::new();
    if let Err(e) = scenario.validate() {
        return out.finish(start, Some(format!("invalid scenario: {e}")));
    }

    let t = Instant::now();
    let kin = solve_kopt(scenario);
    out.timings.kopt = t.elapsed().as_secs_f64();
    out.statuses.push(StageStatus::Kopt { converged: kin.is_ok() });
    let kin = match kin {
        Ok(k) => k,
        Err(e) => return out.finish(start, Some(e.to_string())),
    };
    checkpoint(config, "kin.json", &kin);
    out.kinematics = Some(kin.clone());

    let mut model: CoptModel = match build_copt(scenario, &kin, config.relaxation) {
        Ok(m) => m,
        Err(e) => return out.finish(start, Some(e.to_string())),
    };
    let milp_config = SolveConfig { time_limit: secs(config.copt_time_limit), ..SolveConfig::default() };
    let options = QoptOptions {
        robustness_weight: config.robustness_weight,
        eps_schedule: config.eps_schedule.clone(),
        nlp: {
            let mut n = QoptOptions::default().nlp;
            n.time_limit = secs(config.qopt_time_limit);
            n
        },
    };
    let final_eps = config.eps_schedule.last().copied().unwrap_or(0.0);
    let mut injected = 0;

    loop {
        let t = Instant::now();
        let schedule = solve_copt(&model, &milp_config);
        out.timings.copt.push(t.elapsed().as_secs_f64());
        let schedule = match schedule {
            Ok(s) => s,
            Err(e) => {
                out.statuses.push(StageStatus::Copt { feasible: false, detail: e.to_string() });
                if matches!(e, CoptError::Infeasible(_)) && !out.pose_relaxed {
                    out.pose_relaxed = true;
                    out.statuses.push(StageStatus::PoseRelaxed);
                    match relax_pose_variables(&model, config.pose_relax_box) {
                        Ok(m) => {
                            model = m;
                            continue;
                        }
                        Err(e) => return out.finish(start, Some(e.to_string())),
                    }
                }
                return out.finish(start, Some(e.to_string()));
            }
        };
        out.statuses.push(StageStatus::Copt { feasible: true, detail: String::new() });
        checkpoint(config, &format!("schedule_{}.json", out.schedules.len()), &schedule);
        out.schedules.push(schedule.clone());

        let t = Instant::now();
        let verdict = if injected < config.inject_rejections {
            injected += 1;
            Err(Box::new(InfeasibilityReport {
                active_set: schedule.active_set(),
                eps: final_eps,
                status: NlpStatus::MaxIter,
                message: "rejection injected".into(),
                max_violation: f64::NAN,
                worst: Vec::new(),
            }))
        } else {
            match build_qopt(scenario, &kin, &schedule, &options) {
                Ok(p) => solve_qopt(&p),
                Err(e) => return out.finish(start, Some(e.to_string())),
            }
        };
        out.timings.qopt.push(t.elapsed().as_secs_f64());

        let report = match verdict {
            Ok(sol) => {
                let res = verify_trajectory(scenario, &sol.trajectory);
                if res.passes(VERIFY_TOL, COMPLEMENTARITY_TOL) {
                    out.statuses.push(StageStatus::Qopt { accepted: true, detail: String::new() });
                    out.trajectory = Some(sol.trajectory);
                    out.residuals = Some(res);
                    return out.finish(start, None);
                }
                // converged but the exact check disagrees: treat as a rejection
                Box::new(InfeasibilityReport {
                    active_set: schedule.active_set(),
                    eps: final_eps,
                    status: NlpStatus::Converged,
                    message: format!(
                        "verification failed: exact {:.3e}, complementarity {:.3e}",
                        res.max_exact(),
                        res.complementarity
                    ),
                    max_violation: res.max_exact().max(res.complementarity),
                    worst: Vec::new(),
                })
            }
            Err(r) => r,
        };
        out.statuses.push(StageStatus::Qopt { accepted: false, detail: report.message.clone() });
        let active = report.active_set.clone();
        out.last_report = Some(*report);
        if out.cuts_applied.len() >= config.max_cuts {
            return out.finish(start, Some(format!("cut budget of {} exhausted", config.max_cuts)));
        }
        if out.cuts_applied.contains(&active) {
            return out.finish(start, Some("schedule repeated after its cut".into()));
        }
        if let Err(e) = add_no_good_cut(&mut model, &active) {
            return out.finish(start, Some(e.to_string()));
        }
        out.cuts_applied.push(active);
    }
}
