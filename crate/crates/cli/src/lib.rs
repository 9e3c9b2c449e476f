//! Command implementations behind the `hcto` binary.

pub mod bench;
pub mod render;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use hcto::copt::{build_copt, Relaxation};
use hcto::kopt::{solve_kopt, KinematicsSolution};
use hcto::milp::write_lp;
use hcto::pipeline::{run, Metrics, PipelineConfig, StageStatus, StageTimings};
use hcto::qopt::{InfeasibilityReport, ResidualReport, Trajectory};
use hcto::{scenarios, Scenario};
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_PLANNER: i32 = 2;

#[derive(Clone, Debug)]
pub enum ScenarioSource {
    File(PathBuf),
    Builtin { name: String, horizon: usize },
}

impl ScenarioSource {
    pub fn load(&self) -> Result<Scenario> {
        let s = match self {
            ScenarioSource::File(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
                Scenario::from_json_str(&text).with_context(|| format!("scenario schema error in {}", p.display()))?
            }
            ScenarioSource::Builtin { name, horizon } => scenarios::by_name(name, *horizon).ok_or_else(|| {
                anyhow!("unknown built-in scenario `{name}` (have {})", scenarios::NAMES.join(", "))
            })?,
        };
        s.validate().context("invalid scenario")?;
        Ok(s)
    }
}

/// Command-line settings that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub relaxation: Option<Relaxation>,
    pub max_cuts: Option<usize>,
    pub time_limit: Option<f64>,
    pub robustness_weight: Option<f64>,
}

/// Relaxation from a name (`mccormick`, `naive`, `encoded`, or with a
/// `:C` suffix) plus an optional region count `C` or bit count `K = log₂ C`.
pub fn relaxation_from_flags(kind: &str, regions: Option<usize>, bits: Option<u32>) -> Result<Relaxation> {
    let c = match (regions, bits) {
        (Some(_), Some(_)) => return Err(anyhow!("give either a region count or a bit count, not both")),
        (Some(c), None) => Some(c),
        (None, Some(k)) => Some(1usize.checked_shl(k).filter(|c| *c > 0).ok_or_else(|| anyhow!("too many bits"))?),
        (None, None) => None,
    };
    let name = match (kind.contains(':'), c) {
        (true, Some(_)) => return Err(anyhow!("`{kind}` already fixes the region count")),
        (false, Some(c)) if kind != "mccormick" => format!("{kind}:{c}"),
        (false, None) if kind == "naive" || kind == "encoded" => format!("{kind}:8"),
        _ => kind.to_string(),
    };
    name.parse().map_err(|e: String| anyhow!(e))
}

pub fn load_config(path: Option<&Path>, o: &Overrides) -> Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("config schema error in {}", p.display()))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(r) = o.relaxation {
        cfg.relaxation = r;
    }
    if let Some(n) = o.max_cuts {
        cfg.max_cuts = n;
    }
    if let Some(t) = o.time_limit {
        cfg.copt_time_limit = Some(t);
        cfg.qopt_time_limit = Some(t);
    }
    if let Some(w) = o.robustness_weight {
        cfg.robustness_weight = w;
    }
    Ok(cfg)
}

/// Contents of `metrics.json`.
#[derive(Serialize)]
pub struct RunReport<'a> {
    pub scenario: &'a str,
    pub relaxation: String,
    pub success: bool,
    pub failure: Option<&'a str>,
    pub metrics: &'a Metrics,
    pub timings: &'a StageTimings,
    pub statuses: &'a [StageStatus],
    pub pose_relaxed: bool,
    pub schedules: usize,
    pub cuts_applied: &'a [Vec<(usize, usize, usize)>],
    pub residuals: Option<&'a ResidualReport>,
    pub last_report: Option<&'a InfeasibilityReport>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn report_error(e: &anyhow::Error) -> i32 {
    eprintln!("error: {e:#}");
    EXIT_IO
}

/// Plans `source` and writes `trajectory.json`, `metrics.json` and
/// `snapshots.svg` to `out_dir`, with stage checkpoints under
/// `out_dir/checkpoints` unless the config names another directory.
pub fn cmd_run(source: &ScenarioSource, config: Option<&Path>, o: &Overrides, out_dir: &Path, snapshots: usize) -> i32 {
    let prepared = (|| -> Result<_> {
        let s = source.load()?;
        let mut cfg = load_config(config, o)?;
        fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
        cfg.checkpoint_dir.get_or_insert_with(|| out_dir.join("checkpoints"));
        Ok((s, cfg))
    })();
    let (s, cfg) = match prepared {
        Ok(v) => v,
        Err(e) => return report_error(&e),
    };

    let r = run(&s, &cfg);
    let report = RunReport {
        scenario: &s.name,
        relaxation: cfg.relaxation.to_string(),
        success: r.success,
        failure: r.failure.as_deref(),
        metrics: &r.metrics,
        timings: &r.timings,
        statuses: &r.statuses,
        pose_relaxed: r.pose_relaxed,
        schedules: r.schedules.len(),
        cuts_applied: &r.cuts_applied,
        residuals: r.residuals.as_ref(),
        last_report: r.last_report.as_ref(),
    };
    let written = (|| -> Result<()> {
        write(&out_dir.join("metrics.json"), &serde_json::to_string_pretty(&report)?)?;
        if let Some(tr) = &r.trajectory {
            write(&out_dir.join("trajectory.json"), &tr.to_json())?;
            write(&out_dir.join("snapshots.svg"), &render::render_svg(&s, tr, snapshots))?;
        }
        Ok(())
    })();
    if let Err(e) = written {
        return report_error(&e);
    }
    match &r.failure {
        None => {
            println!(
                "success: {:.2} s total, C-Opt share {:.2}, {} cuts",
                r.metrics.a1_total_seconds, r.metrics.a2_copt_fraction, r.metrics.a3_cuts
            );
            EXIT_OK
        }
        Some(why) => {
            eprintln!("planner failure: {why}");
            EXIT_PLANNER
        }
    }
}

pub fn cmd_render(source: &ScenarioSource, trajectory: &Path, snapshots: usize, out: &Path) -> i32 {
    let done = (|| -> Result<()> {
        let s = source.load()?;
        let text = fs::read_to_string(trajectory).with_context(|| format!("cannot read {}", trajectory.display()))?;
        let tr = Trajectory::from_json(&text).with_context(|| format!("trajectory schema error in {}", trajectory.display()))?;
        write(out, &render::render_svg(&s, &tr, snapshots))
    })();
    done.map_or_else(|e| report_error(&e), |_| EXIT_OK)
}

/// Writes the C-Opt MILP in LP format. Uses the checkpointed kinematics in
/// `kin` when given, otherwise solves K-Opt first.
pub fn cmd_export_lp(source: &ScenarioSource, config: Option<&Path>, o: &Overrides, kin: Option<&Path>, out: &Path) -> i32 {
    let prepared = (|| -> Result<_> {
        let s = source.load()?;
        let cfg = load_config(config, o)?;
        let k = match kin {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
                Some(KinematicsSolution::from_json(&text).with_context(|| format!("schema error in {}", p.display()))?)
            }
            None => None,
        };
        Ok((s, cfg, k))
    })();
    let (s, cfg, k) = match prepared {
        Ok(v) => v,
        Err(e) => return report_error(&e),
    };
    let k = match k.map_or_else(|| solve_kopt(&s), Ok) {
        Ok(k) => k,
        Err(e) => {
            eprintln!("planner failure: {e}");
            return EXIT_PLANNER;
        }
    };
    let model = match build_copt(&s, &k, cfg.relaxation) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("planner failure: {e}");
            return EXIT_PLANNER;
        }
    };
    write(out, &write_lp(&model.model)).map_or_else(|e| report_error(&e), |_| EXIT_OK)
}

/// Runs the benchmark and writes `bench.csv`, `summary.csv` and the
/// effective `bench_spec.json` to `out_dir`.
pub fn cmd_bench(spec: &bench::BenchSpec, out_dir: &Path, threads: usize) -> i32 {
    let done = (|| -> Result<()> {
        fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
        let rows = bench::run_bench(spec, threads)?;
        let summary = bench::summarize(&rows);
        write(&out_dir.join("bench_spec.json"), &serde_json::to_string_pretty(spec)?)?;
        let open = |name: &str| {
            let p = out_dir.join(name);
            fs::File::create(&p).with_context(|| format!("cannot write {}", p.display()))
        };
        bench::write_csv(open("bench.csv")?, &rows)?;
        bench::write_csv(open("summary.csv")?, &summary)?;
        for r in &summary {
            println!(
                "{:<12} T={:<4} success {:>5.1}%  mean a1 {:>8.2} s  a2 {:.2}  a3 {:.2}",
                r.option,
                r.horizon,
                100.0 * r.success_rate,
                r.mean_a1,
                r.mean_a2,
                r.mean_a3
            );
        }
        Ok(())
    })();
    done.map_or_else(|e| report_error(&e), |_| EXIT_OK)
}

pub fn load_bench_spec(path: Option<&Path>, full_scale: bool) -> Result<bench::BenchSpec> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("bench spec schema error in {}", p.display()))
        }
        None if full_scale => Ok(bench::BenchSpec::full_scale()),
        None => Ok(bench::BenchSpec::default()),
    }
}
