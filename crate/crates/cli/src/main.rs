use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hcto_cli::{
    cmd_bench, cmd_export_lp, cmd_render, cmd_run, load_bench_spec, relaxation_from_flags, Overrides, ScenarioSource,
    EXIT_IO, EXIT_OK,
};

#[derive(Parser)]
#[command(name = "hcto", version, about = "Contact-rich planar manipulation planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario JSON file.
    #[arg(required_unless_present = "builtin", conflicts_with = "builtin")]
    scenario: Option<PathBuf>,
    /// Built-in scenario instead of a file: resting, sliding, pivot, two-arm-pivot, grasp-lift.
    #[arg(long)]
    builtin: Option<String>,
    /// Horizon for a built-in scenario.
    #[arg(long, default_value_t = 10)]
    horizon: usize,
}

impl ScenarioArgs {
    fn source(&self) -> ScenarioSource {
        match &self.builtin {
            Some(name) => ScenarioSource::Builtin { name: name.clone(), horizon: self.horizon },
            None => ScenarioSource::File(self.scenario.clone().expect("required by clap")),
        }
    }
}

#[derive(Args)]
struct PlanArgs {
    /// Pipeline config JSON; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// mccormick, naive or encoded, optionally with `:C`.
    #[arg(long)]
    relaxation: Option<String>,
    /// Region count C for naive or encoded.
    #[arg(long)]
    regions: Option<usize>,
    /// Bit count K for encoded; C = 2^K.
    #[arg(long)]
    bits: Option<u32>,
    #[arg(long)]
    max_cuts: Option<usize>,
    /// Seconds per C-Opt solve and per Q-Opt stage.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    robustness_weight: Option<f64>,
}

impl PlanArgs {
    fn overrides(&self) -> anyhow::Result<Overrides> {
        let relaxation = match (&self.relaxation, self.regions, self.bits) {
            (None, None, None) => None,
            (kind, c, k) => Some(relaxation_from_flags(kind.as_deref().unwrap_or("encoded"), c, k)?),
        };
        Ok(Overrides {
            relaxation,
            max_cuts: self.max_cuts,
            time_limit: self.time_limit,
            robustness_weight: self.robustness_weight,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Plan a scenario; writes trajectory.json, metrics.json and snapshots.svg.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, short, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        snapshots: usize,
    },
    /// Compare relaxations on randomly sampled bimanual instances.
    Bench {
        /// Bench spec JSON; missing fields take defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, short, default_value = "bench-out")]
        out: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        /// Comma-separated horizons.
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
        /// Comma-separated relaxations, e.g. mccormick,encoded:8.
        #[arg(long, value_delimiter = ',')]
        options: Option<Vec<String>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        time_limit: Option<f64>,
        /// 500 samples at T = 200 unless overridden.
        #[arg(long)]
        full_scale: bool,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Draw a saved trajectory as SVG.
    Render {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, default_value_t = 10)]
        snapshots: usize,
        #[arg(long, short, default_value = "snapshots.svg")]
        out: PathBuf,
    },
    /// Write the contact MILP in LP format.
    ExportLp {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        plan: PlanArgs,
        /// Kinematics checkpoint (kin.json) to build on instead of solving K-Opt.
        #[arg(long)]
        kin: Option<PathBuf>,
        #[arg(long, short, default_value = "copt.lp")]
        out: PathBuf,
    },
    /// Print a built-in scenario as JSON.
    Scenario {
        name: String,
        #[arg(long, default_value_t = 10)]
        horizon: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = match Cli::parse().command {
        Command::Run { scenario, plan, out, snapshots } => match plan.overrides() {
            Ok(o) => cmd_run(&scenario.source(), plan.config.as_deref(), &o, &out, snapshots),
            Err(e) => usage(e),
        },
        Command::Bench { spec, out, samples, horizons, options, seed, time_limit, full_scale, jobs } => {
            let spec = load_bench_spec(spec.as_deref(), full_scale).and_then(|mut s| {
                if let Some(n) = samples {
                    s.samples = n;
                }
                if let Some(h) = horizons {
                    s.horizons = h;
                }
                if let Some(o) = options {
                    s.options = o.iter().map(|x| x.parse()).collect::<Result<_, String>>().map_err(anyhow::Error::msg)?;
                }
                if let Some(seed) = seed {
                    s.seed = seed;
                }
                if let Some(t) = time_limit {
                    s.time_limit = t;
                }
                Ok(s)
            });
            match spec {
                Ok(s) => cmd_bench(&s, &out, jobs),
                Err(e) => usage(e),
            }
        }
        Command::Render { scenario, trajectory, snapshots, out } => {
            cmd_render(&scenario.source(), &trajectory, snapshots, &out)
        }
        Command::ExportLp { scenario, plan, kin, out } => match plan.overrides() {
            Ok(o) => cmd_export_lp(&scenario.source(), plan.config.as_deref(), &o, kin.as_deref(), &out),
            Err(e) => usage(e),
        },
        Command::Scenario { name, horizon } => match (ScenarioSource::Builtin { name, horizon }).load() {
            Ok(s) => {
                println!("{}", s.to_json_string());
                EXIT_OK
            }
            Err(e) => usage(e),
        },
    };
    ExitCode::from(code as u8)
}

fn usage(e: anyhow::Error) -> i32 {
    eprintln!("error: {e:#}");
    EXIT_IO
}
