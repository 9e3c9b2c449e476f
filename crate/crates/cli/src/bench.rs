//! Randomized benchmark comparing relaxation options.

use std::collections::BTreeMap;
use std::io::Write;

use anyhow::{bail, Result};
use hcto::copt::Relaxation;
use hcto::pipeline::{run, PipelineConfig};
use hcto::scenarios::{sample_bimanual_sized, SampleRanges, BOX_H, BOX_W};
use hcto::Scenario;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Relaxations as their command-line names (`mccormick`, `encoded:8`, ...).
mod option_names {
    use hcto::copt::Relaxation;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Relaxation], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|r| r.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Relaxation>, D::Error> {
        Vec::<String>::deserialize(d)?.iter().map(|s| s.parse().map_err(D::Error::custom)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSpec {
    pub samples: usize,
    /// Half-widths of the uniform start and goal ranges (m, m, rad).
    pub ranges: SampleRanges,
    /// Box `[width, height]` in meters.
    pub box_size: [f64; 2],
    /// Time step in seconds.
    pub step: f64,
    pub horizons: Vec<usize>,
    #[serde(with = "option_names")]
    pub options: Vec<Relaxation>,
    pub seed: u64,
    /// Seconds per C-Opt solve and per Q-Opt stage.
    pub time_limit: f64,
    pub max_cuts: usize,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            samples: 20,
            ranges: SampleRanges::default(),
            box_size: [BOX_W, BOX_H],
            step: 0.2,
            horizons: vec![10, 20],
            options: vec![Relaxation::McCormick, Relaxation::BinaryEncoded(8)],
            seed: 7,
            time_limit: 60.0,
            max_cuts: 25,
        }
    }
}

impl BenchSpec {
    /// The full-size study: 500 samples at T = 200, one minute per stage.
    pub fn full_scale() -> Self {
        Self { samples: 500, horizons: vec![200], ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.ranges;
        if ![r.x, r.y, r.theta].iter().all(|v| v.is_finite() && *v >= 0.0) {
            bail!("sampling ranges must be finite and nonnegative");
        }
        if !(self.box_size[0] > 0.0 && self.box_size[1] > 0.0) {
            bail!("box size must be positive");
        }
        if !(self.step > 0.0) {
            bail!("step must be positive");
        }
        if self.samples == 0 || self.horizons.is_empty() || self.options.is_empty() {
            bail!("need at least one sample, horizon and option");
        }
        if let Some(t) = self.horizons.iter().find(|&&t| t < 2) {
            bail!("horizon {t} is shorter than 2 steps");
        }
        if !(self.time_limit > 0.0) {
            bail!("time limit must be positive");
        }
        Ok(())
    }

    /// The sampled instances, one per sample index, at the first horizon.
    pub fn scenarios(&self) -> Vec<Scenario> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.samples)
            .map(|_| sample_bimanual_sized(&mut rng, &self.ranges, self.box_size, self.horizons[0], self.step))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub sample: usize,
    pub option: String,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub success: bool,
    pub a1_total_seconds: f64,
    pub a2_copt_fraction: f64,
    pub a3_cuts: usize,
}

pub const CSV_HEADER: &str = "sample,option,T,success,a1_total_seconds,a2_copt_fraction,a3_cuts";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub option: String,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub runs: usize,
    pub success_rate: f64,
    pub mean_a1: f64,
    pub mean_a2: f64,
    pub mean_a3: f64,
}

/// Runs every (sample, horizon, option) triple on `threads` workers
/// (0 = rayon default). Rows come back in that nested order.
pub fn run_bench(spec: &BenchSpec, threads: usize) -> Result<Vec<BenchRow>> {
    spec.validate()?;
    let scenarios = spec.scenarios();
    let mut jobs = Vec::new();
    for k in 0..spec.samples {
        for &t in &spec.horizons {
            for &opt in &spec.options {
                jobs.push((k, t, opt));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let rows = pool.install(|| {
        jobs.par_iter()
            .map(|&(k, t, opt)| {
                let mut s = scenarios[k].clone();
                s.horizon = t;
                let cfg = PipelineConfig {
                    relaxation: opt,
                    max_cuts: spec.max_cuts,
                    copt_time_limit: Some(spec.time_limit),
                    qopt_time_limit: Some(spec.time_limit),
                    ..PipelineConfig::default()
                };
                let r = run(&s, &cfg);
                log::info!("sample {k} T={t} {opt}: success {} cuts {}", r.success, r.metrics.a3_cuts);
                BenchRow {
                    sample: k,
                    option: opt.to_string(),
                    horizon: t,
                    success: r.success,
                    a1_total_seconds: r.metrics.a1_total_seconds,
                    a2_copt_fraction: r.metrics.a2_copt_fraction,
                    a3_cuts: r.metrics.a3_cuts,
                }
            })
            .collect()
    });
    Ok(rows)
}

/// Per (horizon, option) means, horizons ascending, options in first-seen order.
pub fn summarize(rows: &[BenchRow]) -> Vec<SummaryRow> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<(usize, usize), Vec<&BenchRow>> = BTreeMap::new();
    for r in rows {
        let k = order.iter().position(|o| *o == r.option).unwrap_or_else(|| {
            order.push(&r.option);
            order.len() - 1
        });
        groups.entry((r.horizon, k)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((horizon, k), rs)| (horizon, order[k], rs))
        .map(|(horizon, option, rs)| {
            let n = rs.len() as f64;
            let mean = |f: &dyn Fn(&BenchRow) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            SummaryRow {
                option: option.to_string(),
                horizon,
                runs: rs.len(),
                success_rate: mean(&|r| r.success as u8 as f64),
                mean_a1: mean(&|r| r.a1_total_seconds),
                mean_a2: mean(&|r| r.a2_copt_fraction),
                mean_a3: mean(&|r| r.a3_cuts as f64),
            }
        })
        .collect()
}

pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
