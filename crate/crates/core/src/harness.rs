//! Seeded Monte Carlo runs over scheduling slots, and their CSV/JSON exports.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::error::ConfigError;
use crate::fairness::{log_utility, pf_update, RateAverages};
use crate::network::{generate_topology, link_rates, LinkWeights, TopologyConfig};
use crate::rng::{self, Stream};
use crate::schedulers::{run_scheduler, SchedulerConfig, SchedulerError, SchedulerId};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("seed {seed}, slot {slot}: {source}")]
    Scheduler {
        seed: u64,
        slot: usize,
        #[source]
        source: SchedulerError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    SumRate,
    PfLogUtility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerSpec {
    pub id: SchedulerId,
    #[serde(default)]
    pub config: SchedulerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub topology: TopologyConfig,
    pub scheduler: SchedulerSpec,
    #[serde(default = "default_seeds")]
    pub num_seeds: usize,
    #[serde(default = "default_slots")]
    pub num_slots: usize,
    #[serde(default)]
    pub objective: Objective,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Seeds are `base_seed, base_seed + 1, …`.
    #[serde(default)]
    pub base_seed: u64,
}

fn default_seeds() -> usize {
    50
}

fn default_slots() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn new(topology: TopologyConfig, id: SchedulerId) -> Self {
        Self {
            topology,
            scheduler: SchedulerSpec { id, config: SchedulerConfig::default() },
            num_seeds: default_seeds(),
            num_slots: default_slots(),
            objective: Objective::SumRate,
            output_dir: default_output_dir(),
            base_seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::new("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses `text` after setting the dotted `param` (e.g.
    /// `topology.num_links`) to `value`, read as JSON or else as a string.
    pub fn from_json_with_override(text: &str, param: &str, value: &str) -> Result<Self, ConfigError> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| ConfigError::new("config", e.to_string()))?;
        let parsed = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
        let mut node = &mut doc;
        let keys: Vec<&str> = param.split('.').collect();
        for (depth, key) in keys.iter().enumerate() {
            let map = node.as_object_mut().ok_or_else(|| ConfigError::new(param, "path does not name an object"))?;
            if depth + 1 == keys.len() {
                map.insert(key.to_string(), parsed);
                break;
            }
            node = map.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
        }
        let cfg: Self = serde_json::from_value(doc).map_err(|e| ConfigError::new(param, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_seeds == 0 {
            return Err(ConfigError::new("num_seeds", "must be at least 1"));
        }
        if self.num_slots == 0 {
            return Err(ConfigError::new("num_slots", "must be at least 1"));
        }
        self.topology.validate()?;
        self.scheduler.config.validate()
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.num_seeds as u64).map(move |k| self.base_seed.wrapping_add(k))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    /// Per-receiver rates in bits/s/Hz.
    pub rates: Vec<f64>,
    /// Per-receiver weights the scheduler was given.
    pub weights: Vec<f64>,
    /// Weighted sum rate after each scheduler iteration.
    pub trace: Vec<f64>,
}

impl SlotRecord {
    pub fn sum_rate(&self) -> f64 {
        self.rates.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub slots: Vec<SlotRecord>,
    pub averages: RateAverages,
}

impl SeedResult {
    pub fn log_utility(&self) -> f64 {
        log_utility(&self.averages)
    }

    pub fn mean_sum_rate(&self) -> f64 {
        self.slots.iter().map(SlotRecord::sum_rate).sum::<f64>() / self.slots.len().max(1) as f64
    }

    /// Per-receiver long-term rates in bits/s/Hz.
    pub fn long_term_rates(&self) -> Vec<f64> {
        self.averages.long_term()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub scheduler: SchedulerId,
    pub antennas: usize,
    pub bandwidth_hz: f64,
    pub objective: Objective,
    pub seeds: Vec<SeedResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean_sum_rate: f64,
    pub log_utility: f64,
    pub median_rate: f64,
    pub seeds: usize,
    pub slots: usize,
    pub rate_units: String,
}

impl ExperimentResult {
    pub fn empty(scheduler: SchedulerId, antennas: usize, bandwidth_hz: f64) -> Self {
        Self { scheduler, antennas, bandwidth_hz, objective: Objective::SumRate, seeds: Vec::new() }
    }

    /// Long-term per-receiver rates of every seed, in bits/s/Hz.
    pub fn rate_samples(&self) -> Vec<f64> {
        self.seeds.iter().flat_map(SeedResult::long_term_rates).collect()
    }

    /// Mean over seeds of the slot-0 trace, each padded with its final value.
    pub fn mean_convergence(&self) -> Vec<f64> {
        let traces: Vec<&Vec<f64>> = self.seeds.iter().filter_map(|s| s.slots.first()).map(|s| &s.trace).collect();
        let len = traces.iter().map(|t| t.len()).max().unwrap_or(0);
        (0..len)
            .map(|k| {
                let total: f64 = traces.iter().map(|t| t.get(k).or(t.last()).copied().unwrap_or(0.0)).sum();
                total / traces.len() as f64
            })
            .collect()
    }

    pub fn summary(&self) -> Summary {
        let n = self.seeds.len().max(1) as f64;
        Summary {
            mean_sum_rate: self.seeds.iter().map(SeedResult::mean_sum_rate).sum::<f64>() / n,
            log_utility: self.seeds.iter().map(SeedResult::log_utility).sum::<f64>() / n,
            median_rate: median(&self.rate_samples()),
            seeds: self.seeds.len(),
            slots: self.seeds.first().map_or(0, |s| s.slots.len()),
            rate_units: "bits/s/Hz; log_utility is the natural log of bits/s/Hz summed over receivers".into(),
        }
    }
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Runs one seed: the instance from the topology stream, slot 0 on its
/// initial fading, and fresh fading from the slot's own stream afterwards.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedResult, HarnessError> {
    let mut net = generate_topology(&cfg.topology, seed)?;
    let mut averages = RateAverages::with_defaults(net.num_rx());
    let mut weights = vec![1.0; net.num_rx()];
    let mut slots = Vec::with_capacity(cfg.num_slots);
    for slot in 0..cfg.num_slots {
        if slot > 0 {
            net.redraw_fading(&mut rng::stream(seed, Stream::Fading, slot as u64));
        }
        if cfg.objective == Objective::PfLogUtility {
            weights = averages.receiver_weights();
        }
        let mean = weights.iter().sum::<f64>() / weights.len() as f64;
        let w = LinkWeights::per_receiver(&net, &weights.iter().map(|x| x / mean).collect::<Vec<_>>());
        let sol = run_scheduler(cfg.scheduler.id, &net, &w, &cfg.scheduler.config)
            .map_err(|source| HarnessError::Scheduler { seed, slot, source })?;
        let rates = link_rates(&sol.beams, &sol.schedule, &net);
        averages = pf_update(&averages, &rates).1;
        slots.push(SlotRecord { rates, weights: weights.clone(), trace: sol.objective_trace });
    }
    Ok(SeedResult { seed, slots, averages })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    let seeds = cfg.seeds().map(|seed| run_seed(cfg, seed)).collect::<Result<_, _>>()?;
    Ok(ExperimentResult {
        scheduler: cfg.scheduler.id,
        antennas: cfg.topology.num_antennas,
        bandwidth_hz: cfg.topology.bandwidth_hz,
        objective: cfg.objective,
        seeds,
    })
}

/// Empirical CDF rows `(scheduler, rate_bps, cdf)` per result.
pub fn write_cdf<W: Write>(results: &[ExperimentResult], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheduler", "rate_bps", "cdf"])?;
    for r in results {
        let mut samples = r.rate_samples();
        samples.sort_by(f64::total_cmp);
        let n = samples.len() as f64;
        for (k, x) in samples.iter().enumerate() {
            w.serialize((r.scheduler.as_str(), x * r.bandwidth_hz, (k + 1) as f64 / n))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rows `(scheduler, antennas, iteration, sum_rate)` of the seed-averaged
/// slot-0 objective trace.
pub fn write_convergence<W: Write>(results: &[ExperimentResult], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheduler", "antennas", "iteration", "sum_rate"])?;
    for r in results {
        for (k, v) in r.mean_convergence().iter().enumerate() {
            w.serialize((r.scheduler.as_str(), r.antennas, k, v))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Summaries keyed by scheduler id.
pub fn summary_json(results: &[ExperimentResult]) -> Value {
    let map: BTreeMap<String, Summary> = results.iter().map(|r| (r.scheduler.to_string(), r.summary())).collect();
    serde_json::to_value(map).expect("summaries serialize")
}

/// Rows `(scheduler, param, value, mean_sum_rate, log_utility)`, one per
/// scheduler and swept value.
pub fn write_sweep<W: Write>(param: &str, points: &[(String, Vec<ExperimentResult>)], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheduler", "param", "value", "mean_sum_rate", "log_utility"])?;
    for (value, results) in points {
        for r in results {
            let s = r.summary();
            w.serialize((r.scheduler.as_str(), param, value, s.mean_sum_rate, s.log_utility))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn export_sweep(param: &str, points: &[(String, Vec<ExperimentResult>)], path: &Path) -> Result<(), HarnessError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    write_sweep(param, points, file).map_err(|source| HarnessError::Csv { path: path.to_path_buf(), source })
}

fn write_csv_file(
    path: &Path,
    results: &[ExperimentResult],
    f: fn(&[ExperimentResult], fs::File) -> csv::Result<()>,
) -> Result<(), HarnessError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    f(results, file).map_err(|source| HarnessError::Csv { path: path.to_path_buf(), source })
}

pub fn export_cdf(results: &[ExperimentResult], path: &Path) -> Result<(), HarnessError> {
    write_csv_file(path, results, write_cdf)
}

pub fn export_convergence(results: &[ExperimentResult], path: &Path) -> Result<(), HarnessError> {
    write_csv_file(path, results, write_convergence)
}

pub fn export_summary(results: &[ExperimentResult], path: &Path) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(&summary_json(results)).expect("json values serialize");
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Writes `cdf.csv`, `convergence.csv` and `summary.json` into `dir`.
pub fn export_all(results: &[ExperimentResult], dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    export_cdf(results, &dir.join("cdf.csv"))?;
    export_convergence(results, &dir.join("convergence.csv"))?;
    export_summary(results, &dir.join("summary.json"))
}
