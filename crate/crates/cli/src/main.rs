use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fplinq_core::harness::{self, ExperimentConfig, ExperimentResult, HarnessError};
use fplinq_core::{ConfigError, SchedulerId};

#[derive(Parser)]
#[command(name = "fplinq", version, about = "Seeded D2D link-scheduling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write cdf.csv, convergence.csv and summary.json.
    Run(Common),
    /// Repeat an experiment for each value of one config field and write sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted config field, e.g. `topology.num_links`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Scheduler ids overriding the config, comma separated.
    #[arg(long, value_delimiter = ',')]
    scheduler: Vec<SchedulerId>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Config(ConfigError),
    Run(HarnessError),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(c) => Failure::Config(c),
            other => Failure::Run(other),
        }
    }
}

fn read_config(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|e| ConfigError::new("config", format!("{}: {e}", path.display())))
}

impl Common {
    /// One config per requested scheduler, with command-line overrides applied.
    fn expand(&self, mut cfg: ExperimentConfig) -> Result<Vec<ExperimentConfig>, ConfigError> {
        if let Some(n) = self.seeds {
            cfg.num_seeds = n;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg.validate()?;
        if self.scheduler.is_empty() {
            return Ok(vec![cfg]);
        }
        Ok(self
            .scheduler
            .iter()
            .map(|&id| {
                let mut c = cfg.clone();
                c.scheduler.id = id;
                c
            })
            .collect())
    }
}

fn run_all(cfgs: &[ExperimentConfig]) -> Result<Vec<ExperimentResult>, HarnessError> {
    cfgs.iter().map(harness::run_experiment).collect()
}

fn run(common: &Common) -> Result<(), Failure> {
    let cfgs = common.expand(ExperimentConfig::from_json(&read_config(&common.config)?)?)?;
    let results = run_all(&cfgs)?;
    let dir = &cfgs[0].output_dir;
    harness::export_all(&results, dir)?;
    println!("{}", serde_json::to_string_pretty(&harness::summary_json(&results)).expect("json values serialize"));
    Ok(())
}

fn sweep(common: &Common, param: &str, values: &[String]) -> Result<(), Failure> {
    let text = read_config(&common.config)?;
    let mut points = Vec::new();
    let mut root = None;
    for value in values {
        let cfgs = common.expand(ExperimentConfig::from_json_with_override(&text, param, value)?)?;
        let results = run_all(&cfgs)?;
        let base = root.get_or_insert_with(|| cfgs[0].output_dir.clone());
        harness::export_all(&results, &base.join(format!("{param}={value}")))?;
        eprintln!("{param}={value}: done");
        points.push((value.clone(), results));
    }
    let root = root.expect("at least one value");
    harness::export_sweep(param, &points, &root.join("sweep.csv"))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(common) => run(common),
        Command::Sweep { common, param, values } => sweep(common, param, values),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
