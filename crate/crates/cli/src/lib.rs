//! Command-line front end: CSV ingestion, flat JSON configs, and the
//! artifacts behind every analysis (reports, effect draws, display curves,
//! resilience-set grids and simulation tables).

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{Map, Value};

pub use config::{AnalysisConfig, SimulateConfig};
pub use error::{CliError, Result};
pub use manifest::RunManifest;

/// JSON Schema of report.json.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");
/// JSON Schema of the analysis config file.
pub const ANALYSIS_CONFIG_SCHEMA: &str = include_str!("../schema/analysis_config.schema.json");
/// JSON Schema of the simulate config file.
pub const SIMULATE_CONFIG_SCHEMA: &str = include_str!("../schema/simulate_config.schema.json");

#[derive(Debug, Parser)]
#[command(
    name = "resilience",
    version,
    about = "Resilience of a surrogate-based treatment effect against the surrogate paradox"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Resilience probability and bound, with bootstrap SEs and display curves.
    Analyze {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        config: AnalysisArgs,
    },
    /// Grid search and boundary of the resilience set.
    ResilienceSet {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        config: AnalysisArgs,
    },
    /// Bootstrap standard errors only.
    Bootstrap {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        config: AnalysisArgs,
    },
    /// Input checks only; prints a JSON report.
    Check {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Simulation study over the built-in settings.
    Simulate {
        #[command(flatten)]
        config: SimulateArgs,
    },
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Study A CSV with columns group, s, y.
    #[arg(long)]
    pub study_a: PathBuf,
    /// Study B CSV with columns group, s.
    #[arg(long)]
    pub study_b: PathBuf,
}

/// Flags overriding keys of the analysis config file.
#[derive(Debug, Args, Default)]
pub struct AnalysisArgs {
    /// Flat JSON config file (a manifest.json is accepted too).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// gp, polynomial or fourier.
    #[arg(long)]
    pub class: Option<String>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Comma-separated coefficient variances of a basis class.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub variances: Option<Vec<f64>>,
    /// angular or period.
    #[arg(long)]
    pub fourier_convention: Option<String>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub bootstrap_replicates: Option<usize>,
    /// study_b_only or both_studies.
    #[arg(long)]
    pub bootstrap_scope: Option<String>,
    /// independent or common.
    #[arg(long)]
    pub bootstrap_draws: Option<String>,
    /// epanechnikov or gaussian.
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long)]
    pub grid_x_min: Option<f64>,
    #[arg(long)]
    pub grid_x_max: Option<f64>,
    #[arg(long)]
    pub grid_x_steps: Option<usize>,
    /// log or linear.
    #[arg(long)]
    pub grid_x_scale: Option<String>,
    #[arg(long)]
    pub grid_y_min: Option<f64>,
    #[arg(long)]
    pub grid_y_max: Option<f64>,
    #[arg(long)]
    pub grid_y_steps: Option<usize>,
    #[arg(long)]
    pub grid_y_scale: Option<String>,
    /// closed_form or monte_carlo.
    #[arg(long)]
    pub set_mode: Option<String>,
    #[arg(long)]
    pub set_draws: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long = "out")]
    pub output_dir: Option<String>,
}

/// Flags overriding keys of the simulate config file.
#[derive(Debug, Args, Default)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated setting ids (1-9).
    #[arg(long, value_delimiter = ',')]
    pub settings: Option<Vec<u8>>,
    /// Add the mismatched-class runs for the chosen settings.
    #[arg(long)]
    pub misspecification: bool,
    #[arg(long, visible_alias = "R")]
    pub replications: Option<usize>,
    #[arg(long)]
    pub n_a: Option<usize>,
    #[arg(long)]
    pub n_b: Option<usize>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub bootstrap_replicates: Option<usize>,
    #[arg(long)]
    pub bootstrap_scope: Option<String>,
    #[arg(long)]
    pub bootstrap_draws: Option<String>,
    #[arg(long)]
    pub oracle_generations: Option<usize>,
    #[arg(long)]
    pub oracle_draws_per_generation: Option<usize>,
    #[arg(long)]
    pub study_a_gp_structure: bool,
    #[arg(long)]
    pub fourier_convention: Option<String>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long = "out")]
    pub output_dir: Option<String>,
}

fn put<T: Serialize>(map: &mut Map<String, Value>, key: &str, value: &Option<T>) {
    if let Some(v) = value {
        map.insert(
            key.into(),
            serde_json::to_value(v).expect("flag values serialize"),
        );
    }
}

impl AnalysisArgs {
    fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        put(&mut m, "seed", &self.seed);
        put(&mut m, "class", &self.class);
        put(&mut m, "sigma2", &self.sigma2);
        put(&mut m, "theta", &self.theta);
        put(&mut m, "variances", &self.variances);
        put(&mut m, "fourier_convention", &self.fourier_convention);
        put(&mut m, "draws", &self.draws);
        put(&mut m, "alpha", &self.alpha);
        put(&mut m, "bootstrap_replicates", &self.bootstrap_replicates);
        put(&mut m, "bootstrap_scope", &self.bootstrap_scope);
        put(&mut m, "bootstrap_draws", &self.bootstrap_draws);
        put(&mut m, "kernel", &self.kernel);
        put(&mut m, "bandwidth", &self.bandwidth);
        put(&mut m, "grid_x_min", &self.grid_x_min);
        put(&mut m, "grid_x_max", &self.grid_x_max);
        put(&mut m, "grid_x_steps", &self.grid_x_steps);
        put(&mut m, "grid_x_scale", &self.grid_x_scale);
        put(&mut m, "grid_y_min", &self.grid_y_min);
        put(&mut m, "grid_y_max", &self.grid_y_max);
        put(&mut m, "grid_y_steps", &self.grid_y_steps);
        put(&mut m, "grid_y_scale", &self.grid_y_scale);
        put(&mut m, "set_mode", &self.set_mode);
        put(&mut m, "set_draws", &self.set_draws);
        put(&mut m, "workers", &self.workers);
        put(&mut m, "output_dir", &self.output_dir);
        m
    }

    pub fn resolve(&self) -> Result<AnalysisConfig> {
        config::load(self.config.as_deref(), self.overrides())
    }
}

impl SimulateArgs {
    fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        put(&mut m, "seed", &self.seed);
        put(&mut m, "settings", &self.settings);
        put(
            &mut m,
            "misspecification",
            &self.misspecification.then_some(true),
        );
        put(&mut m, "replications", &self.replications);
        put(&mut m, "n_a", &self.n_a);
        put(&mut m, "n_b", &self.n_b);
        put(&mut m, "draws", &self.draws);
        put(&mut m, "alpha", &self.alpha);
        put(&mut m, "bootstrap_replicates", &self.bootstrap_replicates);
        put(&mut m, "bootstrap_scope", &self.bootstrap_scope);
        put(&mut m, "bootstrap_draws", &self.bootstrap_draws);
        put(&mut m, "oracle_generations", &self.oracle_generations);
        put(
            &mut m,
            "oracle_draws_per_generation",
            &self.oracle_draws_per_generation,
        );
        put(
            &mut m,
            "study_a_gp_structure",
            &self.study_a_gp_structure.then_some(true),
        );
        put(&mut m, "fourier_convention", &self.fourier_convention);
        put(&mut m, "workers", &self.workers);
        put(&mut m, "output_dir", &self.output_dir);
        m
    }

    pub fn resolve(&self) -> Result<SimulateConfig> {
        config::load(self.config.as_deref(), self.overrides())
    }
}

fn output_dir(dir: &Option<String>) -> Result<&Path> {
    dir.as_deref().map(Path::new).ok_or_else(|| {
        CliError::Config("an output directory is required (--out or output_dir)".into())
    })
}

fn in_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(job))
}

/// Run one command; returns the summary line printed on success.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Analyze { data, config } => {
            let cfg = config.resolve()?;
            let out = output_dir(&cfg.output_dir)?;
            in_pool(cfg.workers, || {
                commands::analyze(&cfg, &data.study_a, &data.study_b, out)
            })?
        }
        Command::ResilienceSet { data, config } => {
            let cfg = config.resolve()?;
            let out = output_dir(&cfg.output_dir)?;
            in_pool(cfg.workers, || {
                commands::resilience_set_cmd(&cfg, &data.study_a, &data.study_b, out)
            })?
        }
        Command::Bootstrap { data, config } => {
            let cfg = config.resolve()?;
            let out = output_dir(&cfg.output_dir)?;
            in_pool(cfg.workers, || {
                commands::bootstrap_cmd(&cfg, &data.study_a, &data.study_b, out)
            })?
        }
        Command::Check { data } => commands::check(&data.study_a, &data.study_b),
        Command::Simulate { config } => {
            let cfg = config.resolve()?;
            let out = output_dir(&cfg.output_dir)?;
            in_pool(cfg.workers, || commands::simulate(&cfg, out))?
        }
    }
}
