//! Batch front end: reads a JSON experiment config, runs it, and writes CSV
//! data, a JSON summary and a hashed manifest.

use std::time::Instant;

use serde_json::{json, Value};

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{parse_config, parse_config_str, ExperimentConfig};
pub use output::{FileEntry, OutputDir};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("output error: {0}")]
    Output(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    /// Process exit status: 1 for bad input or unwritable output, 2 for
    /// numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Output(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl From<dsgd_lab_core::Error> for CliError {
    fn from(e: dsgd_lab_core::Error) -> Self {
        match e {
            dsgd_lab_core::Error::InvalidInput(msg) => CliError::Input(msg),
            e if e.is_numerical() => CliError::Numerical(e.to_string()),
            e => CliError::Input(e.to_string()),
        }
    }
}

/// What a finished run left on disk.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: Value,
    pub files: Vec<FileEntry>,
}

/// SHA-256 of the resolved config with `output_dir` blanked, so moving the
/// output does not change the hash.
pub fn config_hash(config: &ExperimentConfig) -> Result<String, CliError> {
    let mut echo = config.clone();
    echo.output_dir = Default::default();
    let bytes = serde_json::to_vec(&echo).map_err(|e| CliError::Output(e.to_string()))?;
    Ok(output::sha256_hex(&bytes))
}

/// Runs `config` on a pool of `jobs` threads and writes everything under
/// `config.output_dir`. The manifest is written last.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<RunOutcome, CliError> {
    config.validate()?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Output(format!("cannot start worker pool: {e}")))?;
    let mut out = OutputDir::create(&config.output_dir)?;
    let headline = pool.install(|| experiments::run(config, &mut out))?;

    let hash = config_hash(config)?;
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "experiment": config.experiment.name(),
        "config_hash": hash,
        "results": headline,
    });
    out.write_json("summary.json", &summary)?;

    let plan = config.plan();
    let seeds: Vec<Value> = (0..config.replicates)
        .map(|r| {
            json!({
                "replicate": r,
                "data_seed": plan.data_seed(r),
                "train_seed": plan.train_seed(r),
            })
        })
        .collect();
    let files = out.files().to_vec();
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "config_hash": hash,
        "jobs": jobs,
        "wall_clock_seconds": start.elapsed().as_secs_f64(),
        "base_seed": config.seed,
        "experiment_seed": config.experiment_seed(),
        "seeds": seeds,
        "files": files,
    });
    let mut bytes =
        serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Output(e.to_string()))?;
    bytes.push(b'\n');
    output::write_atomic(&config.output_dir.join("manifest.json"), &bytes)?;
    Ok(RunOutcome { summary, files })
}
