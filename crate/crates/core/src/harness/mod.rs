//! Experiment runner: declarative configs, named presets, seeded parallel
//! trials and CSV outputs with a JSON run manifest.

mod config;
mod experiments;
pub mod verify;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::ensembles::trial_seed;
use crate::error::{Error, Result};

pub use config::{
    apply_override, load_config, preset, preset_names, EstimatorSettings, ExperimentConfig,
    ExperimentKind, Sweep, PRESETS,
};
pub use experiments::{
    estimator_trial, run_experiment, warmstart_trial, EstimatorTrial, ExperimentOutcome,
    WarmstartStep,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "SEQCS_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub version: String,
    pub status: String,
    /// `(trial, seed)` pairs; each trial can be rerun alone from its seed.
    pub trial_seeds: Vec<(u64, u64)>,
    pub outputs: Vec<String>,
    pub failures: Vec<String>,
    pub notes: BTreeMap<String, serde_json::Value>,
    pub started_unix: u64,
    pub wall_clock_secs: f64,
}

impl RunManifest {
    fn new(config: &ExperimentConfig) -> Self {
        let started_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        RunManifest {
            config: config.clone(),
            version: VERSION.to_string(),
            status: "running".into(),
            trial_seeds: (0..config.trials as u64)
                .map(|t| (t, trial_seed(config.seed, t)))
                .collect(),
            outputs: Vec::new(),
            failures: Vec::new(),
            notes: BTreeMap::new(),
            started_unix,
            wall_clock_secs: 0.0,
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(dir.join("manifest.json"), text)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
}

impl RunSummary {
    pub fn failed(&self) -> bool {
        !self.manifest.failures.is_empty()
    }
}

/// Worker count from `SEQCS_WORKERS`; 0 (all cores) when unset.
pub fn workers_from_env() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(0),
    }
}

/// Runs one experiment with the worker count from the environment.
pub fn run(config: &ExperimentConfig) -> Result<RunSummary> {
    run_with_workers(config, workers_from_env()?)
}

/// Runs one experiment on `workers` threads (0 = all cores), writing its
/// CSVs and manifest into `config.out`.
pub fn run_with_workers(config: &ExperimentConfig, workers: usize) -> Result<RunSummary> {
    config.validate()?;
    let dir = config.out.clone();
    fs::create_dir_all(&dir)?;
    let mut manifest = RunManifest::new(config);
    manifest.write(&dir)?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let outcome = pool.install(|| run_experiment(config, &dir))?;
    manifest.outputs = outcome.outputs;
    manifest.failures = outcome.failures;
    manifest.notes = outcome.notes;
    manifest.status = if manifest.failures.is_empty() { "complete" } else { "failed" }.into();
    manifest.wall_clock_secs = start.elapsed().as_secs_f64();
    manifest.write(&dir)?;
    Ok(RunSummary {
        out_dir: dir,
        manifest,
    })
}
