//! Configuration, orchestration, persistence and reporting for the
//! `dissipeuler` experiments.
//!
//! A run is `config -> Outcome` (pure, in memory) followed by
//! [`artifacts::write_run`], which writes the files and a manifest with their
//! SHA-256 hashes. Given the same configuration and seed the manifest is
//! byte-identical for any worker count.

pub mod artifacts;
pub mod config;
pub mod experiments;
pub mod report;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use artifacts::{Audit, Manifest, Outcome};
pub use config::{Experiment, RunConfig};
pub use dissipeuler_core as core;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Run(String),
    #[error("{0}")]
    Report(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) | CliError::Json(_) => 3,
            CliError::Run(_) => 4,
            CliError::Report(_) => 5,
        }
    }
}

pub(crate) fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

/// Reads and validates a configuration file; returns it with its raw text.
pub fn load_config(path: &Path) -> Result<(RunConfig, String), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok((RunConfig::from_toml(&text)?, text))
}

/// Seed from the command line, else from the configuration.
pub fn resolve_seed(cfg: &RunConfig, seed: Option<u64>) -> Result<u64, CliError> {
    seed.or(cfg.seed)
        .ok_or_else(|| CliError::Config("seed: required (in the config or via --seed)".into()))
}

/// Runs the configured experiment in memory; the echoed configuration is
/// part of the outcome.
pub fn execute(cfg: &RunConfig, raw: &str, seed: u64) -> Result<Outcome, CliError> {
    let mut out = match cfg.experiment {
        Experiment::Simulate => experiments::simulate::run(cfg, seed)?,
        Experiment::Vanish => experiments::vanish::run(cfg, seed)?,
        Experiment::Ym => experiments::ym::run(cfg, seed)?,
        Experiment::Martingale => experiments::martingale::run(cfg, seed)?,
        Experiment::Weakstrong => experiments::weakstrong::run(cfg, seed)?,
    };
    out.file("config.toml", raw.as_bytes().to_vec());
    let mut resolved = cfg.clone();
    resolved.seed = Some(seed);
    resolved.out = None;
    out.json("resolved_config.json", &resolved)?;
    Ok(out)
}

pub struct RunSummary {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

/// Loads `config`, checks it matches `experiment`, runs it and writes the
/// artifact directory (`out`, else the config's `out`, else
/// `runs/<experiment>-<seed>`).
pub fn run(
    experiment: Experiment,
    config: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<RunSummary, CliError> {
    let (cfg, raw) = load_config(config)?;
    if cfg.experiment != experiment {
        return Err(CliError::Config(format!(
            "experiment: config is for `{}`, not `{}`",
            cfg.experiment.name(),
            experiment.name()
        )));
    }
    let seed = resolve_seed(&cfg, seed)?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from(format!("runs/{}-{seed}", experiment.name())));
    let outcome = execute(&cfg, &raw, seed)?;
    let manifest = artifacts::write_run(&dir, experiment.name(), seed, &outcome)?;
    Ok(RunSummary { dir, manifest })
}

/// Runs `f` on a dedicated pool of `threads` workers (the global pool when `None`).
pub fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::Config("threads: must be >= 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(run_err)?;
            Ok(pool.install(f))
        }
    }
}
