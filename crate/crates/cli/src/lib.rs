//! Experiment harness for `rvf-core`: TOML configurations, frame corpora on
//! disk, deterministic CSV reports and the `rvf` command line.

pub mod commands;
pub mod config;
pub mod digest;
pub mod error;
pub mod experiments;
pub mod frames;
pub mod report;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{CliError, Result};
pub use experiments::{run_experiment, Outcome};
pub use report::RunReport;

/// Installs a global rayon pool of `RVF_THREADS` threads when the variable is set.
pub fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("RVF_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| {
            CliError::Config(format!(
                "RVF_THREADS must be a positive integer, got `{value}`"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("RVF_THREADS: {e}")))
}
