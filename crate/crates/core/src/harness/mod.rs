//! Experiment runner: replications, regret traces, aggregation and output.

pub mod aggregate;
pub mod config;
pub mod output;
pub mod run;

use thiserror::Error;

pub use aggregate::{aggregate, percentile, AlgorithmSummary, SummaryStats};
pub use config::{ConfigError, DiagnosticsConfig, ExperimentConfig};
pub use output::write_outputs;
pub use run::{run_experiment, RegretTrace, RunContext};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Invalid(String),
    #[error("no traces to aggregate")]
    NoTraces,
    #[error("traces of {0} have different lengths")]
    RaggedTraces(String),
    #[error(transparent)]
    Env(#[from] crate::environments::EnvError),
    #[error(transparent)]
    Policy(#[from] crate::policies::PolicyError),
    #[error(transparent)]
    Estimator(#[from] crate::estimator::EstimatorError),
    #[error(transparent)]
    Confidence(#[from] crate::confidence::ConfidenceError),
    #[error(transparent)]
    Loss(#[from] crate::loss::LossError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Runs a configuration end to end and writes its outputs to `dir`.
pub fn run_to_dir(config: ExperimentConfig, dir: &std::path::Path) -> Result<(RunContext, Vec<RegretTrace>, SummaryStats), HarnessError> {
    let ctx = RunContext::new(config)?;
    let traces = run_experiment(&ctx)?;
    let summary = aggregate(&traces)?;
    write_outputs(&ctx, &traces, &summary, dir)?;
    Ok((ctx, traces, summary))
}
