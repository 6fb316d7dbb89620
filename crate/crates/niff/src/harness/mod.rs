//! Experiment harness: TOML configuration, CLI entry points, reproduction
//! runs, posterior summaries, posterior-predictive simulation, and the
//! normalized MSE validation metric.

mod config;
mod metrics;
mod predictive;
mod run;
mod summary;

pub use config::{
    Algorithm, DataSourceKind, ExperimentConfig, FilterSection, ModelKind, NoiseRuleCfg,
    PathKindCfg, PredictSection, TimeModeCfg,
};
pub use config::load_config;
pub use metrics::{mse_metric, DEFAULT_SIGMA_A2, DEFAULT_SIGMA_D2};
pub use predictive::{posterior_predictive, PredictiveBands};
pub use run::{
    prepare, read_theta_samples, read_w_samples, run_experiment, run_predict, run_simulate,
    run_summarize, summarize_nsvi_state, PreparedExperiment, RunArtifacts, RunOverrides,
};
pub use summary::{
    quantile, summarize_guide, summarize_samples, uniform_grid, ParamQuantiles,
    PosteriorSummary, StateBand,
};

use crate::inference::InferError;
use crate::models::ModelError;
use crate::paths::PathError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("run failed: {message}")]
    Failed { artifacts: RunArtifacts, message: String },
}
