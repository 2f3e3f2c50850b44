//! Experiment pipelines (E1 metacognition, E2 capacity, E3 titration and
//! marker triangulation), run directories, manifests and report rendering.
//!
//! A run directory holds `manifest.json`, cached checkpoints under
//! `checkpoints/`, one cached result file per seed under `seeds/`, and the
//! CSV outputs. Every CSV row carries the manifest hash of its run.

mod config;
mod e1;
mod e2;
mod e3;
mod manifest;
mod report;
mod run;

pub use config::{
    E1Settings, E2Settings, E3Settings, HarnessConfig, SeedSpec, Variant, BASE_SEED_ENV, CONFIG_VERSION,
    DEFAULT_SIGMA_GRID, DESK_SEEDS, FULL_SCALE_SEEDS,
};
pub use e1::{run_e1, E1Condition, E1SeedResult, E1Summary};
pub use e2::{run_e2, CapacityRow, E2SeedResult, E2Summary, MaskingSummary, NrsRow};
pub use e3::{e3_variant_config, measure_agent, run_e3, AgentMeasurement, E3Row, E3Summary, L75Summary, NoiseSite, PciSummary, TitrationCurve};
pub use manifest::{Experiment, RunManifest, TrainPlan};
pub use report::{compare_runs, render_report, MetricDiff, SeedMetric};
pub use run::{
    csv_digest, load_result, run_experiment, train_cached, write_csv, Exclusion, ExperimentDetails, ExperimentResult,
    NamedStat, RunDir,
};

use crate::agents::AgentError;
use crate::markers::MarkerError;
use crate::stats::StatsError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Marker(#[from] MarkerError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("{experiment}: every seed was excluded ({detail})")]
    AllExcluded { experiment: String, detail: String },
    #[error("worker pool: {0}")]
    Pool(String),
}
