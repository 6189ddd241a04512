//! Experiment orchestration: configuration, Monte Carlo runs, dataset
//! ingestion and result emission.

pub mod config;
pub mod emit;
pub mod experiment;
pub mod snap;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::attacker::AttackError;
use crate::bounds::BoundsError;
use crate::channels::ChannelError;
use crate::generator::GeneratorError;
use crate::model::ModelError;

pub use config::ExperimentConfig;
pub use emit::emit_results;
pub use experiment::{run_experiment, CellSummary, ExperimentOutput, ResultRecord};
pub use snap::ingest_snap_communities;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name}:{line}: {message}")]
    Parse { source_name: String, line: usize, message: String },
    #[error("no groups or users survive the filters")]
    EmptyDataset,
    #[error("nothing to emit: {0}")]
    EmptyOutput(&'static str),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("channel: {0}")]
    Channel(#[from] ChannelError),
    #[error("attack: {0}")]
    Attack(#[from] AttackError),
    #[error("generator: {0}")]
    Generator(#[from] GeneratorError),
    #[error("bounds: {0}")]
    Bounds(#[from] BoundsError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}
