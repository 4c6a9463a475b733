//! Optimizers, training loops and grid search.

mod config;
mod grid;
pub mod optim;
mod run;

use thiserror::Error;

use crate::data::DataError;
use crate::diffgraph::GraphError;
use crate::gconv::ModelError;

pub use config::{load_dataset, DataSource, Dataset, Sampling, Task, TrainConfig};
pub use grid::{
    grid_search, rank, read_ledger, run_seed, threads_from_env, GridOptions, GridPreset,
    GridReport, GridSpec, LedgerEntry, RankedConfig, LEDGER_FILE, RANKING_FILE, THREADS_ENV,
};
pub use optim::{adam_step, sgd_step, AdamState, Optimizer, OptimizerKind};
pub use run::{
    accuracy, epoch_lr, pendulum_rmse, train, EpochRecord, MetricKind, RunRecord, EVAL_CHUNK,
    RUN_RECORD_VERSION,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training diverged in epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<GraphError> for TrainError {
    fn from(e: GraphError) -> Self {
        TrainError::Model(ModelError::Graph(e))
    }
}

#[cfg(test)]
mod tests;
