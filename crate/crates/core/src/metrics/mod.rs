//! Defect meters, isometry recovery and bound reports.
//!
//! Every report serializes to JSON with a `report_version` field.

mod bound;
mod equivariance;
mod isometry;
mod ulam;

use thiserror::Error;

use crate::diffgraph::GraphError;
use crate::gconv::ModelError;
use crate::lie::LieError;

pub use bound::{
    layer_output, mapping_matrices, mode_deviation, deviation_bound_report, BoundReport, RANDOM_PROBES,
};
pub use equivariance::{
    equivariance_error, ElementDefect, EquivarianceReport, EquivariantModel, GroupSampler,
    ImageModel, OutputAction, PlaneMap, TimeModel,
};
pub use isometry::{
    almost_isometry_defect, jacobian, perturbed_rotation_experiment, perturbed_rotation_trial, Domain,
    IsometryDefectReport, Perturbation, PerturbedRotationReport, PerturbedRotationTrial, JACOBIAN_STEP, ROTATION_GRID,
};
pub use ulam::{
    ball_grid, default_grid, distance_defect, doubling_iterate, fickett_bound, ulam_recover,
    UlamResult, ISOMETRY_TOL,
};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported action: {0}")]
    UnsupportedAction(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("no convergence after {doublings} doublings (last gap {last_gap:e})")]
    Convergence { doublings: u32, last_gap: f64 },
    #[error("mapping output for sample {sample} is singular")]
    Singular { sample: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lie(#[from] LieError),
}

impl From<GraphError> for MetricsError {
    fn from(e: GraphError) -> Self {
        MetricsError::Model(ModelError::Graph(e))
    }
}
