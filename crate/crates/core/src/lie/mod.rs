//! Matrix Lie groups SO(2), SE(2) and T(2): generator bases, the matrix
//! exponential, a closed-form logarithm, algebra sampling, and group
//! actions on plane points and images.
//!
//! SE(2) and T(2) use 3×3 homogeneous matrices so that exponentials,
//! products and actions are the same matrix code for every group.

mod action;
mod expm;
mod group;
mod matrix;
mod sample;

use thiserror::Error;

pub use action::{act_image, act_point, rotate_quarter_turns, Image, Resample};
pub use expm::exp_matrix;
pub use group::{
    generators, log_closed_form, AlgebraElement, GroupDescriptor, GroupElement, GroupId, Interval,
};
pub use matrix::{Matrix, MatrixNorm, POWER_ITERATIONS};
pub use sample::{sample_algebra, AlgebraSampleSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LieError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("logarithm undefined on the branch cut (angle {angle})")]
    BranchCut { angle: f64 },
    #[error("matrix is singular")]
    Singular,
}
