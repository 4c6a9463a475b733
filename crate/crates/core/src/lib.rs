//! Almost-equivariant Lie algebra convolutions.
//!
//! * [`lie`]: SO(2), SE(2), T(2) groups, exponential map, sampling, actions
//! * [`diffgraph`]: reverse-mode differentiation over dense tensors
//! * [`gconv`]: the Lie algebra convolution layer, lifting, pooling, models
//! * [`metrics`]: equivariance and isometry defect meters, Hyers-Ulam recovery
//! * [`data`]: damped pendulum simulator, synthetic glyphs, IDX ingestion
//! * [`train`]: optimizers, training loops and grid search

pub mod data;
pub mod diffgraph;
pub mod gconv;
pub mod lie;
pub mod metrics;
pub mod train;
