//! Almost-equivariant Lie algebra convolutions and the models built from
//! them.

mod checkpoint;
mod layer;
mod lift;
mod model;
mod params;

use thiserror::Error;

use crate::diffgraph::GraphError;
use crate::lie::LieError;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, MAGIC};
pub use layer::{
    check_layer_gradients, lie_conv_forward, reference_elements, Activation, KernelNet, LayerConfig, LieConvLayer,
    MapMode, MappingNet, MAPPING_RIDGE,
};
pub use lift::{pool_invariant, ImageLift, PoolMode, TimeLift};
pub use model::{
    build_model, layer_modes, pretrain_mapping, pretrain_model, ArchitectureConfig, HeadConfig,
    Lift, LiftConfig, Model, ModelInput, PretrainReport, SampleConfig, PRETRAIN_LR,
    PRETRAIN_STEPS, PRETRAIN_TARGET,
};
pub use params::{Bound, ParamId, ParamStore};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("mapping net output for sample {sample} is singular (condition estimate {condition:e})")]
    Singular { sample: usize, condition: f64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format error: {0}")]
    Format(String),
}

#[cfg(test)]
mod tests;
