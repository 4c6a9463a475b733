//! Dataset generation and ingestion.

mod images;
mod pendulum;

use thiserror::Error;

use crate::lie::LieError;

pub use images::{
    load_idx_images, load_image_set, parse_idx_images, parse_idx_labels, read_image_set,
    render_glyph, save_image_set, synthetic_rotated_patterns, write_image_set, AngleLaw,
    LabeledImageSet, GLYPH_NAMES, LADS_MAGIC,
};
pub use pendulum::{
    pendulum_dataset, pendulum_dataset3, simulate_pendulum, write_pendulum_csv, PendulumParams,
    TimePoint, Trajectory,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("length error: {0}")]
    Length(String),
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Lie(#[from] LieError),
}
