use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::optim::OptimizerKind;
use super::TrainError;
use crate::data::{
    load_idx_images, load_image_set, pendulum_dataset, pendulum_dataset3, simulate_pendulum,
    synthetic_rotated_patterns, AngleLaw, LabeledImageSet, PendulumParams, TimePoint,
};
use crate::gconv::{
    Activation, ArchitectureConfig, HeadConfig, LiftConfig, PoolMode, SampleConfig,
};
use crate::lie::{GroupId, Interval, Resample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Pendulum,
    Classify,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    Uniform,
    C4Grid,
}

fn default_kernel_hidden() -> usize {
    32
}

fn default_kernel_size() -> usize {
    3
}

fn default_kernel_bound() -> f64 {
    1.0
}

fn default_time_scale() -> f64 {
    0.05
}

fn default_split() -> f64 {
    0.9
}

/// Where the training data comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Simulated trajectory, split chronologically. With `validation` the
    /// split is 80/10/10, otherwise `split`/(1 − `split`).
    Pendulum {
        #[serde(default)]
        params: PendulumParams,
        #[serde(default = "default_split")]
        split: f64,
        #[serde(default)]
        validation: bool,
    },
    /// Rotated glyphs; train, validation and test sets use derived seeds.
    Synthetic {
        classes: usize,
        size: usize,
        angle_law: AngleLaw,
        train_per_class: usize,
        test_per_class: usize,
        #[serde(default)]
        val_per_class: usize,
        #[serde(default)]
        seed: u64,
    },
    /// LADS1 containers.
    Files {
        train: PathBuf,
        test: PathBuf,
        #[serde(default)]
        val: Option<PathBuf>,
    },
    /// IDX image/label file pairs.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

/// A complete training run description, read from strict JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub task: Task,
    pub group: GroupId,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    #[serde(default = "default_kernel_hidden")]
    pub kernel_hidden: usize,
    pub n_hidden_layers: usize,
    pub hidden_channels: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub n_algebra_samples: usize,
    #[serde(default)]
    pub algebra_bounds: Option<Vec<Interval>>,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub strict_mode: bool,
    #[serde(default)]
    pub pretrain_mapping: bool,
    #[serde(default)]
    pub seed: u64,
    /// Spatial kernel size of the image lift; unused for time inputs.
    #[serde(default = "default_kernel_size")]
    pub kernel_size: usize,
    #[serde(default = "default_kernel_bound")]
    pub kernel_bound: f64,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub pool: PoolMode,
    #[serde(default)]
    pub resample: Resample,
    #[serde(default = "default_time_scale")]
    pub time_scale: f64,
    pub data: DataSource,
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let cfg: TrainConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be a non-negative number, got {}", self.lr));
        }
        for (name, v) in [
            ("kernel_hidden", self.kernel_hidden),
            ("n_hidden_layers", self.n_hidden_layers),
            ("hidden_channels", self.hidden_channels),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("n_algebra_samples", self.n_algebra_samples),
            ("kernel_size", self.kernel_size),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.sampling == Sampling::C4Grid && self.n_algebra_samples != 4 {
            return bad("the C4 grid has exactly 4 samples".into());
        }
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return bad("time_scale must be positive".into());
        }
        let pendulum_data = matches!(self.data, DataSource::Pendulum { .. });
        if pendulum_data != (self.task == Task::Pendulum) {
            return bad("the data source does not match the task".into());
        }
        Ok(())
    }

    /// Model architecture for this run on `data`.
    pub fn architecture(&self, data: &Dataset) -> Result<ArchitectureConfig, TrainError> {
        let (lift, head) = match data {
            Dataset::Pendulum { .. } => (
                LiftConfig::Time {
                    time_scale: self.time_scale,
                },
                HeadConfig::Regress,
            ),
            Dataset::Images { train, .. } => {
                let first = train
                    .images
                    .first()
                    .ok_or_else(|| TrainError::Config("empty training set".into()))?;
                (
                    LiftConfig::Image {
                        height: first.height,
                        width: first.width,
                        in_channels: first.channels,
                        kernel_size: self.kernel_size,
                        resample: self.resample,
                    },
                    HeadConfig::Classify {
                        classes: train.classes,
                    },
                )
            }
        };
        let samples = match self.sampling {
            Sampling::Uniform => SampleConfig::Uniform {
                count: self.n_algebra_samples,
                bounds: self.algebra_bounds.clone(),
            },
            Sampling::C4Grid => SampleConfig::C4Grid,
        };
        let arch = ArchitectureConfig {
            group: self.group,
            lift,
            head,
            samples,
            hidden_channels: self.hidden_channels,
            n_hidden_layers: self.n_hidden_layers,
            kernel_hidden: self.kernel_hidden,
            kernel_bound: self.kernel_bound,
            activation: self.activation,
            strict_mode: self.strict_mode,
            pool: self.pool,
            seed: self.seed,
        };
        arch.validate()?;
        Ok(arch)
    }
}

/// Loaded training data. `val` is absent when no validation split was
/// requested, in which case per-epoch metrics use the test split.
#[derive(Clone, Debug)]
pub enum Dataset {
    Pendulum {
        train: Vec<TimePoint>,
        val: Option<Vec<TimePoint>>,
        test: Vec<TimePoint>,
    },
    Images {
        train: LabeledImageSet,
        val: Option<LabeledImageSet>,
        test: LabeledImageSet,
    },
}

impl Dataset {
    pub fn train_len(&self) -> usize {
        match self {
            Dataset::Pendulum { train, .. } => train.len(),
            Dataset::Images { train, .. } => train.len(),
        }
    }
}

fn derived_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(stream)
}

pub fn load_dataset(source: &DataSource) -> Result<Dataset, TrainError> {
    let ds = match source {
        DataSource::Pendulum {
            params,
            split,
            validation,
        } => {
            let traj = simulate_pendulum(params)?;
            if *validation {
                let (train, val, test) = pendulum_dataset3(&traj, 0.8, 0.1)?;
                Dataset::Pendulum {
                    train,
                    val: Some(val),
                    test,
                }
            } else {
                let (train, test) = pendulum_dataset(&traj, *split)?;
                Dataset::Pendulum {
                    train,
                    val: None,
                    test,
                }
            }
        }
        DataSource::Synthetic {
            classes,
            size,
            angle_law,
            train_per_class,
            test_per_class,
            val_per_class,
            seed,
        } => {
            let gen = |n, stream| {
                synthetic_rotated_patterns(n, *classes, *size, *angle_law, derived_seed(*seed, stream))
            };
            Dataset::Images {
                train: gen(*train_per_class, 0)?,
                val: if *val_per_class > 0 {
                    Some(gen(*val_per_class, 2)?)
                } else {
                    None
                },
                test: gen(*test_per_class, 1)?,
            }
        }
        DataSource::Files { train, test, val } => Dataset::Images {
            train: load_image_set(train)?,
            val: val.as_deref().map(load_image_set).transpose()?,
            test: load_image_set(test)?,
        },
        DataSource::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => Dataset::Images {
            train: load_idx_images(train_images, train_labels)?,
            val: None,
            test: load_idx_images(test_images, test_labels)?,
        },
    };
    if let Dataset::Images { train, test, .. } = &ds {
        if train.classes != test.classes {
            return Err(TrainError::Config(format!(
                "train declares {} classes, test {}",
                train.classes, test.classes
            )));
        }
    }
    if ds.train_len() == 0 {
        return Err(TrainError::Config("empty training set".into()));
    }
    Ok(ds)
}
