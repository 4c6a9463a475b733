//! Lifting layers: signals on the base space become functions on the
//! algebra samples.

use rand::Rng;

use super::params::{Bound, ParamId, ParamStore};
use super::ModelError;
use crate::diffgraph::{Graph, NodeId, Tensor};
use crate::lie::{act_image, AlgebraSampleSet, GroupElement, Image, Resample};

/// Shared `k × k` convolution applied to every transformed copy of the image,
/// followed by relu and a mean over patch positions.
///
/// Only patches whose pixels all lie inside the disk inscribed in the image
/// are pooled, so rotations about the center never pull in padding.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageLift {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub height: usize,
    pub width: usize,
    pub resample: Resample,
    /// `[c × C·k²]`
    pub weight: ParamId,
    /// `[c]`
    pub bias: ParamId,
    positions: Vec<(usize, usize)>,
    inverses: Vec<GroupElement>,
}

impl ImageLift {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        samples: &AlgebraSampleSet,
        height: usize,
        width: usize,
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        resample: Resample,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        if resample == Resample::ExactC4 && !samples.is_c4_grid() {
            return Err(ModelError::Config(
                "exact_c4 lifting needs samples on the C4 grid".into(),
            ));
        }
        if kernel_size == 0 || kernel_size > height.min(width) {
            return Err(ModelError::Config(format!(
                "kernel size {kernel_size} does not fit a {height}x{width} image"
            )));
        }
        let positions = disk_positions(height, width, kernel_size);
        if positions.is_empty() {
            return Err(ModelError::Config(format!(
                "no {kernel_size}x{kernel_size} patch fits inside the inscribed disk"
            )));
        }
        let fan_in = in_channels * kernel_size * kernel_size;
        let weight = store.add_uniform("lift.weight", &[out_channels, fan_in], fan_in, rng);
        let bias = store.add_uniform("lift.bias", &[out_channels], fan_in, rng);
        Ok(Self {
            in_channels,
            out_channels,
            kernel_size,
            height,
            width,
            resample,
            weight,
            bias,
            positions,
            inverses: samples.samples.iter().map(|x| x.exp().inverse()).collect(),
        })
    }

    pub fn param_count(in_channels: usize, out_channels: usize, kernel_size: usize) -> usize {
        out_channels * in_channels * kernel_size * kernel_size + out_channels
    }

    /// Top-left corners of the pooled patches.
    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    /// Patch matrix for a batch: rows ordered (image, sample, position).
    pub fn patches(&self, images: &[Image]) -> Result<Tensor, ModelError> {
        let k = self.kernel_size;
        let cols = self.in_channels * k * k;
        let mut data = Vec::with_capacity(images.len() * self.inverses.len() * self.positions.len() * cols);
        for img in images {
            if img.height != self.height || img.width != self.width || img.channels != self.in_channels {
                return Err(ModelError::Config(format!(
                    "expected {}x{}x{} images, got {}x{}x{}",
                    self.height, self.width, self.in_channels, img.height, img.width, img.channels
                )));
            }
            for g in &self.inverses {
                let moved = act_image(g, img, self.resample)?;
                for &(r0, c0) in &self.positions {
                    for ch in 0..self.in_channels {
                        for dr in 0..k {
                            for dc in 0..k {
                                data.push(moved.get(r0 + dr, c0 + dc, ch));
                            }
                        }
                    }
                }
            }
        }
        let rows = data.len() / cols;
        Ok(Tensor::matrix(rows, cols, data)?)
    }

    /// `[B images] → [B × N × c]`
    pub fn forward(&self, g: &mut Graph, p: &Bound, images: &[Image]) -> Result<NodeId, ModelError> {
        let patches = self.patches(images)?;
        self.forward_patches(g, p, patches, images.len())
    }

    /// Same as [`ImageLift::forward`] on a precomputed patch matrix.
    pub fn forward_patches(
        &self,
        g: &mut Graph,
        p: &Bound,
        patches: Tensor,
        batch: usize,
    ) -> Result<NodeId, ModelError> {
        let n = self.inverses.len();
        let npos = self.positions.len();
        let x = g.constant(patches);
        let y = g.affine(x, p.node(self.weight), p.node(self.bias))?;
        let y = g.relu(y)?;
        let y = g.reshape(y, &[batch * n, npos, self.out_channels])?;
        let y = g.mean_axis(y, 1)?;
        Ok(g.reshape(y, &[batch, n, self.out_channels])?)
    }
}

fn disk_positions(height: usize, width: usize, k: usize) -> Vec<(usize, usize)> {
    let (cy, cx) = ((height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0);
    let radius = cy.min(cx) + 1e-9;
    let inside = |r: usize, c: usize| (r as f64 - cy).hypot(c as f64 - cx) <= radius;
    let mut out = Vec::new();
    for r in 0..=height - k {
        for c in 0..=width - k {
            let corners = [(r, c), (r + k - 1, c), (r, c + k - 1), (r + k - 1, c + k - 1)];
            if corners.iter().all(|&(a, b)| inside(a, b)) {
                out.push((r, c));
            }
        }
    }
    out
}

/// Row `i` is `relu(W·[t·time_scale, coeffs(xᵢ)] + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeLift {
    pub out_channels: usize,
    pub time_scale: f64,
    /// `[c × (1 + algebra_dim)]`
    pub weight: ParamId,
    /// `[c]`
    pub bias: ParamId,
    coeffs: Vec<Vec<f64>>,
}

impl TimeLift {
    pub fn new<R: Rng + ?Sized>(
        samples: &AlgebraSampleSet,
        out_channels: usize,
        time_scale: f64,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        if !time_scale.is_finite() || time_scale <= 0.0 {
            return Err(ModelError::Config("time_scale must be positive".into()));
        }
        let fan_in = 1 + samples.group.algebra_dim;
        let weight = store.add_uniform("lift.weight", &[out_channels, fan_in], fan_in, rng);
        let bias = store.add_uniform("lift.bias", &[out_channels], fan_in, rng);
        Ok(Self {
            out_channels,
            time_scale,
            weight,
            bias,
            coeffs: samples.samples.iter().map(|x| x.coeffs.clone()).collect(),
        })
    }

    pub fn param_count(algebra_dim: usize, out_channels: usize) -> usize {
        out_channels * (1 + algebra_dim) + out_channels
    }

    /// `[B times] → [B × N × c]`
    pub fn forward(&self, g: &mut Graph, p: &Bound, times: &[f64]) -> Result<NodeId, ModelError> {
        if let Some(t) = times.iter().find(|t| !t.is_finite()) {
            return Err(ModelError::Config(format!("non-finite time {t}")));
        }
        let n = self.coeffs.len();
        let d = 1 + self.coeffs[0].len();
        let mut rows = Vec::with_capacity(times.len() * n * d);
        for &t in times {
            for c in &self.coeffs {
                rows.push(t * self.time_scale);
                rows.extend_from_slice(c);
            }
        }
        let x = g.constant(Tensor::matrix(times.len() * n, d, rows)?);
        let y = g.affine(x, p.node(self.weight), p.node(self.bias))?;
        let y = g.relu(y)?;
        Ok(g.reshape(y, &[times.len(), n, self.out_channels])?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMode {
    #[default]
    Mean,
    Max,
}

/// Column-wise reduction over the sample axis. Accepts `[N × c]` or a batch
/// `[B × N × c]`.
pub fn pool_invariant(g: &mut Graph, values: NodeId, mode: PoolMode) -> Result<NodeId, ModelError> {
    let rank = g.shape(values).len();
    if !(rank == 2 || rank == 3) || g.shape(values)[rank - 2] == 0 {
        return Err(ModelError::Config(format!(
            "pooling needs [N × c] or [B × N × c], got {:?}",
            g.shape(values)
        )));
    }
    let axis = rank - 2;
    Ok(match mode {
        PoolMode::Mean => g.mean_axis(values, axis)?,
        PoolMode::Max => g.max_axis(values, axis)?,
    })
}
