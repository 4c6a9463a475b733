//! Model assembly: lift → (Lie conv + relu)×L → pool → affine head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Activation, LayerConfig, LieConvLayer, MapMode};
use super::lift::{pool_invariant, ImageLift, PoolMode, TimeLift};
use super::params::{Bound, ParamId, ParamStore};
use super::ModelError;
use crate::diffgraph::{Graph, NodeId, Tensor};
use crate::lie::{sample_algebra, AlgebraSampleSet, GroupId, Image, Interval, Matrix, Resample};
use crate::train::optim::AdamState;

fn default_kernel_hidden() -> usize {
    32
}

fn default_kernel_bound() -> f64 {
    1.0
}

fn default_time_scale() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LiftConfig {
    Image {
        height: usize,
        width: usize,
        in_channels: usize,
        kernel_size: usize,
        #[serde(default)]
        resample: Resample,
    },
    Time {
        #[serde(default = "default_time_scale")]
        time_scale: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HeadConfig {
    /// Class logits.
    Classify { classes: usize },
    /// A point of the plane.
    Regress,
}

impl HeadConfig {
    pub fn outputs(&self) -> usize {
        match self {
            HeadConfig::Classify { classes } => *classes,
            HeadConfig::Regress => 2,
        }
    }
}

/// How the algebra samples shared by every layer are chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SampleConfig {
    /// `count` uniform draws inside `bounds` (group defaults when absent).
    Uniform {
        count: usize,
        #[serde(default)]
        bounds: Option<Vec<Interval>>,
    },
    /// The four quarter turns of SO2.
    C4Grid,
}

/// Everything needed to rebuild a model bit-for-bit, including the seed
/// that drives initialization and sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub group: GroupId,
    pub lift: LiftConfig,
    pub head: HeadConfig,
    pub samples: SampleConfig,
    pub hidden_channels: usize,
    pub n_hidden_layers: usize,
    #[serde(default = "default_kernel_hidden")]
    pub kernel_hidden: usize,
    #[serde(default = "default_kernel_bound")]
    pub kernel_bound: f64,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub strict_mode: bool,
    #[serde(default)]
    pub pool: PoolMode,
    #[serde(default)]
    pub seed: u64,
}

impl ArchitectureConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.into()));
        if self.n_hidden_layers == 0 {
            return bad("at least one hidden layer is required");
        }
        if self.hidden_channels == 0 || self.kernel_hidden == 0 {
            return bad("channel counts must be positive");
        }
        if !(self.kernel_bound > 0.0 && self.kernel_bound.is_finite()) {
            return bad("kernel_bound must be positive");
        }
        if let HeadConfig::Classify { classes } = self.head {
            if classes < 2 {
                return bad("classification needs at least two classes");
            }
        }
        match &self.samples {
            SampleConfig::C4Grid if self.group != GroupId::SO2 => {
                return bad("the C4 grid is only defined for SO2");
            }
            SampleConfig::Uniform { count: 0, .. } => return bad("sample count must be positive"),
            _ => {}
        }
        if let LiftConfig::Image {
            in_channels,
            height,
            width,
            ..
        } = self.lift
        {
            if in_channels == 0 || height == 0 || width == 0 {
                return bad("image dimensions must be positive");
            }
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        match &self.samples {
            SampleConfig::Uniform { count, .. } => *count,
            SampleConfig::C4Grid => 4,
        }
    }

    /// Closed-form parameter count:
    ///
    /// * image lift `c·C·k² + c`, time lift `c·(1+d) + c`
    /// * each layer `n²(d+1) + n²·h + h + h·c² + c² + 1`
    /// * head `c·K + K` (K = classes, or 2 for regression)
    ///
    /// with `c` hidden channels, `C` input channels, `k` spatial kernel size,
    /// `n` matrix size, `d` algebra dimension and `h` kernel hidden width.
    pub fn param_count(&self) -> usize {
        let grp = self.group.descriptor();
        let (n, d) = (grp.matrix_dim, grp.algebra_dim);
        let (c, h) = (self.hidden_channels, self.kernel_hidden);
        let lift = match self.lift {
            LiftConfig::Image {
                in_channels,
                kernel_size,
                ..
            } => c * in_channels * kernel_size * kernel_size + c,
            LiftConfig::Time { .. } => c * (1 + d) + c,
        };
        let layer = n * n * (d + 1) + n * n * h + h + h * c * c + c * c + 1;
        let k = self.head.outputs();
        lift + self.n_hidden_layers * layer + c * k + k
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Lift {
    Image(ImageLift),
    Time(TimeLift),
}

/// Inputs accepted by [`Model::forward`].
#[derive(Clone, Copy, Debug)]
pub enum ModelInput<'a> {
    Images(&'a [Image]),
    Times(&'a [f64]),
}

impl ModelInput<'_> {
    pub fn len(&self) -> usize {
        match self {
            ModelInput::Images(v) => v.len(),
            ModelInput::Times(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub arch: ArchitectureConfig,
    pub params: ParamStore,
    pub samples: AlgebraSampleSet,
    pub lift: Lift,
    pub layers: Vec<LieConvLayer>,
    pub head_weight: ParamId,
    pub head_bias: ParamId,
}

/// Builds a freshly initialized model. Identical configs give identical
/// models.
pub fn build_model(arch: &ArchitectureConfig) -> Result<Model, ModelError> {
    arch.validate()?;
    let group = arch.group.descriptor();
    let samples = match &arch.samples {
        SampleConfig::Uniform { count, bounds } => {
            let bounds = bounds.clone().unwrap_or_else(|| group.default_bounds());
            sample_algebra(group, &bounds, *count, arch.seed)?
        }
        SampleConfig::C4Grid => AlgebraSampleSet::c4_grid(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(arch.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut params = ParamStore::new();
    let c = arch.hidden_channels;
    let lift = match arch.lift {
        LiftConfig::Image {
            height,
            width,
            in_channels,
            kernel_size,
            resample,
        } => Lift::Image(ImageLift::new(
            &samples,
            height,
            width,
            in_channels,
            c,
            kernel_size,
            resample,
            &mut params,
            &mut rng,
        )?),
        LiftConfig::Time { time_scale } => {
            Lift::Time(TimeLift::new(&samples, c, time_scale, &mut params, &mut rng)?)
        }
    };
    let layer_config = LayerConfig {
        group,
        c_in: c,
        c_out: c,
        kernel_hidden: arch.kernel_hidden,
        kernel_bound: arch.kernel_bound,
        activation: arch.activation,
        strict_mode: arch.strict_mode,
    };
    let layers = (0..arch.n_hidden_layers)
        .map(|l| {
            LieConvLayer::new(
                &layer_config,
                samples.clone(),
                samples.clone(),
                &mut params,
                &format!("layer{l}"),
                &mut rng,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let k = arch.head.outputs();
    let head_weight = params.add_uniform("head.weight", &[k, c], c, &mut rng);
    let head_bias = params.add_uniform("head.bias", &[k], c, &mut rng);
    Ok(Model {
        arch: arch.clone(),
        params,
        samples,
        lift,
        layers,
        head_weight,
        head_bias,
    })
}

impl Model {
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        self.params.bind(g, trainable)
    }

    /// Features after the lift, `[B × N × c]`.
    pub fn lift_forward(&self, g: &mut Graph, p: &Bound, input: ModelInput) -> Result<NodeId, ModelError> {
        match (&self.lift, input) {
            (Lift::Image(l), ModelInput::Images(imgs)) => l.forward(g, p, imgs),
            (Lift::Time(l), ModelInput::Times(ts)) => l.forward(g, p, ts),
            _ => Err(ModelError::Config("input kind does not match the model's lift".into())),
        }
    }

    /// Everything after the lift, from `[B × N × c]` features to `[B × K]`.
    pub fn body_forward(&self, g: &mut Graph, p: &Bound, mut h: NodeId) -> Result<NodeId, ModelError> {
        for layer in &self.layers {
            h = layer.forward(g, p, h)?;
            h = g.relu(h)?;
        }
        let pooled = pool_invariant(g, h, self.arch.pool)?;
        Ok(g.affine(pooled, p.node(self.head_weight), p.node(self.head_bias))?)
    }

    /// Batched forward pass producing `[B × K]` outputs.
    pub fn forward(&self, g: &mut Graph, p: &Bound, input: ModelInput) -> Result<NodeId, ModelError> {
        if input.is_empty() {
            return Err(ModelError::Config("empty input batch".into()));
        }
        let h = self.lift_forward(g, p, input)?;
        self.body_forward(g, p, h)
    }

    /// Forward pass on frozen parameters, one row per input.
    pub fn predict(&self, input: ModelInput) -> Result<Vec<Vec<f64>>, ModelError> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let out = self.forward(&mut g, &p, input)?;
        let k = self.arch.head.outputs();
        Ok(g.value(out).data().chunks(k).map(<[f64]>::to_vec).collect())
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }

    pub fn mapping_params(&self) -> Vec<ParamId> {
        self.layers
            .iter()
            .flat_map(|l| [l.mapping.weight, l.mapping.bias])
            .collect()
    }
}

/// Outcome of [`pretrain_mapping`] for one layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub initial_mse: f64,
    pub final_mse: f64,
    pub steps: usize,
}

/// Default schedule for mapping-net pre-training.
pub const PRETRAIN_STEPS: usize = 500;
pub const PRETRAIN_LR: f64 = 0.05;
pub const PRETRAIN_TARGET: f64 = 1e-3;

/// Fits the mapping net of `layer` to `exp(xᵢ)` on its own samples: a
/// least-squares warm start through the inverse activation, then Adam.
/// Stops early once the mse drops below `target`.
pub fn pretrain_mapping(
    layer: &LieConvLayer,
    params: &mut ParamStore,
    steps: usize,
    lr: f64,
    target: f64,
) -> Result<PretrainReport, ModelError> {
    let n = layer.group().matrix_dim;
    let n_in = layer.in_samples.len();
    let exps: Vec<f64> = layer
        .in_samples
        .samples
        .iter()
        .flat_map(|x| x.exp().matrix.into_vec())
        .collect();
    let target_t = Tensor::new(vec![n_in, n, n], exps)?;
    let ids = [layer.mapping.weight, layer.mapping.bias];
    let initial_mse = mapping_mse(layer, params, target_t.data());
    warm_start(layer, params, target_t.data())?;
    let mut state = AdamState::new();
    let mut last = f64::NAN;
    let mut done = 0;
    for step in 0..=steps {
        let mut g = Graph::new();
        let p = params.bind(&mut g, true);
        let m = layer.mapping.forward(&mut g, &p, &layer.in_samples)?;
        let y = g.constant(target_t.clone());
        let loss = g.mse_loss(m, y)?;
        last = g.value(loss).item();
        if last < target || step == steps {
            break;
        }
        g.backward(loss)?;
        let grads: Vec<Tensor> = ids.iter().map(|&id| g.grad(p.node(id))).collect();
        let mut current: Vec<Tensor> = ids.iter().map(|&id| params.get(id).clone()).collect();
        crate::train::optim::adam_step(&mut current, &grads, lr, &mut state)
            .map_err(|e| ModelError::Config(e.to_string()))?;
        for (&id, t) in ids.iter().zip(current) {
            *params.get_mut(id) = t;
        }
        done = step + 1;
    }
    Ok(PretrainReport {
        initial_mse,
        final_mse: last,
        steps: done,
    })
}

fn mapping_mse(layer: &LieConvLayer, params: &ParamStore, target: &[f64]) -> f64 {
    let n2 = target.len() / layer.in_samples.len();
    let mut acc = 0.0;
    for (x, t) in layer.in_samples.samples.iter().zip(target.chunks(n2)) {
        let m = layer.mapping.evaluate(params, &x.coeffs);
        acc += m.as_slice().iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    acc / target.len() as f64
}

/// Least-squares fit of the affine part to the activation's preimage of the
/// targets, `W·c + b ≈ σ⁻¹(exp(x))`. Kept only if it lowers the error.
fn warm_start(layer: &LieConvLayer, params: &mut ParamStore, target: &[f64]) -> Result<(), ModelError> {
    let d = layer.group().algebra_dim;
    let rows = layer.in_samples.len();
    let n2 = target.len() / rows;
    let preimage = |v: f64| match layer.mapping.activation {
        Activation::Relu => v.max(0.0),
        Activation::Sigmoid => {
            let p = v.clamp(1e-3, 1.0 - 1e-3);
            (p / (1.0 - p)).ln()
        }
    };
    // Normal equations over the design [c, 1].
    let mut xtx = Matrix::zeros(d + 1, d + 1);
    let mut xty = Matrix::zeros(d + 1, n2);
    for (x, t) in layer.in_samples.samples.iter().zip(target.chunks(n2)) {
        let mut row = x.coeffs.clone();
        row.push(1.0);
        for a in 0..=d {
            for b in 0..=d {
                xtx.set(a, b, xtx.get(a, b) + row[a] * row[b]);
            }
            for (k, &v) in t.iter().enumerate() {
                xty.set(a, k, xty.get(a, k) + row[a] * preimage(v));
            }
        }
    }
    for a in 0..=d {
        xtx.set(a, a, xtx.get(a, a) + 1e-12);
    }
    let Ok(inv) = xtx.inverse() else {
        return Ok(());
    };
    let sol = inv.matmul(&xty);
    let before = params.clone();
    let before_mse = mapping_mse(layer, params, target);
    {
        let w = params.get_mut(layer.mapping.weight).data_mut();
        for r in 0..n2 {
            for k in 0..d {
                w[r * d + k] = sol.get(k, r);
            }
        }
    }
    let b = params.get_mut(layer.mapping.bias).data_mut();
    for (r, v) in b.iter_mut().enumerate() {
        *v = sol.get(d, r);
    }
    let after = mapping_mse(layer, params, target);
    if !(after < before_mse) {
        *params = before;
    }
    Ok(())
}

/// Runs [`pretrain_mapping`] on every layer of `model`.
pub fn pretrain_model(model: &mut Model, steps: usize, lr: f64, target: f64) -> Result<Vec<PretrainReport>, ModelError> {
    let layers = model.layers.clone();
    layers
        .iter()
        .map(|l| pretrain_mapping(l, &mut model.params, steps, lr, target))
        .collect()
}

/// Which map a layer used on the last forward pass.
pub fn layer_modes(model: &Model) -> Vec<MapMode> {
    model.layers.iter().map(LieConvLayer::mode).collect()
}
