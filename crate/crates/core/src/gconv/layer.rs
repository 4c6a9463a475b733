//! The almost-equivariant Lie algebra convolution.
//!
//! For output point `uⱼ` and input samples `xᵢ` the layer computes
//!
//! ```text
//! out[j] = vol · Σᵢ k(M(xᵢ)⁻¹ · exp(uⱼ)) · f[i]
//! ```
//!
//! where `k` is a small MLP producing a `c_out × c_in` block and `M` is
//! either a learned single-layer mapping net (normal mode) or the matrix
//! exponential itself (strict mode, a discretized group convolution).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{Bound, ParamId, ParamStore};
use super::ModelError;
use crate::diffgraph::gradcheck::{check_gradients, GradCheck};
use crate::diffgraph::{sigmoid, Graph, GraphError, NodeId, Tensor};
use crate::lie::{AlgebraSampleSet, GroupDescriptor, GroupElement, Matrix};

/// Ridge added to mapping-net outputs before inversion.
pub const MAPPING_RIDGE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    #[default]
    Sigmoid,
}

impl Activation {
    fn apply_node(self, g: &mut Graph, x: NodeId) -> Result<NodeId, GraphError> {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Sigmoid => g.sigmoid(x),
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Sigmoid => sigmoid(v),
        }
    }
}

/// `N_θ(x) = σ(W·c + b)` reshaped to `n × n`.
#[derive(Clone, Debug, PartialEq)]
pub struct MappingNet {
    pub group: GroupDescriptor,
    /// `[n² × algebra_dim]`
    pub weight: ParamId,
    /// `[n²]`
    pub bias: ParamId,
    pub activation: Activation,
}

impl MappingNet {
    pub fn new<R: Rng + ?Sized>(
        group: GroupDescriptor,
        activation: Activation,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut R,
    ) -> Self {
        let n2 = group.matrix_dim * group.matrix_dim;
        let d = group.algebra_dim;
        let weight = store.add_uniform(format!("{prefix}.mapping.weight"), &[n2, d], d, rng);
        let bias = store.add_uniform(format!("{prefix}.mapping.bias"), &[n2], d, rng);
        Self {
            group,
            weight,
            bias,
            activation,
        }
    }

    pub fn param_count(group: &GroupDescriptor) -> usize {
        group.matrix_dim * group.matrix_dim * (group.algebra_dim + 1)
    }

    /// Mapping-net outputs for every sample, shape `[N × n × n]`.
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &Bound,
        samples: &AlgebraSampleSet,
    ) -> Result<NodeId, GraphError> {
        let n = self.group.matrix_dim;
        let d = self.group.algebra_dim;
        let coeffs: Vec<f64> = samples.samples.iter().flat_map(|s| s.coeffs.clone()).collect();
        let c = g.constant(Tensor::matrix(samples.len(), d, coeffs)?);
        let lin = g.affine(c, p.node(self.weight), p.node(self.bias))?;
        let act = self.activation.apply_node(g, lin)?;
        g.reshape(act, &[samples.len(), n, n])
    }

    /// Same map evaluated directly on stored parameters.
    pub fn evaluate(&self, store: &ParamStore, coeffs: &[f64]) -> Matrix {
        let n = self.group.matrix_dim;
        let w = store.get(self.weight).data();
        let b = store.get(self.bias).data();
        let d = coeffs.len();
        let data = (0..n * n)
            .map(|r| {
                let z = b[r] + (0..d).map(|k| w[r * d + k] * coeffs[k]).sum::<f64>();
                self.activation.apply(z)
            })
            .collect();
        Matrix::from_vec(n, n, data)
    }
}

/// Two-layer ReLU MLP from a flattened `n × n` matrix to a `c_out × c_in`
/// block.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelNet {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub input_dim: usize,
    pub hidden_width: usize,
    pub c_out: usize,
    pub c_in: usize,
    /// Declared growth bound `K` in `‖k(A)‖ ≤ K‖A‖`; used only for reporting.
    pub bound_k: f64,
}

impl KernelNet {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden_width: usize,
        c_out: usize,
        c_in: usize,
        bound_k: f64,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut R,
    ) -> Self {
        let out = c_out * c_in;
        let w1 = store.add_uniform(format!("{prefix}.kernel.w1"), &[hidden_width, input_dim], input_dim, rng);
        let b1 = store.add_uniform(format!("{prefix}.kernel.b1"), &[hidden_width], input_dim, rng);
        let w2 = store.add_uniform(format!("{prefix}.kernel.w2"), &[out, hidden_width], hidden_width, rng);
        let b2 = store.add_uniform(format!("{prefix}.kernel.b2"), &[out], hidden_width, rng);
        Self {
            w1,
            b1,
            w2,
            b2,
            input_dim,
            hidden_width,
            c_out,
            c_in,
            bound_k,
        }
    }

    pub fn param_count(input_dim: usize, hidden: usize, c_out: usize, c_in: usize) -> usize {
        input_dim * hidden + hidden + hidden * c_out * c_in + c_out * c_in
    }

    /// `[R × input_dim] → [R × c_out·c_in]`
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: NodeId) -> Result<NodeId, GraphError> {
        let h = g.affine(x, p.node(self.w1), p.node(self.b1))?;
        let h = g.relu(h)?;
        g.affine(h, p.node(self.w2), p.node(self.b2))
    }

    /// The kernel applied to one matrix, on stored parameters.
    pub fn evaluate(&self, store: &ParamStore, a: &Matrix) -> Vec<f64> {
        let x = a.as_slice();
        let dense = |w: &Tensor, b: &Tensor, x: &[f64], relu: bool| -> Vec<f64> {
            let cols = x.len();
            b.data()
                .iter()
                .enumerate()
                .map(|(r, bias)| {
                    let z = bias
                        + w.data()[r * cols..(r + 1) * cols]
                            .iter()
                            .zip(x)
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    if relu {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect()
        };
        let h = dense(store.get(self.w1), store.get(self.b1), x, true);
        dense(store.get(self.w2), store.get(self.b2), &h, false)
    }
}

/// Which map pushes algebra samples onto group-like matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapMode {
    /// Learned mapping net.
    Normal,
    /// Exact matrix exponential.
    Strict,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerConfig {
    pub group: GroupDescriptor,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel_hidden: usize,
    pub kernel_bound: f64,
    pub activation: Activation,
    pub strict_mode: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LieConvLayer {
    pub mapping: MappingNet,
    pub kernel: KernelNet,
    pub in_samples: AlgebraSampleSet,
    pub out_points: AlgebraSampleSet,
    pub strict_mode: bool,
    /// `log(vol_scale)`; the scale itself is `exp` of this, so always > 0.
    pub log_vol: ParamId,
    /// `exp(xᵢ)⁻¹` for the input samples.
    sample_inverses: Vec<Matrix>,
    /// `exp(uⱼ)` for the output points.
    out_exps: Vec<Matrix>,
}

impl LieConvLayer {
    /// Declares the layer's parameters on `store`. `vol_scale` starts at
    /// `1/N` for `N` input samples.
    pub fn new<R: Rng + ?Sized>(
        config: &LayerConfig,
        in_samples: AlgebraSampleSet,
        out_points: AlgebraSampleSet,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        if in_samples.group != config.group || out_points.group != config.group {
            return Err(ModelError::Config(
                "sample sets must belong to the layer's group".into(),
            ));
        }
        if in_samples.is_empty() || out_points.is_empty() {
            return Err(ModelError::Config("layer needs at least one sample".into()));
        }
        if config.c_in == 0 || config.c_out == 0 || config.kernel_hidden == 0 {
            return Err(ModelError::Config("channel counts must be positive".into()));
        }
        let n = config.group.matrix_dim;
        let mapping = MappingNet::new(config.group, config.activation, store, prefix, rng);
        let kernel = KernelNet::new(
            n * n,
            config.kernel_hidden,
            config.c_out,
            config.c_in,
            config.kernel_bound,
            store,
            prefix,
            rng,
        );
        let log_vol = store.add(
            format!("{prefix}.log_vol"),
            Tensor::scalar(-(in_samples.len() as f64).ln()),
        );
        let sample_inverses = in_samples
            .samples
            .iter()
            .map(|x| x.exp().inverse().matrix)
            .collect();
        let out_exps = out_points.samples.iter().map(|u| u.exp().matrix).collect();
        Ok(Self {
            mapping,
            kernel,
            in_samples,
            out_points,
            strict_mode: config.strict_mode,
            log_vol,
            sample_inverses,
            out_exps,
        })
    }

    pub fn param_count(config: &LayerConfig) -> usize {
        let n = config.group.matrix_dim;
        MappingNet::param_count(&config.group)
            + KernelNet::param_count(n * n, config.kernel_hidden, config.c_out, config.c_in)
            + 1
    }

    pub fn group(&self) -> GroupDescriptor {
        self.mapping.group
    }

    pub fn c_in(&self) -> usize {
        self.kernel.c_in
    }

    pub fn c_out(&self) -> usize {
        self.kernel.c_out
    }

    pub fn vol_scale(&self, store: &ParamStore) -> f64 {
        store.get(self.log_vol).item().exp()
    }

    /// Reference group elements `gᵢ = exp(xᵢ)` and their inverses.
    pub fn sample_inverses(&self) -> &[Matrix] {
        &self.sample_inverses
    }

    pub fn out_exps(&self) -> &[Matrix] {
        &self.out_exps
    }

    pub fn mode(&self) -> MapMode {
        if self.strict_mode {
            MapMode::Strict
        } else {
            MapMode::Normal
        }
    }

    /// Stacked `M(xᵢ)⁻¹`, shape `[N_in·n × n]`.
    fn inverse_maps(&self, g: &mut Graph, p: &Bound, mode: MapMode) -> Result<NodeId, ModelError> {
        let n = self.group().matrix_dim;
        let n_in = self.in_samples.len();
        match mode {
            MapMode::Strict => {
                let data = self
                    .sample_inverses
                    .iter()
                    .flat_map(|m| m.as_slice().iter().copied())
                    .collect();
                Ok(g.constant(Tensor::matrix(n_in * n, n, data)?))
            }
            MapMode::Normal => {
                let m = self.mapping.forward(g, p, &self.in_samples)?;
                let ridge: Vec<f64> = (0..n_in)
                    .flat_map(|_| Matrix::identity(n).scale(MAPPING_RIDGE).into_vec())
                    .collect();
                let ridge = g.constant(Tensor::new(vec![n_in, n, n], ridge)?);
                let m = g.add(m, ridge)?;
                let inv = g.matrix_inverse(m).map_err(|e| match e {
                    GraphError::Singular { index, condition } => ModelError::Singular {
                        sample: index,
                        condition,
                    },
                    other => other.into(),
                })?;
                Ok(g.reshape(inv, &[n_in * n, n])?)
            }
        }
    }

    /// Kernel inputs `M(xᵢ)⁻¹ exp(uⱼ)` flattened, shape `[N_out·N_in × n²]`
    /// with row `j·N_in + i`.
    pub fn kernel_inputs(&self, g: &mut Graph, p: &Bound, mode: MapMode) -> Result<NodeId, ModelError> {
        let n = self.group().matrix_dim;
        let (n_in, n_out) = (self.in_samples.len(), self.out_points.len());
        let inv = self.inverse_maps(g, p, mode)?;
        // E = [exp(u₀) | exp(u₁) | …], shape [n × N_out·n]
        let mut e = vec![0.0; n * n_out * n];
        for (j, m) in self.out_exps.iter().enumerate() {
            for r in 0..n {
                for c in 0..n {
                    e[r * n_out * n + j * n + c] = m.get(r, c);
                }
            }
        }
        let e = g.constant(Tensor::matrix(n, n_out * n, e)?);
        // Block (i, j) of the product is M(xᵢ)⁻¹ exp(uⱼ).
        let prod = g.matmul(inv, e)?;
        let prod = g.reshape(prod, &[n_in, n, n_out, n])?;
        let prod = g.permute(prod, &[2, 0, 1, 3])?;
        Ok(g.reshape(prod, &[n_out * n_in, n * n])?)
    }

    /// Kernel blocks arranged for a right-multiplication of the flattened
    /// signal: shape `[N_in·c_in × N_out·c_out]`.
    pub fn kernel_matrix(&self, g: &mut Graph, p: &Bound, mode: MapMode) -> Result<NodeId, ModelError> {
        let (n_in, n_out) = (self.in_samples.len(), self.out_points.len());
        let (c_in, c_out) = (self.c_in(), self.c_out());
        let x = self.kernel_inputs(g, p, mode)?;
        let k = self.kernel.forward(g, p, x)?;
        let k = g.reshape(k, &[n_out, n_in, c_out, c_in])?;
        let k = g.permute(k, &[1, 3, 0, 2])?;
        Ok(g.reshape(k, &[n_in * c_in, n_out * c_out])?)
    }

    /// Batched forward: `f: [B × N_in × c_in] → [B × N_out × c_out]`.
    pub fn forward_with(
        &self,
        g: &mut Graph,
        p: &Bound,
        f: NodeId,
        mode: MapMode,
    ) -> Result<NodeId, ModelError> {
        let shape = g.shape(f).to_vec();
        let (n_in, c_in) = (self.in_samples.len(), self.c_in());
        if shape.len() != 3 || shape[1] != n_in || shape[2] != c_in {
            return Err(ModelError::Config(format!(
                "layer expects [B × {n_in} × {c_in}] input, got {shape:?}"
            )));
        }
        let b = shape[0];
        let kmat = self.kernel_matrix(g, p, mode)?;
        let flat = g.reshape(f, &[b, n_in * c_in])?;
        let out = g.matmul(flat, kmat)?;
        let vol = g.exp(p.node(self.log_vol))?;
        let out = g.mul(out, vol)?;
        Ok(g.reshape(out, &[b, self.out_points.len(), self.c_out()])?)
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, f: NodeId) -> Result<NodeId, ModelError> {
        self.forward_with(g, p, f, self.mode())
    }
}

/// Single-signal form: `f_values: [N_in × c_in] → [N_out × c_out]`.
pub fn lie_conv_forward(
    layer: &LieConvLayer,
    g: &mut Graph,
    p: &Bound,
    f_values: NodeId,
) -> Result<NodeId, ModelError> {
    let shape = g.shape(f_values).to_vec();
    if shape.len() != 2 || shape[0] != layer.in_samples.len() {
        return Err(ModelError::Config(format!(
            "f_values must be [{} × c_in], got {shape:?}",
            layer.in_samples.len()
        )));
    }
    let f = g.reshape(f_values, &[1, shape[0], shape[1]])?;
    let out = layer.forward(g, p, f)?;
    Ok(g.reshape(out, &[layer.out_points.len(), layer.c_out()])?)
}

/// Finite-difference check of `sum(lie_conv_forward(f)²)` with respect to
/// every layer parameter and the signal `f: [N_in × c_in]`.
pub fn check_layer_gradients(
    layer: &LieConvLayer,
    params: &ParamStore,
    f: &Tensor,
    h: f64,
) -> Result<GradCheck, ModelError> {
    let mut inputs = params.tensors().to_vec();
    inputs.push(f.clone());
    let np = params.len();
    Ok(check_gradients(&inputs, h, |g, x| {
        let p = Bound::from_nodes(x[..np].to_vec());
        let y = lie_conv_forward(layer, g, &p, x[np]).map_err(|e| match e {
            ModelError::Graph(e) => e,
            other => GraphError::InvalidArgument(other.to_string()),
        })?;
        let sq = g.mul(y, y)?;
        g.sum(sq)
    })?)
}

/// `exp(x)` for each sample, for callers that need the reference elements.
pub fn reference_elements(samples: &AlgebraSampleSet) -> Vec<GroupElement> {
    samples.samples.iter().map(|x| x.exp()).collect()
}
