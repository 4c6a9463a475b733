//! Strict-vs-learned deviation of a Lie conv layer against the bound
//! `ε = K·N·δₓ·‖exp(u)‖`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MetricsError, REPORT_VERSION};
use crate::diffgraph::{Graph, Tensor};
use crate::gconv::{LieConvLayer, MapMode, ParamStore, MAPPING_RIDGE};
use crate::lie::{Matrix, MatrixNorm};

/// Number of random probe matrices added to the kernel-growth estimate.
pub const RANDOM_PROBES: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub report_version: u32,
    pub norm: MatrixNorm,
    pub n_samples: usize,
    /// `maxᵢ (‖gᵢ⁻¹‖ − ‖M(xᵢ)⁻¹‖)` as measured, sign included.
    pub delta_raw: f64,
    /// Empirical `max ‖k(A)‖ / ‖A‖` over the probe matrices.
    pub k_hat: f64,
    /// `maxⱼ ‖exp(uⱼ)‖`
    pub max_exp_norm: f64,
    pub vol_scale: f64,
    /// `K̂·N·|δ̂ₓ|·maxⱼ‖exp(uⱼ)‖`
    pub bound: f64,
    /// The same bound multiplied by `vol_scale`.
    pub bound_vol_scaled: f64,
    /// `maxⱼ ‖out_normal[j] − out_strict[j]‖₂`
    pub measured_deviation: f64,
    /// `measured_deviation / bound`
    pub ratio: f64,
    pub holds: bool,
}

/// `M(xᵢ) + λ·I` for every input sample, as used by the forward pass.
pub fn mapping_matrices(layer: &LieConvLayer, params: &ParamStore) -> Vec<Matrix> {
    let n = layer.group().matrix_dim;
    layer
        .in_samples
        .samples
        .iter()
        .map(|x| {
            layer
                .mapping
                .evaluate(params, &x.coeffs)
                .add(&Matrix::identity(n).scale(MAPPING_RIDGE))
        })
        .collect()
}

fn kernel_inputs(layer: &LieConvLayer, inverses: &[Matrix]) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(inverses.len() * layer.out_exps().len());
    for e in layer.out_exps() {
        for m in inverses {
            out.push(m.matmul(e));
        }
    }
    out
}

/// Layer output for one signal `f: [N_in × c_in]` under the given map.
pub fn layer_output(
    layer: &LieConvLayer,
    params: &ParamStore,
    f: &Tensor,
    mode: MapMode,
) -> Result<Tensor, MetricsError> {
    let mut g = Graph::new();
    let p = params.bind(&mut g, false);
    let x = g.constant(f.clone());
    let x = g.reshape(x, &[1, layer.in_samples.len(), layer.c_in()])?;
    let y = layer.forward_with(&mut g, &p, x, mode)?;
    Ok(g.value(y).clone())
}

/// `maxⱼ ‖a[j] − b[j]‖₂` between two `[.. × N_out × c_out]` outputs.
pub fn mode_deviation(
    layer: &LieConvLayer,
    params: &ParamStore,
    f: &Tensor,
    a: MapMode,
    b: MapMode,
) -> Result<f64, MetricsError> {
    let ya = layer_output(layer, params, f, a)?;
    let yb = layer_output(layer, params, f, b)?;
    Ok(ya
        .data()
        .chunks(layer.c_out())
        .zip(yb.data().chunks(layer.c_out()))
        .map(|(u, v)| u.iter().zip(v).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
        .fold(0.0, f64::max))
}

/// Measures `δ̂ₓ`, `K̂` and the strict-vs-learned deviation for a layer on
/// the probe signal `probe_f` (`[N_in × c_in]`).
pub fn deviation_bound_report(
    layer: &LieConvLayer,
    params: &ParamStore,
    probe_f: &Tensor,
    seed: u64,
    norm: MatrixNorm,
) -> Result<BoundReport, MetricsError> {
    if layer.strict_mode {
        return Err(MetricsError::InvalidArgument(
            "the bound report needs a layer with a learned mapping".into(),
        ));
    }
    if probe_f.shape() != [layer.in_samples.len(), layer.c_in()] {
        return Err(MetricsError::InvalidArgument(format!(
            "probe signal must be [{} × {}], got {:?}",
            layer.in_samples.len(),
            layer.c_in(),
            probe_f.shape()
        )));
    }
    let maps = mapping_matrices(layer, params);
    let learned_inv = maps
        .iter()
        .enumerate()
        .map(|(i, m)| {
            m.inverse().map_err(|_| MetricsError::Singular { sample: i })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let exact_inv = layer.sample_inverses();
    let delta_raw = exact_inv
        .iter()
        .zip(&learned_inv)
        .map(|(g, m)| g.norm(norm) - m.norm(norm))
        .fold(f64::NEG_INFINITY, f64::max);

    let n = layer.group().matrix_dim;
    let mut probes = kernel_inputs(layer, &learned_inv);
    probes.extend(kernel_inputs(layer, exact_inv));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RANDOM_PROBES {
        let t = Tensor::uniform(&[n * n], 2.0, &mut rng);
        probes.push(Matrix::from_vec(n, n, t.into_data()));
    }
    let (c_out, c_in) = (layer.c_out(), layer.c_in());
    let k_hat = probes
        .iter()
        .filter(|a| a.norm(norm) > 0.0)
        .map(|a| {
            let k = Matrix::from_vec(c_out, c_in, layer.kernel.evaluate(params, a));
            k.norm(norm) / a.norm(norm)
        })
        .fold(0.0, f64::max);

    let max_exp_norm = layer.out_exps().iter().map(|e| e.norm(norm)).fold(0.0, f64::max);
    let n_samples = layer.in_samples.len();
    let bound = k_hat * n_samples as f64 * delta_raw.abs() * max_exp_norm;
    let vol_scale = layer.vol_scale(params);
    let measured = mode_deviation(layer, params, probe_f, MapMode::Normal, MapMode::Strict)?;
    Ok(BoundReport {
        report_version: REPORT_VERSION,
        norm,
        n_samples,
        delta_raw,
        k_hat,
        max_exp_norm,
        vol_scale,
        bound,
        bound_vol_scaled: bound * vol_scale,
        measured_deviation: measured,
        ratio: if bound > 0.0 { measured / bound } else if measured == 0.0 { 0.0 } else { f64::INFINITY },
        holds: measured <= bound,
    })
}
