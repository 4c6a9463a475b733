//! Central finite-difference oracle for reverse-mode gradients.
//!
//! The numeric side only ever calls the forward closure, so it shares no code
//! with the backward rules it is checking.

use super::{Graph, GraphError, NodeId, Tensor};

/// Magnitude below which both gradients are compared absolutely.
pub const ABS_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Largest elementwise `|a − n| / max(|a|, |n|, ABS_FLOOR)`.
    pub max_rel_err: f64,
    /// Input index and flat offset of the worst entry.
    pub worst: (usize, usize),
    pub analytic: Vec<Tensor>,
    pub numeric: Vec<Tensor>,
}

/// Compares backward-pass gradients of `f` with central differences of step
/// `h` for every entry of every input.
pub fn check_gradients<F>(inputs: &[Tensor], h: f64, f: F) -> Result<GradCheck, GraphError>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId, GraphError>,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let root = f(&mut g, &ids)?;
    g.backward(root)?;
    let analytic: Vec<Tensor> = ids.iter().map(|&id| g.grad(id)).collect();

    let eval = |xs: &[Tensor]| -> Result<f64, GraphError> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = xs.iter().map(|t| g.constant(t.clone())).collect();
        let root = f(&mut g, &ids)?;
        Ok(g.value(root).item())
    };

    let mut numeric = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor> = inputs.to_vec();
    for k in 0..inputs.len() {
        let mut grad = Tensor::zeros(inputs[k].shape());
        for j in 0..inputs[k].len() {
            let orig = inputs[k].data()[j];
            work[k].data_mut()[j] = orig + h;
            let up = eval(&work)?;
            work[k].data_mut()[j] = orig - h;
            let down = eval(&work)?;
            work[k].data_mut()[j] = orig;
            grad.data_mut()[j] = (up - down) / (2.0 * h);
        }
        numeric.push(grad);
    }

    let mut max_rel_err = 0.0;
    let mut worst = (0, 0);
    for (k, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        for (j, (x, y)) in a.data().iter().zip(n.data()).enumerate() {
            let rel = relative_error(*x, *y);
            if rel > max_rel_err {
                max_rel_err = rel;
                worst = (k, j);
            }
        }
    }
    Ok(GradCheck {
        max_rel_err,
        worst,
        analytic,
        numeric,
    })
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(ABS_FLOOR)
}

/// Every differentiable op of [`Graph`], by name.
pub const OPS: [&str; 20] = [
    "add",
    "sub",
    "mul",
    "scale",
    "matmul",
    "affine",
    "relu",
    "sigmoid",
    "exp",
    "sum",
    "mean",
    "sum_axis",
    "mean_axis",
    "max_axis",
    "concat",
    "reshape",
    "permute",
    "matrix_inverse",
    "mse_loss",
    "softmax_cross_entropy",
];

fn weighted_sum(g: &mut Graph, y: NodeId, w: &Tensor) -> Result<NodeId, GraphError> {
    let w = g.constant(w.clone());
    let p = g.mul(y, w)?;
    g.sum(p)
}

/// Gradient check of op `name` on one random instance drawn from `seed`.
///
/// Each op output is reduced to a scalar through a random weighted sum so
/// every output entry contributes a distinct weight.
pub fn check_op(name: &str, seed: u64, h: f64) -> Result<GradCheck, GraphError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut u = |shape: &[usize]| Tensor::uniform(shape, 1.0, &mut rng);
    let (a, b) = (u(&[3, 4]), u(&[3, 4]));
    let w34 = u(&[3, 4]);
    match name {
        "add" | "sub" | "mul" => {
            let op = name.to_string();
            check_gradients(&[a, b], h, move |g, x| {
                let y = match op.as_str() {
                    "add" => g.add(x[0], x[1])?,
                    "sub" => g.sub(x[0], x[1])?,
                    _ => g.mul(x[0], x[1])?,
                };
                weighted_sum(g, y, &w34)
            })
        }
        "scale" => check_gradients(&[a], h, move |g, x| {
            let y = g.scale(x[0], -1.7)?;
            weighted_sum(g, y, &w34)
        }),
        "matmul" => {
            let (m, w) = (u(&[4, 5]), u(&[3, 5]));
            check_gradients(&[a, m], h, move |g, x| {
                let y = g.matmul(x[0], x[1])?;
                weighted_sum(g, y, &w)
            })
        }
        "affine" => {
            let (wt, bias, w) = (u(&[2, 4]), u(&[2]), u(&[3, 2]));
            check_gradients(&[a, wt, bias], h, move |g, x| {
                let y = g.affine(x[0], x[1], x[2])?;
                weighted_sum(g, y, &w)
            })
        }
        "relu" | "sigmoid" | "exp" => {
            let op = name.to_string();
            check_gradients(&[a], h, move |g, x| {
                let y = match op.as_str() {
                    "relu" => g.relu(x[0])?,
                    "sigmoid" => g.sigmoid(x[0])?,
                    _ => g.exp(x[0])?,
                };
                weighted_sum(g, y, &w34)
            })
        }
        "sum" => check_gradients(&[a], h, |g, x| g.sum(x[0])),
        "mean" => check_gradients(&[a], h, |g, x| g.mean(x[0])),
        "sum_axis" | "mean_axis" | "max_axis" => {
            let t = u(&[2, 3, 4]);
            let axis = rng.gen_range(0..3usize);
            let mut out_shape = vec![2, 3, 4];
            out_shape.remove(axis);
            let w = Tensor::uniform(&out_shape, 1.0, &mut rng);
            let op = name.to_string();
            check_gradients(&[t], h, move |g, x| {
                let y = match op.as_str() {
                    "sum_axis" => g.sum_axis(x[0], axis)?,
                    "mean_axis" => g.mean_axis(x[0], axis)?,
                    _ => g.max_axis(x[0], axis)?,
                };
                weighted_sum(g, y, &w)
            })
        }
        "concat" => {
            let c = u(&[3, 2]);
            let w = u(&[3, 6]);
            check_gradients(&[a, c], h, move |g, x| {
                let y = g.concat(&[x[0], x[1]], 1)?;
                weighted_sum(g, y, &w)
            })
        }
        "reshape" => {
            let w = u(&[2, 6]);
            check_gradients(&[a], h, move |g, x| {
                let y = g.reshape(x[0], &[2, 6])?;
                weighted_sum(g, y, &w)
            })
        }
        "permute" => {
            let t = u(&[2, 3, 4]);
            let w = u(&[4, 2, 3]);
            check_gradients(&[t], h, move |g, x| {
                let y = g.permute(x[0], &[2, 0, 1])?;
                weighted_sum(g, y, &w)
            })
        }
        "matrix_inverse" => {
            let mut m = u(&[2, 3, 3]).map(|v| 0.3 * v);
            for blk in 0..2 {
                for i in 0..3 {
                    m.data_mut()[blk * 9 + i * 4] += 1.0;
                }
            }
            let w = u(&[2, 3, 3]);
            check_gradients(&[m], h, move |g, x| {
                let y = g.matrix_inverse(x[0])?;
                weighted_sum(g, y, &w)
            })
        }
        "mse_loss" => check_gradients(&[a, b], h, |g, x| g.mse_loss(x[0], x[1])),
        "softmax_cross_entropy" => {
            let logits = u(&[5, 4]).map(|v| 3.0 * v);
            let targets: Vec<usize> = (0..5).map(|_| rng.gen_range(0..4)).collect();
            check_gradients(&[logits], h, move |g, x| g.softmax_cross_entropy(x[0], &targets))
        }
        other => Err(GraphError::InvalidArgument(format!("unknown op `{other}`"))),
    }
}
