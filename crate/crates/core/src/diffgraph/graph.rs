use super::kernels::{self, Inversion};
use super::tensor::Tensor;
use super::GraphError;

/// Condition-number ceiling for `matrix_inverse`.
pub const MAX_CONDITION: f64 = 1e8;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation that produced a node, with whatever the backward rule needs.
#[derive(Clone, Debug)]
pub enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    MatMul,
    Affine,
    Relu,
    Sigmoid,
    Exp,
    Sum,
    Mean,
    SumAxis { axis: usize },
    MeanAxis { axis: usize },
    MaxAxis { axis: usize, argmax: Vec<usize> },
    Concat { axis: usize },
    Reshape,
    Permute { axes: Vec<usize> },
    MatrixInverse,
    MseLoss,
    SoftmaxCrossEntropy { targets: Vec<usize>, probs: Vec<f64> },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::MatMul => "matmul",
            Op::Affine => "affine",
            Op::Relu => "relu",
            Op::Sigmoid => "sigmoid",
            Op::Exp => "exp",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::SumAxis { .. } => "sum_axis",
            Op::MeanAxis { .. } => "mean_axis",
            Op::MaxAxis { .. } => "max_axis",
            Op::Concat { .. } => "concat",
            Op::Reshape => "reshape",
            Op::Permute { .. } => "permute",
            Op::MatrixInverse => "matrix_inverse",
            Op::MseLoss => "mse_loss",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
        }
    }
}

#[derive(Debug)]
pub struct GraphNode {
    pub value: Tensor,
    grad: Option<Tensor>,
    pub parents: Vec<NodeId>,
    pub op: Op,
    pub requires_grad: bool,
}

/// An append-only computation graph. Nodes are stored in creation order,
/// which is a topological order, so `backward` walks the arena in reverse.
///
/// Gradients are retained on leaves; intermediate adjoints are dropped once
/// propagated.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<GraphNode>,
}

enum Broadcast {
    Same,
    LeftScalar,
    RightScalar,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &GraphNode {
        &self.nodes[id.0]
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Accumulated gradient of `id` (zeros if nothing has flowed into it).
    pub fn grad(&self, id: NodeId) -> Tensor {
        let node = &self.nodes[id.0];
        node.grad
            .clone()
            .unwrap_or_else(|| Tensor::zeros(node.value.shape()))
    }

    /// True if some later node lists `id` as a parent.
    pub fn is_consumed(&self, id: NodeId) -> bool {
        self.nodes[id.0 + 1..]
            .iter()
            .any(|n| n.parents.contains(&id))
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, true)
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(GraphNode {
            value,
            grad: None,
            parents: Vec::new(),
            op: Op::Leaf,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, parents: Vec<NodeId>, op: Op) -> Result<NodeId, GraphError> {
        if !value.is_finite() {
            return Err(GraphError::NonFinite { op: op.name() });
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(GraphNode {
            value,
            grad: None,
            parents,
            op,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn broadcast(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<Broadcast, GraphError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() == vb.shape() {
            Ok(Broadcast::Same)
        } else if va.is_scalar() {
            Ok(Broadcast::LeftScalar)
        } else if vb.is_scalar() {
            Ok(Broadcast::RightScalar)
        } else {
            Err(GraphError::shape(
                op,
                format!("{:?} vs {:?}", va.shape(), vb.shape()),
            ))
        }
    }

    fn binary(
        &mut self,
        a: NodeId,
        b: NodeId,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<NodeId, GraphError> {
        let mode = self.broadcast(op.name(), a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let value = match mode {
            Broadcast::Same => {
                let data = va.data().iter().zip(vb.data()).map(|(x, y)| f(*x, *y)).collect();
                Tensor::new(va.shape().to_vec(), data)?
            }
            Broadcast::LeftScalar => {
                let s = va.item();
                vb.map(|y| f(s, y))
            }
            Broadcast::RightScalar => {
                let s = vb.item();
                va.map(|x| f(x, s))
            }
        };
        self.push(value, vec![a, b], op)
    }

    /// Elementwise `a + b` (either side may be a one-element scalar).
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.binary(a, b, Op::Add, |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.binary(a, b, Op::Sub, |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.binary(a, b, Op::Mul, |x, y| x * y)
    }

    /// `a · s` for a constant `s`.
    pub fn scale(&mut self, a: NodeId, s: f64) -> Result<NodeId, GraphError> {
        let c = self.constant(Tensor::scalar(s));
        self.mul(a, c)
    }

    /// `[m×k] · [k×n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(GraphError::shape("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        kernels::gemm_nn(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        self.push(value, vec![a, b], Op::MatMul)
    }

    /// `x · wᵀ + b` with `x: [B×in]`, `w: [out×in]`, `b: [out]`.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[1] || sb != [sw[0]] {
            return Err(GraphError::shape(
                "affine",
                format!("x {sx:?}, w {sw:?}, b {sb:?}"),
            ));
        }
        let (rows, inp, outp) = (sx[0], sx[1], sw[0]);
        let bias = self.value(b).data();
        let mut out: Vec<f64> = (0..rows).flat_map(|_| bias.iter().copied()).collect();
        kernels::gemm_nt(self.value(x).data(), self.value(w).data(), &mut out, rows, inp, outp);
        let value = Tensor::new(vec![rows, outp], out)?;
        self.push(value, vec![x, w, b], Op::Affine)
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(value, vec![x], Op::Relu)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        let value = self.value(x).map(sigmoid);
        self.push(value, vec![x], Op::Sigmoid)
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        let value = self.value(x).map(f64::exp);
        self.push(value, vec![x], Op::Exp)
    }

    /// Sum of all entries, as a one-element tensor.
    pub fn sum(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), vec![x], Op::Sum)
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        let v = self.value(x);
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push(Tensor::scalar(s), vec![x], Op::Mean)
    }

    fn reduced_shape(&self, x: NodeId, axis: usize, op: &'static str) -> Result<Vec<usize>, GraphError> {
        let shape = self.shape(x);
        if axis >= shape.len() {
            return Err(GraphError::shape(op, format!("axis {axis} of {shape:?}")));
        }
        let mut out: Vec<usize> = shape.to_vec();
        out.remove(axis);
        if out.is_empty() {
            out.push(1);
        }
        Ok(out)
    }

    /// Sums out one axis.
    pub fn sum_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId, GraphError> {
        let out_shape = self.reduced_shape(x, axis, "sum_axis")?;
        let data = reduce_axis(self.value(x), axis, 1.0);
        self.push(Tensor::new(out_shape, data)?, vec![x], Op::SumAxis { axis })
    }

    /// Averages out one axis.
    pub fn mean_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId, GraphError> {
        let out_shape = self.reduced_shape(x, axis, "mean_axis")?;
        let len = self.shape(x)[axis] as f64;
        let data = reduce_axis(self.value(x), axis, 1.0 / len);
        self.push(Tensor::new(out_shape, data)?, vec![x], Op::MeanAxis { axis })
    }

    /// Maximum over one axis; the gradient flows to the first maximiser.
    pub fn max_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId, GraphError> {
        let out_shape = self.reduced_shape(x, axis, "max_axis")?;
        let v = self.value(x);
        let (outer, len, inner) = kernels::split_axis(v.shape(), axis);
        let mut data = Vec::with_capacity(outer * inner);
        let mut argmax = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let mut best = o * len * inner + i;
                for l in 1..len {
                    let idx = (o * len + l) * inner + i;
                    if v.data()[idx] > v.data()[best] {
                        best = idx;
                    }
                }
                data.push(v.data()[best]);
                argmax.push(best);
            }
        }
        self.push(Tensor::new(out_shape, data)?, vec![x], Op::MaxAxis { axis, argmax })
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, xs: &[NodeId], axis: usize) -> Result<NodeId, GraphError> {
        let first = xs
            .first()
            .ok_or_else(|| GraphError::InvalidArgument("concat of nothing".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(GraphError::shape("concat", format!("axis {axis} of {base:?}")));
        }
        let mut total = 0;
        for &x in xs {
            let s = self.shape(x);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(GraphError::shape("concat", format!("{s:?} vs {base:?}")));
            }
            total += s[axis];
        }
        let (outer, _, inner) = kernels::split_axis(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &x in xs {
                let v = self.value(x);
                let len = v.shape()[axis];
                data.extend_from_slice(&v.data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        self.push(Tensor::new(shape, data)?, xs.to_vec(), Op::Concat { axis })
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId, GraphError> {
        let value = self.value(x).clone().reshaped(shape)?;
        self.push(value, vec![x], Op::Reshape)
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: NodeId, axes: &[usize]) -> Result<NodeId, GraphError> {
        let shape = self.shape(x);
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true)) {
            return Err(GraphError::shape("permute", format!("axes {axes:?} for {shape:?}")));
        }
        let (out_shape, data) = kernels::permute(self.value(x).data(), shape, axes);
        self.push(
            Tensor::new(out_shape, data)?,
            vec![x],
            Op::Permute { axes: axes.to_vec() },
        )
    }

    /// Inverse of an `[n×n]` matrix or of each block of a `[B×n×n]` stack.
    ///
    /// Gaussian elimination with partial pivoting; a pivot below
    /// `1e−12 · row max` or a 1-norm condition estimate above
    /// [`MAX_CONDITION`] is reported as [`GraphError::Singular`] with the
    /// block index.
    pub fn matrix_inverse(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        let shape = self.shape(x).to_vec();
        let (batch, n) = match shape.as_slice() {
            [r, c] if r == c => (1, *r),
            [b, r, c] if r == c => (*b, *r),
            _ => {
                return Err(GraphError::shape(
                    "matrix_inverse",
                    format!("expected square blocks, got {shape:?}"),
                ))
            }
        };
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(src.len());
        for i in 0..batch {
            let block = &src[i * n * n..(i + 1) * n * n];
            match kernels::invert(block, n) {
                Inversion::Singular => {
                    return Err(GraphError::Singular {
                        index: i,
                        condition: f64::INFINITY,
                    })
                }
                Inversion::Ok(inv) => {
                    let condition = kernels::norm_1(block, n) * kernels::norm_1(&inv, n);
                    if !(condition < MAX_CONDITION) {
                        return Err(GraphError::Singular { index: i, condition });
                    }
                    out.extend(inv);
                }
            }
        }
        self.push(Tensor::new(shape, out)?, vec![x], Op::MatrixInverse)
    }

    /// `mean((pred − target)²)` over all entries.
    pub fn mse_loss(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId, GraphError> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() {
            return Err(GraphError::shape(
                "mse_loss",
                format!("{:?} vs {:?}", p.shape(), t.shape()),
            ));
        }
        let s = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / p.len() as f64;
        self.push(Tensor::scalar(s), vec![pred, target], Op::MseLoss)
    }

    /// Mean cross-entropy of row-wise softmax of `logits: [B×K]` against
    /// integer class targets.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: NodeId,
        targets: &[usize],
    ) -> Result<NodeId, GraphError> {
        let v = self.value(logits);
        let shape = v.shape();
        if shape.len() != 2 || shape[0] != targets.len() {
            return Err(GraphError::shape(
                "softmax_cross_entropy",
                format!("logits {shape:?} with {} targets", targets.len()),
            ));
        }
        let (b, k) = (shape[0], shape[1]);
        if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
            return Err(GraphError::InvalidArgument(format!(
                "target class {bad} out of range for {k} logits"
            )));
        }
        let mut probs = Vec::with_capacity(b * k);
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = &v.data()[r * k..(r + 1) * k];
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|x| (x - m).exp()).sum();
            let log_z = z.ln() + m;
            loss += log_z - row[t];
            probs.extend(row.iter().map(|x| (x - log_z).exp()));
        }
        let value = Tensor::scalar(loss / b as f64);
        self.push(
            value,
            vec![logits],
            Op::SoftmaxCrossEntropy {
                targets: targets.to_vec(),
                probs,
            },
        )
    }

    /// Reverse accumulation from a one-element root. Leaf gradients are added
    /// to whatever is already stored, so two calls without [`zero_grad`]
    /// double them.
    ///
    /// [`zero_grad`]: Graph::zero_grad
    pub fn backward(&mut self, root: NodeId) -> Result<(), GraphError> {
        if !self.value(root).is_scalar() {
            return Err(GraphError::InvalidArgument(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut adjoints: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        adjoints[root.0] = Some(Tensor::ones(self.shape(root)));
        for i in (0..=root.0).rev() {
            let Some(adj) = adjoints[i].take() else {
                continue;
            };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(g) => g.add_assign(&adj),
                    None => node.grad = Some(adj),
                }
                continue;
            }
            for (parent, contribution) in self.local_grads(i, &adj)? {
                match &mut adjoints[parent.0] {
                    Some(g) => g.add_assign(&contribution),
                    slot => *slot = Some(contribution),
                }
            }
        }
        Ok(())
    }

    /// Resets the stored gradients of `ids` to zero.
    pub fn zero_grad(&mut self, ids: &[NodeId]) {
        for id in ids {
            let node = &mut self.nodes[id.0];
            match &mut node.grad {
                Some(g) => g.fill(0.0),
                None => node.grad = Some(Tensor::zeros(node.value.shape())),
            }
        }
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Contributions of node `i`'s adjoint to each parent that needs one.
    fn local_grads(&self, i: usize, adj: &Tensor) -> Result<Vec<(NodeId, Tensor)>, GraphError> {
        let node = &self.nodes[i];
        let p = &node.parents;
        let mut out = Vec::with_capacity(p.len());
        match &node.op {
            Op::Leaf => {}
            Op::Add | Op::Sub => {
                let sign = if matches!(node.op, Op::Sub) { -1.0 } else { 1.0 };
                for (k, &parent) in p.iter().enumerate() {
                    if !self.wants(parent) {
                        continue;
                    }
                    let s = if k == 0 { 1.0 } else { sign };
                    out.push((parent, unbroadcast(adj.map(|g| g * s), self.value(parent))));
                }
            }
            Op::Mul => {
                let (a, b) = (p[0], p[1]);
                let (va, vb) = (self.value(a), self.value(b));
                if self.wants(a) {
                    out.push((a, unbroadcast(mul_broadcast(adj, vb), va)));
                }
                if self.wants(b) {
                    out.push((b, unbroadcast(mul_broadcast(adj, va), vb)));
                }
            }
            Op::MatMul => {
                let (a, b) = (p[0], p[1]);
                let (va, vb) = (self.value(a), self.value(b));
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                if self.wants(a) {
                    let mut ga = vec![0.0; m * k];
                    kernels::gemm_nt(adj.data(), vb.data(), &mut ga, m, n, k);
                    out.push((a, Tensor::new(vec![m, k], ga)?));
                }
                if self.wants(b) {
                    let mut gb = vec![0.0; k * n];
                    kernels::gemm_tn(va.data(), adj.data(), &mut gb, m, k, n);
                    out.push((b, Tensor::new(vec![k, n], gb)?));
                }
            }
            Op::Affine => {
                let (x, w, b) = (p[0], p[1], p[2]);
                let (vx, vw) = (self.value(x), self.value(w));
                let (rows, inp, outp) = (vx.shape()[0], vx.shape()[1], vw.shape()[0]);
                if self.wants(x) {
                    let mut gx = vec![0.0; rows * inp];
                    kernels::gemm_nn(adj.data(), vw.data(), &mut gx, rows, outp, inp);
                    out.push((x, Tensor::new(vec![rows, inp], gx)?));
                }
                if self.wants(w) {
                    let mut gw = vec![0.0; outp * inp];
                    kernels::gemm_tn(adj.data(), vx.data(), &mut gw, rows, outp, inp);
                    out.push((w, Tensor::new(vec![outp, inp], gw)?));
                }
                if self.wants(b) {
                    let mut gb = vec![0.0; outp];
                    for r in 0..rows {
                        for (g, a) in gb.iter_mut().zip(&adj.data()[r * outp..(r + 1) * outp]) {
                            *g += a;
                        }
                    }
                    out.push((b, Tensor::vector(gb)));
                }
            }
            Op::Relu => {
                let x = self.value(p[0]);
                let data = adj
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                    .collect();
                out.push((p[0], Tensor::new(x.shape().to_vec(), data)?));
            }
            Op::Sigmoid | Op::Exp => {
                let y = &node.value;
                let data = adj
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(g, s)| match node.op {
                        Op::Sigmoid => g * s * (1.0 - s),
                        _ => g * s,
                    })
                    .collect();
                out.push((p[0], Tensor::new(y.shape().to_vec(), data)?));
            }
            Op::Sum | Op::Mean => {
                let x = self.value(p[0]);
                let scale = if matches!(node.op, Op::Mean) {
                    1.0 / x.len() as f64
                } else {
                    1.0
                };
                out.push((p[0], Tensor::filled(x.shape(), adj.item() * scale)));
            }
            Op::SumAxis { axis } | Op::MeanAxis { axis } => {
                let x = self.value(p[0]);
                let (outer, len, inner) = kernels::split_axis(x.shape(), *axis);
                let scale = if matches!(node.op, Op::MeanAxis { .. }) {
                    1.0 / len as f64
                } else {
                    1.0
                };
                let mut g = vec![0.0; x.len()];
                for o in 0..outer {
                    for l in 0..len {
                        for i in 0..inner {
                            g[(o * len + l) * inner + i] = adj.data()[o * inner + i] * scale;
                        }
                    }
                }
                out.push((p[0], Tensor::new(x.shape().to_vec(), g)?));
            }
            Op::MaxAxis { argmax, .. } => {
                let x = self.value(p[0]);
                let mut g = vec![0.0; x.len()];
                for (a, &idx) in adj.data().iter().zip(argmax) {
                    g[idx] += a;
                }
                out.push((p[0], Tensor::new(x.shape().to_vec(), g)?));
            }
            Op::Concat { axis } => {
                let (outer, total, inner) = kernels::split_axis(node.value.shape(), *axis);
                let mut offset = 0;
                for &parent in p {
                    let shape = self.shape(parent).to_vec();
                    let len = shape[*axis];
                    if self.wants(parent) {
                        let mut g = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let start = (o * total + offset) * inner;
                            g.extend_from_slice(&adj.data()[start..start + len * inner]);
                        }
                        out.push((parent, Tensor::new(shape, g)?));
                    }
                    offset += len;
                }
            }
            Op::Reshape => {
                let shape = self.shape(p[0]).to_vec();
                out.push((p[0], adj.clone().reshaped(&shape)?));
            }
            Op::Permute { axes } => {
                let inverse = kernels::invert_axes(axes);
                let (shape, data) = kernels::permute(adj.data(), adj.shape(), &inverse);
                out.push((p[0], Tensor::new(shape, data)?));
            }
            Op::MatrixInverse => {
                // d(A⁻¹) = −A⁻¹ dA A⁻¹  ⇒  ∂L/∂A = −A⁻ᵀ G A⁻ᵀ
                let inv = &node.value;
                let n = *inv.shape().last().expect("square");
                let batch = inv.len() / (n * n);
                let mut g = vec![0.0; inv.len()];
                for bi in 0..batch {
                    let r = bi * n * n..(bi + 1) * n * n;
                    let a_inv = &inv.data()[r.clone()];
                    let gb = &adj.data()[r.clone()];
                    // t = A⁻ᵀ G
                    let mut t = vec![0.0; n * n];
                    kernels::gemm_tn(a_inv, gb, &mut t, n, n, n);
                    // t · A⁻ᵀ
                    let mut res = vec![0.0; n * n];
                    kernels::gemm_nt(&t, a_inv, &mut res, n, n, n);
                    for (dst, v) in g[r].iter_mut().zip(res) {
                        *dst = -v;
                    }
                }
                out.push((p[0], Tensor::new(inv.shape().to_vec(), g)?));
            }
            Op::MseLoss => {
                let (pred, target) = (p[0], p[1]);
                let (vp, vt) = (self.value(pred), self.value(target));
                let scale = 2.0 * adj.item() / vp.len() as f64;
                let diff: Vec<f64> = vp
                    .data()
                    .iter()
                    .zip(vt.data())
                    .map(|(a, b)| (a - b) * scale)
                    .collect();
                if self.wants(pred) {
                    out.push((pred, Tensor::new(vp.shape().to_vec(), diff.clone())?));
                }
                if self.wants(target) {
                    let neg = diff.into_iter().map(|v| -v).collect();
                    out.push((target, Tensor::new(vt.shape().to_vec(), neg)?));
                }
            }
            Op::SoftmaxCrossEntropy { targets, probs } => {
                let shape = self.shape(p[0]).to_vec();
                let (b, k) = (shape[0], shape[1]);
                let scale = adj.item() / b as f64;
                let mut g: Vec<f64> = probs.iter().map(|v| v * scale).collect();
                for (r, &t) in targets.iter().enumerate() {
                    g[r * k + t] -= scale;
                }
                out.push((p[0], Tensor::new(shape, g)?));
            }
        }
        Ok(out)
    }
}

#[inline]
pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn reduce_axis(v: &Tensor, axis: usize, scale: f64) -> Vec<f64> {
    let (outer, len, inner) = kernels::split_axis(v.shape(), axis);
    let mut data = vec![0.0; outer * inner];
    for o in 0..outer {
        for l in 0..len {
            let src = &v.data()[(o * len + l) * inner..(o * len + l + 1) * inner];
            for (d, s) in data[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    if scale != 1.0 {
        data.iter_mut().for_each(|d| *d *= scale);
    }
    data
}

/// `adj ⊙ other`, where `other` may be a scalar.
fn mul_broadcast(adj: &Tensor, other: &Tensor) -> Tensor {
    if other.len() == adj.len() {
        let data = adj.data().iter().zip(other.data()).map(|(a, b)| a * b).collect();
        Tensor::new(adj.shape().to_vec(), data).expect("same shape")
    } else {
        let s = other.item();
        adj.map(|a| a * s)
    }
}

/// Folds a full-size gradient back onto a scalar operand.
fn unbroadcast(grad: Tensor, target: &Tensor) -> Tensor {
    if grad.shape() == target.shape() {
        grad
    } else {
        Tensor::filled(target.shape(), grad.data().iter().sum())
    }
}
