use std::rc::Rc;

use super::kernels::{gemm_nn, gemm_nt, gemm_tn, softmax_rows, softmax_rows_backward, transpose};
use super::{Scalar, Tensor, TensorError};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Which axis a bias vector is broadcast along in [`Tape::add_bias`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BiasAxis {
    /// `x[m×n] + b[n]`: one bias per column, repeated on every row.
    Columns,
    /// `x[c×…] + b[c]`: one bias per leading-axis slice.
    Leading,
}

/// Layout of the source tensor of a gather.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GatherLayout {
    /// Source is `[C × N]` (or `[C × H × W]` with `N = H·W`).
    ChannelMajor,
    /// Source is `[N × C]`.
    PositionMajor,
}

/// One weighted read from a source position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tap<T> {
    pub index: u32,
    pub weight: T,
}

impl<T: Scalar> Tap<T> {
    pub fn none() -> Self {
        Self {
            index: 0,
            weight: T::zero(),
        }
    }
}

/// Sparse linear read-out: output row `m` is `Σ_k taps[m][k].weight · src[taps[m][k].index]`.
///
/// Bilinear sampling, row selection and row scattering are all instances.
#[derive(Clone, Debug)]
pub struct GatherPlan<T> {
    pub positions: usize,
    pub channels: usize,
    pub layout: GatherLayout,
    pub taps: Vec<[Tap<T>; 4]>,
}

impl<T: Scalar> GatherPlan<T> {
    pub fn new(positions: usize, channels: usize, layout: GatherLayout) -> Self {
        Self {
            positions,
            channels,
            layout,
            taps: Vec::new(),
        }
    }

    pub fn push(&mut self, taps: [Tap<T>; 4]) {
        self.taps.push(taps);
    }

    /// Adds an output row reading a single source position with weight one.
    pub fn push_single(&mut self, index: usize) {
        self.taps.push([
            Tap {
                index: index as u32,
                weight: T::one(),
            },
            Tap::none(),
            Tap::none(),
            Tap::none(),
        ]);
    }

    /// Adds an all-zero output row.
    pub fn push_empty(&mut self) {
        self.taps.push([Tap::none(); 4]);
    }

    pub fn rows(&self) -> usize {
        self.taps.len()
    }

    fn forward(&self, src: &[T]) -> Vec<T> {
        let (n, c) = (self.positions, self.channels);
        let mut out = vec![T::zero(); self.taps.len() * c];
        for (row, taps) in out.chunks_exact_mut(c).zip(&self.taps) {
            for tap in taps.iter().filter(|t| t.weight != T::zero()) {
                let idx = tap.index as usize;
                match self.layout {
                    GatherLayout::ChannelMajor => {
                        for (ch, o) in row.iter_mut().enumerate() {
                            *o = *o + tap.weight * src[ch * n + idx];
                        }
                    }
                    GatherLayout::PositionMajor => {
                        let s = &src[idx * c..(idx + 1) * c];
                        for (o, &v) in row.iter_mut().zip(s) {
                            *o = *o + tap.weight * v;
                        }
                    }
                }
            }
        }
        out
    }

    fn backward(&self, g: &[T]) -> Vec<T> {
        let (n, c) = (self.positions, self.channels);
        let mut out = vec![T::zero(); n * c];
        for (grow, taps) in g.chunks_exact(c).zip(&self.taps) {
            for tap in taps.iter().filter(|t| t.weight != T::zero()) {
                let idx = tap.index as usize;
                match self.layout {
                    GatherLayout::ChannelMajor => {
                        for (ch, &gv) in grow.iter().enumerate() {
                            let o = &mut out[ch * n + idx];
                            *o = *o + tap.weight * gv;
                        }
                    }
                    GatherLayout::PositionMajor => {
                        let o = &mut out[idx * c..(idx + 1) * c];
                        for (o, &gv) in o.iter_mut().zip(grow) {
                            *o = *o + tap.weight * gv;
                        }
                    }
                }
            }
        }
        out
    }
}

enum Op<T> {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    BatchMatMul { a: Var, b: Var, trans_b: bool },
    Add { a: Var, b: Var },
    AddBias { x: Var, bias: Var, axis: BiasAxis },
    Relu { x: Var },
    Softmax { x: Var },
    Concat { inputs: Vec<Var>, axis: usize },
    Reshape { x: Var },
    Transpose { x: Var },
    Scale { x: Var, factor: T },
    Sum { x: Var },
    Mse { pred: Var, target: Var },
    Gather { src: Var, plan: Rc<GatherPlan<T>> },
    Upsample2x { x: Var },
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records primitive ops in execution order and replays them in reverse.
///
/// Nodes are appended only after their inputs exist, so the node list is
/// already topologically sorted.
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, detail: String) -> TensorError {
    TensorError::Shape { op, detail }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input tensor. It receives gradients iff `requires_grad` is set.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let needs_grad = tensor.requires_grad();
        self.push(tensor, Op::Leaf, needs_grad)
    }

    /// Records a trainable input.
    pub fn param(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_requires_grad(true))
    }

    /// Records an input that never receives gradients.
    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    pub fn zero_grad(&mut self) {
        self.nodes.iter_mut().for_each(|n| n.value.zero_grad());
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    fn finish(&mut self, shape: &[usize], data: Vec<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs = self.needs(inputs);
        let value = Tensor::new(shape, data).expect("kernel produced wrong length");
        self.push(value, op, needs)
    }

    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.matmul_impl(a, b, false)
    }

    /// `a[m×k] · b[n×k]ᵀ`, the layout of a linear layer applied to rows.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 {
            return Err(shape_err("matmul", format!("{sa:?} x {sb:?}: rank-2 operands required")));
        }
        let (m, k) = (sa[0], sa[1]);
        let (kb, n) = if trans_b { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
        if k != kb {
            return Err(shape_err("matmul", format!("inner dims {k} != {kb}")));
        }
        let out = if trans_b {
            gemm_nt(self.data(a), self.data(b), m, k, n)
        } else {
            gemm_nn(self.data(a), self.data(b), m, k, n)
        };
        Ok(self.finish(&[m, n], out, Op::MatMul { a, b, trans_b }, &[a, b]))
    }

    /// Batched product `a[B×m×k] · b[B×k×n]` (or `b[B×n×k]ᵀ` when `trans_b`).
    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(shape_err("batch_matmul", format!("{sa:?} x {sb:?}")));
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let (kb, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if k != kb {
            return Err(shape_err("batch_matmul", format!("inner dims {k} != {kb}")));
        }
        let (da, db) = (self.data(a), self.data(b));
        let mut out = Vec::with_capacity(batch * m * n);
        for i in 0..batch {
            let ai = &da[i * m * k..(i + 1) * m * k];
            let bi = &db[i * k * n..(i + 1) * k * n];
            if trans_b {
                out.extend(gemm_nt(ai, bi, m, k, n));
            } else {
                out.extend(gemm_nn(ai, bi, m, k, n));
            }
        }
        Ok(self.finish(&[batch, m, n], out, Op::BatchMatMul { a, b, trans_b }, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(
                "add",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.finish(&shape, out, Op::Add { a, b }, &[a, b]))
    }

    pub fn add_bias(&mut self, x: Var, bias: Var, axis: BiasAxis) -> Result<Var, TensorError> {
        let shape = self.shape(x).to_vec();
        let blen = self.value(bias).numel();
        if shape.is_empty() {
            return Err(shape_err("add_bias", "scalar input".into()));
        }
        let expected = match axis {
            BiasAxis::Columns => *shape.last().unwrap(),
            BiasAxis::Leading => shape[0],
        };
        if blen != expected || self.shape(bias).len() != 1 {
            return Err(shape_err(
                "add_bias",
                format!("bias {:?} against input {shape:?}", self.shape(bias)),
            ));
        }
        let numel = self.value(x).numel();
        let inner = numel / shape[0];
        let b = self.data(bias);
        let out = self
            .data(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| match axis {
                BiasAxis::Columns => v + b[i % blen],
                BiasAxis::Leading => v + b[i / inner],
            })
            .collect();
        Ok(self.finish(&shape, out, Op::AddBias { x, bias, axis }, &[x, bias]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self
            .data(x)
            .iter()
            .map(|&v| if v > T::zero() { v } else { T::zero() })
            .collect();
        let shape = self.shape(x).to_vec();
        self.finish(&shape, out, Op::Relu { x }, &[x])
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        let shape = self.shape(x).to_vec();
        let n = *shape
            .last()
            .ok_or_else(|| shape_err("softmax", "scalar input".into()))?;
        if n == 0 {
            return Err(shape_err("softmax", "empty axis".into()));
        }
        let out = softmax_rows(self.data(x), n);
        Ok(self.finish(&shape, out, Op::Softmax { x }, &[x]))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = inputs
            .first()
            .ok_or_else(|| shape_err("concat", "no inputs".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(shape_err("concat", format!("axis {axis} for rank {}", base.len())));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(shape_err("concat", format!("{s:?} vs {base:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let chunks: Vec<usize> = inputs
            .iter()
            .map(|&v| self.shape(v)[axis..].iter().product())
            .collect();
        let mut out = Vec::with_capacity(outer * chunks.iter().sum::<usize>());
        for o in 0..outer {
            for (&v, &chunk) in inputs.iter().zip(&chunks) {
                out.extend_from_slice(&self.data(v)[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let op = Op::Concat {
            inputs: inputs.to_vec(),
            axis,
        };
        Ok(self.finish(&shape, out, op, inputs))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let numel: usize = shape.iter().product();
        if numel != self.value(x).numel() {
            return Err(shape_err(
                "reshape",
                format!("{:?} -> {shape:?}", self.shape(x)),
            ));
        }
        let out = self.data(x).to_vec();
        Ok(self.finish(shape, out, Op::Reshape { x }, &[x]))
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&mut self, x: Var) -> Result<Var, TensorError> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(shape_err("transpose", format!("{s:?} is not rank 2")));
        }
        let out = transpose(self.data(x), s[0], s[1]);
        Ok(self.finish(&[s[1], s[0]], out, Op::Transpose { x }, &[x]))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let factor = T::of(factor);
        let out = self.data(x).iter().map(|&v| v * factor).collect();
        let shape = self.shape(x).to_vec();
        self.finish(&shape, out, Op::Scale { x, factor }, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total: f64 = self.data(x).iter().map(|v| v.f64()).sum();
        self.finish(&[], vec![T::of(total)], Op::Sum { x }, &[x])
    }

    /// Mean squared error between `pred` and `target` (same shape).
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var, TensorError> {
        if self.shape(pred) != self.shape(target) {
            return Err(shape_err(
                "mse",
                format!("{:?} vs {:?}", self.shape(pred), self.shape(target)),
            ));
        }
        let n = self.value(pred).numel().max(1) as f64;
        let total: f64 = self
            .data(pred)
            .iter()
            .zip(self.data(target))
            .map(|(p, t)| {
                let d = p.f64() - t.f64();
                d * d
            })
            .sum();
        Ok(self.finish(&[], vec![T::of(total / n)], Op::Mse { pred, target }, &[pred, target]))
    }

    /// Applies a [`GatherPlan`]; output is `[plan.rows() × plan.channels]`.
    pub fn gather(&mut self, src: Var, plan: Rc<GatherPlan<T>>) -> Result<Var, TensorError> {
        let s = self.shape(src);
        let expected = plan.positions * plan.channels;
        let leading_ok = match plan.layout {
            GatherLayout::ChannelMajor => s.first() == Some(&plan.channels),
            GatherLayout::PositionMajor => s.first() == Some(&plan.positions),
        };
        if self.value(src).numel() != expected || !leading_ok {
            return Err(shape_err(
                "gather",
                format!(
                    "source {s:?} for {} positions x {} channels ({:?})",
                    plan.positions, plan.channels, plan.layout
                ),
            ));
        }
        let out = plan.forward(self.data(src));
        let shape = [plan.rows(), plan.channels];
        Ok(self.finish(&shape, out, Op::Gather { src, plan }, &[src]))
    }

    /// Nearest-neighbour 2× upsampling of a `[C × H × W]` tensor.
    pub fn upsample2x(&mut self, x: Var) -> Result<Var, TensorError> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 {
            return Err(shape_err("upsample2x", format!("{s:?} is not [C,H,W]")));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let src = self.data(x);
        let mut out = Vec::with_capacity(c * h * w * 4);
        for ch in 0..c {
            for y in 0..2 * h {
                let row = &src[(ch * h + y / 2) * w..(ch * h + y / 2 + 1) * w];
                for xx in 0..2 * w {
                    out.push(row[xx / 2]);
                }
            }
        }
        Ok(self.finish(&[c, 2 * h, 2 * w], out, Op::Upsample2x { x }, &[x]))
    }

    /// Reverse pass from a scalar `loss`. Leaf gradients accumulate across calls.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.value(loss).numel() != 1 {
            return Err(TensorError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let mut adj: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                self.nodes[i].value.accumulate_grad(&g);
                continue;
            }
            for (v, delta) in self.local_grads(i, &g) {
                if !self.nodes[v.0].needs_grad {
                    continue;
                }
                match &mut adj[v.0] {
                    Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, d)| *a = *a + *d),
                    slot @ None => *slot = Some(delta),
                }
            }
        }
        Ok(())
    }

    /// Vector-Jacobian products of node `i` for each of its inputs.
    fn local_grads(&self, i: usize, g: &[T]) -> Vec<(Var, Vec<T>)> {
        let node = &self.nodes[i];
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul { a, b, trans_b } => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k) = (sa[0], sa[1]);
                let n = if *trans_b { sb[0] } else { sb[1] };
                let mut out = Vec::new();
                if wants(*a) {
                    let da = if *trans_b {
                        gemm_nn(g, self.data(*b), m, n, k)
                    } else {
                        gemm_nt(g, self.data(*b), m, n, k)
                    };
                    out.push((*a, da));
                }
                if wants(*b) {
                    let db = if *trans_b {
                        gemm_tn(g, self.data(*a), m, n, k)
                    } else {
                        gemm_tn(self.data(*a), g, m, k, n)
                    };
                    out.push((*b, db));
                }
                out
            }
            Op::BatchMatMul { a, b, trans_b } => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (batch, m, k) = (sa[0], sa[1], sa[2]);
                let n = if *trans_b { sb[1] } else { sb[2] };
                let (da_src, db_src) = (self.data(*a), self.data(*b));
                let mut da = Vec::with_capacity(batch * m * k);
                let mut db = Vec::with_capacity(batch * k * n);
                for bi in 0..batch {
                    let gi = &g[bi * m * n..(bi + 1) * m * n];
                    let ai = &da_src[bi * m * k..(bi + 1) * m * k];
                    let bmat = &db_src[bi * k * n..(bi + 1) * k * n];
                    if wants(*a) {
                        da.extend(if *trans_b {
                            gemm_nn(gi, bmat, m, n, k)
                        } else {
                            gemm_nt(gi, bmat, m, n, k)
                        });
                    }
                    if wants(*b) {
                        db.extend(if *trans_b {
                            gemm_tn(gi, ai, m, n, k)
                        } else {
                            gemm_tn(ai, gi, m, k, n)
                        });
                    }
                }
                let mut out = Vec::new();
                if wants(*a) {
                    out.push((*a, da));
                }
                if wants(*b) {
                    out.push((*b, db));
                }
                out
            }
            Op::Add { a, b } => vec![(*a, g.to_vec()), (*b, g.to_vec())],
            Op::AddBias { x, bias, axis } => {
                let blen = self.value(*bias).numel();
                let mut db = vec![0.0f64; blen];
                let inner = g.len() / blen.max(1);
                for (idx, gv) in g.iter().enumerate() {
                    let j = match axis {
                        BiasAxis::Columns => idx % blen,
                        BiasAxis::Leading => idx / inner,
                    };
                    db[j] += gv.f64();
                }
                vec![(*x, g.to_vec()), (*bias, db.into_iter().map(T::of).collect())]
            }
            Op::Relu { x } => {
                let dx = self
                    .data(*x)
                    .iter()
                    .zip(g)
                    .map(|(&v, &gv)| if v > T::zero() { gv } else { T::zero() })
                    .collect();
                vec![(*x, dx)]
            }
            Op::Softmax { x } => {
                let n = *node.value.shape().last().unwrap();
                vec![(*x, softmax_rows_backward(node.value.data(), g, n))]
            }
            Op::Concat { inputs, axis } => {
                let outer: usize = node.value.shape()[..*axis].iter().product();
                let chunks: Vec<usize> = inputs
                    .iter()
                    .map(|&v| self.shape(v)[*axis..].iter().product())
                    .collect();
                let row: usize = chunks.iter().sum();
                let mut parts: Vec<Vec<T>> = chunks
                    .iter()
                    .map(|&c| Vec::with_capacity(c * outer))
                    .collect();
                for o in 0..outer {
                    let mut off = o * row;
                    for (part, &c) in parts.iter_mut().zip(&chunks) {
                        part.extend_from_slice(&g[off..off + c]);
                        off += c;
                    }
                }
                inputs.iter().copied().zip(parts).collect()
            }
            Op::Reshape { x } => vec![(*x, g.to_vec())],
            Op::Transpose { x } => {
                let s = self.shape(*x);
                vec![(*x, transpose(g, s[1], s[0]))]
            }
            Op::Scale { x, factor } => vec![(*x, g.iter().map(|&v| v * *factor).collect())],
            Op::Sum { x } => vec![(*x, vec![g[0]; self.value(*x).numel()])],
            Op::Mse { pred, target } => {
                let n = self.value(*pred).numel().max(1) as f64;
                let scale = 2.0 * g[0].f64() / n;
                let diff: Vec<f64> = self
                    .data(*pred)
                    .iter()
                    .zip(self.data(*target))
                    .map(|(p, t)| scale * (p.f64() - t.f64()))
                    .collect();
                vec![
                    (*pred, diff.iter().map(|&d| T::of(d)).collect()),
                    (*target, diff.iter().map(|&d| T::of(-d)).collect()),
                ]
            }
            Op::Gather { src, plan } => vec![(*src, plan.backward(g))],
            Op::Upsample2x { x } => {
                let s = self.shape(*x);
                let (c, h, w) = (s[0], s[1], s[2]);
                let mut dx = vec![T::zero(); c * h * w];
                for ch in 0..c {
                    for y in 0..2 * h {
                        for xx in 0..2 * w {
                            let o = &mut dx[(ch * h + y / 2) * w + xx / 2];
                            *o = *o + g[(ch * 2 * h + y) * 2 * w + xx];
                        }
                    }
                }
                vec![(*x, dx)]
            }
        }
    }
}

/// Two-layer perceptron `W2 · relu(W1 · x + b1) + b2`.
///
/// `x` is a single vector `[in]` or a batch of rows `[M × in]`; `w1` is
/// `[hidden × in]` and `w2` is `[out × hidden]`.
pub fn mlp2<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
) -> Result<Var, TensorError> {
    let single = tape.shape(x).len() == 1;
    let rows = if single {
        let n = tape.shape(x)[0];
        tape.reshape(x, &[1, n])?
    } else {
        x
    };
    let (in_w, hid_w) = (tape.shape(rows)[1], tape.shape(w1).to_vec());
    if hid_w.len() != 2 || hid_w[1] != in_w {
        return Err(shape_err(
            "mlp2",
            format!("input width {in_w} against W1 {hid_w:?}"),
        ));
    }
    if tape.shape(w2).len() != 2 || tape.shape(w2)[1] != hid_w[0] {
        return Err(shape_err(
            "mlp2",
            format!("hidden width {} against W2 {:?}", hid_w[0], tape.shape(w2)),
        ));
    }
    let h = tape.matmul_nt(rows, w1)?;
    let h = tape.add_bias(h, b1, BiasAxis::Columns)?;
    let h = tape.relu(h);
    let y = tape.matmul_nt(h, w2)?;
    let y = tape.add_bias(y, b2, BiasAxis::Columns)?;
    if single {
        let n = tape.shape(y)[1];
        tape.reshape(y, &[n])
    } else {
        Ok(y)
    }
}
