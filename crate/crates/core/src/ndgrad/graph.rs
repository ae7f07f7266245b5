//! Tape-based reverse-mode autodiff.
//!
//! A [`Graph`] is a write-once tape: every builder method appends a node,
//! computes its value eagerly, and returns a [`NodeId`]. Nodes are therefore
//! already in topological order, and [`Graph::backward`] is a single reverse
//! sweep that visits each node exactly once. All loops run in a fixed order,
//! so forward values and gradients are bit-reproducible.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ndgrad::store::ParamId;
use crate::ndgrad::tensor::Tensor;
use crate::scalar::Scalar;

/// Handle to a node on the tape. Only valid for the graph that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Gradients keyed by parameter id, in id order. Parameters registered on
/// the tape but not on any path to the loss map to exact zeros.
pub type GradientMap<S> = BTreeMap<ParamId, Tensor<S>>;

#[derive(Debug, Clone, Copy)]
struct ConvDims {
    in_ch: usize,
    in_h: usize,
    in_w: usize,
    out_ch: usize,
    k_h: usize,
    k_w: usize,
    out_h: usize,
    out_w: usize,
    padding: usize,
}

#[derive(Debug)]
enum Op<S: Scalar> {
    Leaf,
    Param(ParamId),
    Matmul { a: NodeId, b: NodeId },
    Conv2d { input: NodeId, kernel: NodeId, dims: ConvDims },
    Relu { x: NodeId },
    Sigmoid { x: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { x: NodeId, c: S },
    /// Adds a length-`cols` vector to every row of a `rows x cols` matrix.
    AddRowVector { x: NodeId, bias: NodeId, rows: usize, cols: usize },
    /// Adds entry `i` of a length-`rows` vector to every element of row `i`.
    AddColVector { x: NodeId, bias: NodeId, rows: usize, cols: usize },
    Sum { x: NodeId },
    Mean { x: NodeId },
    /// Column means of a `rows x cols` matrix. Each column is accumulated in
    /// sorted value order, so the result is exactly invariant to row
    /// permutations (mean pooling over set-valued inputs relies on this).
    MeanAxis0 { x: NodeId, rows: usize, cols: usize },
    /// Row means of a `rows x cols` matrix, accumulated in index order.
    MeanAxis1 { x: NodeId, rows: usize, cols: usize },
    Concat { parts: Vec<NodeId> },
    Reshape { x: NodeId },
    /// Mean squared error between two same-shape tensors, reduced to a scalar.
    Mse { a: NodeId, b: NodeId },
    /// Mean of element-wise binary cross-entropy on logits, in the
    /// numerically stable form `max(z,0) - z*y + ln(1 + exp(-|z|))`.
    /// Labels are treated as constants; no gradient flows into them.
    BceWithLogits { logits: NodeId, labels: NodeId },
}

#[derive(Debug)]
struct Node<S: Scalar> {
    op: Op<S>,
    value: Tensor<S>,
}

#[derive(Debug, Default)]
pub struct Graph<S: Scalar> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<S> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op<S>, value: Tensor<S>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Registers a constant input. Leaves receive no gradient entries.
    pub fn leaf(&mut self, value: Tensor<S>) -> NodeId {
        self.push(Op::Leaf, value)
    }

    /// Registers the current value of a parameter. Its gradient appears in
    /// the map returned by [`Graph::backward`].
    pub fn param(&mut self, id: ParamId, value: &Tensor<S>) -> NodeId {
        self.push(Op::Param(id), value.clone())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim(format!("matmul on {sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = da[i * k + p];
                let row = &db[p * n..(p + 1) * n];
                let dst = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    dst[j] += aip * row[j];
                }
            }
        }
        let value = Tensor::from_vec(&[m, n], out)?;
        Ok(self.push(Op::Matmul { a, b }, value))
    }

    /// 2d cross-correlation with stride 1 and symmetric zero padding.
    /// Input is `[C, H, W]`, kernel `[F, C, kh, kw]`, output `[F, H', W']`
    /// with `H' = H + 2p - kh + 1`.
    pub fn conv2d(&mut self, input: NodeId, kernel: NodeId, padding: usize) -> Result<NodeId> {
        let si = self.value(input).shape().to_vec();
        let sk = self.value(kernel).shape().to_vec();
        if si.len() != 3 || sk.len() != 4 {
            return Err(Error::dim(format!("conv2d on input {si:?}, kernel {sk:?}")));
        }
        if si[0] != sk[1] {
            return Err(Error::dim(format!(
                "conv2d channel mismatch: input has {}, kernel expects {}",
                si[0], sk[1]
            )));
        }
        if si.iter().chain(sk.iter()).any(|&d| d == 0) {
            return Err(Error::dim("conv2d with a zero-sized dimension"));
        }
        let dims = ConvDims {
            in_ch: si[0],
            in_h: si[1],
            in_w: si[2],
            out_ch: sk[0],
            k_h: sk[2],
            k_w: sk[3],
            out_h: (si[1] + 2 * padding).checked_sub(sk[2] - 1).unwrap_or(0),
            out_w: (si[2] + 2 * padding).checked_sub(sk[3] - 1).unwrap_or(0),
            padding,
        };
        if dims.out_h == 0 || dims.out_w == 0 || sk[2] > si[1] + 2 * padding || sk[3] > si[2] + 2 * padding
        {
            return Err(Error::dim(format!(
                "conv2d kernel {}x{} larger than padded input {}x{}",
                sk[2],
                sk[3],
                si[1] + 2 * padding,
                si[2] + 2 * padding
            )));
        }
        let value = conv2d_forward(self.value(input).data(), self.value(kernel).data(), &dims)?;
        Ok(self.push(Op::Conv2d { input, kernel, dims }, value))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| if v > S::zero() { v } else { S::zero() });
        self.push(Op::Relu { x }, value)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(sigmoid_stable);
        self.push(Op::Sigmoid { x }, value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_elementwise(a, b, "add", |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_elementwise(a, b, "sub", |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_elementwise(a, b, "mul", |x, y| x * y, Op::Mul { a, b })
    }

    fn zip_elementwise(
        &mut self,
        a: NodeId,
        b: NodeId,
        name: &str,
        f: impl Fn(S, S) -> S,
        op: Op<S>,
    ) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::dim(format!(
                "{name} on {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::from_vec(self.value(a).shape(), data)?;
        Ok(self.push(op, value))
    }

    pub fn scale(&mut self, x: NodeId, c: S) -> NodeId {
        let value = self.value(x).map(|v| v * c);
        self.push(Op::Scale { x, c }, value)
    }

    pub fn add_row_vector(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let sx = self.value(x).shape().to_vec();
        let sb = self.value(bias).shape().to_vec();
        if sx.len() != 2 || sb != [sx[1]] {
            return Err(Error::dim(format!("add_row_vector on {sx:?} with bias {sb:?}")));
        }
        let (rows, cols) = (sx[0], sx[1]);
        let db = self.value(bias).data().to_vec();
        let data = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + db[i % cols])
            .collect();
        let value = Tensor::from_vec(&sx, data)?;
        Ok(self.push(Op::AddRowVector { x, bias, rows, cols }, value))
    }

    pub fn add_col_vector(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let sx = self.value(x).shape().to_vec();
        let sb = self.value(bias).shape().to_vec();
        if sx.len() != 2 || sb != [sx[0]] {
            return Err(Error::dim(format!("add_col_vector on {sx:?} with bias {sb:?}")));
        }
        let (rows, cols) = (sx[0], sx[1]);
        let db = self.value(bias).data().to_vec();
        let data = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + db[i / cols])
            .collect();
        let value = Tensor::from_vec(&sx, data)?;
        Ok(self.push(Op::AddColVector { x, bias, rows, cols }, value))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total = self.value(x).data().iter().copied().sum();
        self.push(Op::Sum { x }, Tensor::scalar(total))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let n = S::of(self.value(x).numel() as f64);
        let total: S = self.value(x).data().iter().copied().sum();
        self.push(Op::Mean { x }, Tensor::scalar(total / n))
    }

    pub fn mean_axis0(&mut self, x: NodeId) -> Result<NodeId> {
        let sx = self.value(x).shape().to_vec();
        if sx.len() != 2 || sx[0] == 0 {
            return Err(Error::dim(format!("mean_axis0 on {sx:?}")));
        }
        let (rows, cols) = (sx[0], sx[1]);
        let d = self.value(x).data();
        let inv = S::one() / S::of(rows as f64);
        let mut out = vec![S::zero(); cols];
        let mut column = vec![S::zero(); rows];
        for (j, slot) in out.iter_mut().enumerate() {
            for i in 0..rows {
                column[i] = d[i * cols + j];
            }
            column.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            let total: S = column.iter().copied().sum();
            *slot = total * inv;
        }
        let value = Tensor::from_vec(&[cols], out)?;
        Ok(self.push(Op::MeanAxis0 { x, rows, cols }, value))
    }

    pub fn mean_axis1(&mut self, x: NodeId) -> Result<NodeId> {
        let sx = self.value(x).shape().to_vec();
        if sx.len() != 2 || sx[1] == 0 {
            return Err(Error::dim(format!("mean_axis1 on {sx:?}")));
        }
        let (rows, cols) = (sx[0], sx[1]);
        let d = self.value(x).data();
        let inv = S::one() / S::of(cols as f64);
        let out = (0..rows)
            .map(|i| {
                let total: S = d[i * cols..(i + 1) * cols].iter().copied().sum();
                total * inv
            })
            .collect();
        let value = Tensor::from_vec(&[rows], out)?;
        Ok(self.push(Op::MeanAxis1 { x, rows, cols }, value))
    }

    /// Concatenation along axis 0. All parts must share trailing dimensions.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::contract("concat of zero tensors"));
        }
        let tail = self.value(parts[0]).shape()[1..].to_vec();
        let mut rows = 0usize;
        let mut data = Vec::new();
        for &p in parts {
            let sp = self.value(p).shape();
            if sp.is_empty() || sp[1..] != tail[..] {
                return Err(Error::dim(format!(
                    "concat part {:?} does not match trailing dims {:?}",
                    sp, tail
                )));
            }
            rows += sp[0];
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = vec![rows];
        shape.extend_from_slice(&tail);
        let value = Tensor::from_vec(&shape, data)?;
        Ok(self.push(Op::Concat { parts: parts.to_vec() }, value))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.value(x).reshaped(shape)?;
        Ok(self.push(Op::Reshape { x }, value))
    }

    pub fn mse(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::dim(format!(
                "mse on {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let n = S::of(self.value(a).numel() as f64);
        let total: S = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum();
        Ok(self.push(Op::Mse { a, b }, Tensor::scalar(total / n)))
    }

    /// Mean binary cross-entropy over logits. Labels must be exactly 0 or 1
    /// and are treated as constants.
    pub fn bce_with_logits(&mut self, logits: NodeId, labels: NodeId) -> Result<NodeId> {
        if self.value(logits).shape() != self.value(labels).shape() {
            return Err(Error::dim(format!(
                "bce_with_logits on {:?} vs labels {:?}",
                self.value(logits).shape(),
                self.value(labels).shape()
            )));
        }
        if self
            .value(labels)
            .data()
            .iter()
            .any(|&y| y != S::zero() && y != S::one())
        {
            return Err(Error::contract("bce_with_logits labels must be 0 or 1"));
        }
        let n = S::of(self.value(logits).numel() as f64);
        let total: S = self
            .value(logits)
            .data()
            .iter()
            .zip(self.value(labels).data())
            .map(|(&z, &y)| {
                let hinge = if z > S::zero() { z } else { S::zero() };
                hinge - z * y + (S::one() + (-z.abs()).exp()).ln()
            })
            .sum();
        Ok(self.push(Op::BceWithLogits { logits, labels }, Tensor::scalar(total / n)))
    }

    /// Reverse sweep from a scalar loss. Returns gradients for every
    /// parameter registered on the tape; parameters with no path to the
    /// loss get exact zeros.
    pub fn backward(&self, loss: NodeId) -> Result<GradientMap<S>> {
        if !self.value(loss).is_scalar() {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![S::one()]);

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf | Op::Param(_) => {
                    // Terminal nodes: stash the gradient back for collection.
                    grads[i] = Some(g);
                }
                Op::Matmul { a, b } => {
                    let (m, k) = {
                        let s = self.value(*a).shape();
                        (s[0], s[1])
                    };
                    let n = self.value(*b).shape()[1];
                    let (da, db) = (self.value(*a).data(), self.value(*b).data());
                    {
                        let ga = ensure(&mut grads, *a, m * k);
                        for i0 in 0..m {
                            for p in 0..k {
                                let mut acc = S::zero();
                                for j in 0..n {
                                    acc += g[i0 * n + j] * db[p * n + j];
                                }
                                ga[i0 * k + p] += acc;
                            }
                        }
                    }
                    let gb = ensure(&mut grads, *b, k * n);
                    for p in 0..k {
                        for j in 0..n {
                            let mut acc = S::zero();
                            for i0 in 0..m {
                                acc += da[i0 * k + p] * g[i0 * n + j];
                            }
                            gb[p * n + j] += acc;
                        }
                    }
                }
                Op::Conv2d { input, kernel, dims } => {
                    let din = self.value(*input).data();
                    let dk = self.value(*kernel).data();
                    conv2d_backward(&g, din, dk, dims, &mut grads, *input, *kernel);
                }
                Op::Relu { x } => {
                    let dx = self.value(*x).data().to_vec();
                    let gx = ensure(&mut grads, *x, dx.len());
                    for (slot, (&gi, &xi)) in gx.iter_mut().zip(g.iter().zip(&dx)) {
                        if xi > S::zero() {
                            *slot += gi;
                        }
                    }
                }
                Op::Sigmoid { x } => {
                    // Output value is cached on the node: sigma' = s * (1 - s).
                    let s = self.nodes[i].value.data().to_vec();
                    let gx = ensure(&mut grads, *x, s.len());
                    for (slot, (&gi, &si)) in gx.iter_mut().zip(g.iter().zip(&s)) {
                        *slot += gi * si * (S::one() - si);
                    }
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads, *a, &g, S::one());
                    accumulate(&mut grads, *b, &g, S::one());
                }
                Op::Sub { a, b } => {
                    accumulate(&mut grads, *a, &g, S::one());
                    accumulate(&mut grads, *b, &g, -S::one());
                }
                Op::Mul { a, b } => {
                    let (da, db) = (
                        self.value(*a).data().to_vec(),
                        self.value(*b).data().to_vec(),
                    );
                    {
                        let ga = ensure(&mut grads, *a, da.len());
                        for (slot, (&gi, &bi)) in ga.iter_mut().zip(g.iter().zip(&db)) {
                            *slot += gi * bi;
                        }
                    }
                    let gb = ensure(&mut grads, *b, db.len());
                    for (slot, (&gi, &ai)) in gb.iter_mut().zip(g.iter().zip(&da)) {
                        *slot += gi * ai;
                    }
                }
                Op::Scale { x, c } => {
                    accumulate(&mut grads, *x, &g, *c);
                }
                Op::AddRowVector { x, bias, rows, cols } => {
                    accumulate(&mut grads, *x, &g, S::one());
                    let gb = ensure(&mut grads, *bias, *cols);
                    for i0 in 0..*rows {
                        for j in 0..*cols {
                            gb[j] += g[i0 * cols + j];
                        }
                    }
                }
                Op::AddColVector { x, bias, rows, cols } => {
                    accumulate(&mut grads, *x, &g, S::one());
                    let gb = ensure(&mut grads, *bias, *rows);
                    for i0 in 0..*rows {
                        for j in 0..*cols {
                            gb[i0] += g[i0 * cols + j];
                        }
                    }
                }
                Op::Sum { x } => {
                    let n = self.value(*x).numel();
                    let gx = ensure(&mut grads, *x, n);
                    for slot in gx.iter_mut() {
                        *slot += g[0];
                    }
                }
                Op::Mean { x } => {
                    let n = self.value(*x).numel();
                    let share = g[0] / S::of(n as f64);
                    let gx = ensure(&mut grads, *x, n);
                    for slot in gx.iter_mut() {
                        *slot += share;
                    }
                }
                Op::MeanAxis0 { x, rows, cols } => {
                    let inv = S::one() / S::of(*rows as f64);
                    let gx = ensure(&mut grads, *x, rows * cols);
                    for i0 in 0..*rows {
                        for j in 0..*cols {
                            gx[i0 * cols + j] += g[j] * inv;
                        }
                    }
                }
                Op::MeanAxis1 { x, rows, cols } => {
                    let inv = S::one() / S::of(*cols as f64);
                    let gx = ensure(&mut grads, *x, rows * cols);
                    for i0 in 0..*rows {
                        for j in 0..*cols {
                            gx[i0 * cols + j] += g[i0] * inv;
                        }
                    }
                }
                Op::Concat { parts } => {
                    let mut offset = 0usize;
                    for &p in parts {
                        let n = self.value(p).numel();
                        let gp = ensure(&mut grads, p, n);
                        for (slot, &gi) in gp.iter_mut().zip(&g[offset..offset + n]) {
                            *slot += gi;
                        }
                        offset += n;
                    }
                }
                Op::Reshape { x } => {
                    accumulate(&mut grads, *x, &g, S::one());
                }
                Op::Mse { a, b } => {
                    let n = self.value(*a).numel();
                    let coeff = g[0] * S::of(2.0) / S::of(n as f64);
                    let diff: Vec<S> = self
                        .value(*a)
                        .data()
                        .iter()
                        .zip(self.value(*b).data())
                        .map(|(&x, &y)| x - y)
                        .collect();
                    {
                        let ga = ensure(&mut grads, *a, n);
                        for (slot, &d) in ga.iter_mut().zip(&diff) {
                            *slot += coeff * d;
                        }
                    }
                    let gb = ensure(&mut grads, *b, n);
                    for (slot, &d) in gb.iter_mut().zip(&diff) {
                        *slot -= coeff * d;
                    }
                }
                Op::BceWithLogits { logits, labels } => {
                    let n = self.value(*logits).numel();
                    let coeff = g[0] / S::of(n as f64);
                    let z = self.value(*logits).data().to_vec();
                    let y = self.value(*labels).data().to_vec();
                    let gl = ensure(&mut grads, *logits, n);
                    for (slot, (&zi, &yi)) in gl.iter_mut().zip(z.iter().zip(&y)) {
                        *slot += coeff * (sigmoid_stable(zi) - yi);
                    }
                }
            }
        }

        let mut map = GradientMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                let grad = match grads[i].take() {
                    Some(g) => Tensor::from_vec(node.value.shape(), g)?,
                    None => Tensor::zeros(node.value.shape()),
                };
                match map.entry(id) {
                    std::collections::btree_map::Entry::Vacant(e) => {
                        e.insert(grad);
                    }
                    std::collections::btree_map::Entry::Occupied(mut e) => {
                        let acc = e.get_mut();
                        for (slot, &gi) in acc.data_mut().iter_mut().zip(grad.data()) {
                            *slot += gi;
                        }
                    }
                }
            }
        }
        Ok(map)
    }
}

fn sigmoid_stable<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

fn ensure<S: Scalar>(grads: &mut [Option<Vec<S>>], id: NodeId, numel: usize) -> &mut Vec<S> {
    grads[id.0].get_or_insert_with(|| vec![S::zero(); numel])
}

fn accumulate<S: Scalar>(grads: &mut [Option<Vec<S>>], id: NodeId, g: &[S], coeff: S) {
    let gx = grads[id.0].get_or_insert_with(|| vec![S::zero(); g.len()]);
    for (slot, &gi) in gx.iter_mut().zip(g) {
        *slot += gi * coeff;
    }
}

fn conv2d_forward<S: Scalar>(input: &[S], kernel: &[S], d: &ConvDims) -> Result<Tensor<S>> {
    let mut out = vec![S::zero(); d.out_ch * d.out_h * d.out_w];
    let p = d.padding as isize;
    for f in 0..d.out_ch {
        for oh in 0..d.out_h {
            for ow in 0..d.out_w {
                let mut acc = S::zero();
                for c in 0..d.in_ch {
                    for i in 0..d.k_h {
                        let ih = oh as isize - p + i as isize;
                        if ih < 0 || ih >= d.in_h as isize {
                            continue;
                        }
                        for j in 0..d.k_w {
                            let iw = ow as isize - p + j as isize;
                            if iw < 0 || iw >= d.in_w as isize {
                                continue;
                            }
                            let iv = input[(c * d.in_h + ih as usize) * d.in_w + iw as usize];
                            let kv = kernel[((f * d.in_ch + c) * d.k_h + i) * d.k_w + j];
                            acc += iv * kv;
                        }
                    }
                }
                out[(f * d.out_h + oh) * d.out_w + ow] = acc;
            }
        }
    }
    Tensor::from_vec(&[d.out_ch, d.out_h, d.out_w], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdcheck;
    use crate::ndgrad::store::ParamStore;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn leaf(g: &mut Graph<f64>, shape: &[usize], data: Vec<f64>) -> NodeId {
        g.leaf(Tensor::from_vec(shape, data).unwrap())
    }

    #[test]
    fn matmul_identity_returns_other_operand() {
        let mut g = Graph::new();
        let eye = leaf(&mut g, &[3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]);
        let b = leaf(&mut g, &[3, 2], (0..6).map(f64::from).collect());
        let y = g.matmul(eye, b).unwrap();
        assert_eq!(g.value(y).data(), g.value(b).data());

        let a = leaf(&mut g, &[2, 2], vec![1., 2., 3., 4.]);
        let eye2 = leaf(&mut g, &[2, 2], vec![1., 0., 0., 1.]);
        let z = g.matmul(a, eye2).unwrap();
        assert_eq!(g.value(z).data(), &[1., 2., 3., 4.]);
    }

    #[test]
    fn matmul_rejects_mismatched_inner_dims() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::<f64>::zeros(&[2, 3]));
        let b = g.leaf(Tensor::<f64>::zeros(&[4, 2]));
        assert!(matches!(g.matmul(a, b), Err(Error::Dim(_))));
    }

    #[test]
    fn conv_with_unit_1x1_kernel_is_identity() {
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = g.leaf(Tensor::randn(&[1, 4, 4], 1.0, &mut rng));
        let k = leaf(&mut g, &[1, 1, 1, 1], vec![1.0]);
        let y = g.conv2d(x, k, 0).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
    }

    #[test]
    fn conv_ones_kernel_counts_padded_neighborhood() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::filled(&[1, 5, 5], 1.0f64));
        let k = g.leaf(Tensor::filled(&[1, 1, 3, 3], 1.0f64));
        let y = g.conv2d(x, k, 1).unwrap();
        let v = g.value(y);
        assert_eq!(v.shape(), &[1, 5, 5]);
        // Interior pixels see all 9 taps, corners only 4.
        assert_eq!(v.data()[2 * 5 + 2], 9.0);
        assert_eq!(v.data()[0], 4.0);
        assert_eq!(v.data()[4], 4.0);
        assert_eq!(v.data()[20], 4.0);
        assert_eq!(v.data()[24], 4.0);
        assert_eq!(v.data()[2], 6.0);
    }

    #[test]
    fn conv_rejects_oversized_kernel() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::<f64>::zeros(&[1, 3, 3]));
        let k = g.leaf(Tensor::<f64>::zeros(&[1, 1, 7, 7]));
        assert!(matches!(g.conv2d(x, k, 1), Err(Error::Dim(_))));
    }

    #[test]
    fn activation_values_match_closed_forms() {
        let mut g = Graph::new();
        let x = leaf(&mut g, &[3], vec![-1.0, 0.0, 2.0]);
        let r = g.relu(x);
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
        let s = g.sigmoid(x);
        assert_eq!(g.value(s).data()[1], 0.5);
        assert!((g.value(s).data()[2] - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn mse_of_identical_tensors_is_zero() {
        let mut g = Graph::new();
        let a = leaf(&mut g, &[4], vec![0.5, -1.0, 2.0, 0.0]);
        let b = leaf(&mut g, &[4], vec![0.5, -1.0, 2.0, 0.0]);
        let l = g.mse(a, b).unwrap();
        assert_eq!(g.value(l).item().unwrap(), 0.0);
    }

    #[test]
    fn bce_at_zero_logit_is_ln_two_for_either_label() {
        for label in [0.0, 1.0] {
            let mut g = Graph::new();
            let z = leaf(&mut g, &[1], vec![0.0]);
            let y = leaf(&mut g, &[1], vec![label]);
            let l = g.bce_with_logits(z, y).unwrap();
            assert!((g.value(l).item().unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn bce_rejects_soft_labels() {
        let mut g = Graph::new();
        let z = leaf(&mut g, &[1], vec![0.0]);
        let y = leaf(&mut g, &[1], vec![0.5]);
        assert!(matches!(g.bce_with_logits(z, y), Err(Error::Contract(_))));
    }

    #[test]
    fn bce_is_stable_at_extreme_logits() {
        let mut g = Graph::new();
        let z = leaf(&mut g, &[2], vec![500.0, -500.0]);
        let y = leaf(&mut g, &[2], vec![1.0, 0.0]);
        let l = g.bce_with_logits(z, y).unwrap();
        let v = g.value(l).item().unwrap();
        assert!(v.is_finite());
        assert!(v < 1e-10);
    }

    #[test]
    fn backward_of_sum_is_all_ones() {
        let mut store = ParamStore::new();
        let id = store.add("p", Tensor::from_vec(&[2, 2], vec![1., 2., 3., 4.]).unwrap());
        let mut g = Graph::new();
        let p = g.param(id, store.get(id));
        let loss = g.sum(p);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads[&id].data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::<f64>::zeros(&[3]));
        let y = g.relu(x);
        assert!(matches!(g.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn linear_regression_gradient_matches_analytic_form() {
        // loss = mse(W x, y); dL/dW = 2 (W x - y) x^T / n.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::new();
        let w_id = store.add("W", Tensor::randn(&[3, 2], 1.0, &mut rng));
        let x = Tensor::randn(&[2, 1], 1.0, &mut rng);
        let y = Tensor::randn(&[3, 1], 1.0, &mut rng);

        let mut g = Graph::new();
        let w = g.param(w_id, store.get(w_id));
        let xn = g.leaf(x.clone());
        let yn = g.leaf(y.clone());
        let pred = g.matmul(w, xn).unwrap();
        let loss = g.mse(pred, yn).unwrap();
        let grads = g.backward(loss).unwrap();

        let wd = store.get(w_id).data();
        for i in 0..3 {
            let resid = wd[i * 2] * x.data()[0] + wd[i * 2 + 1] * x.data()[1] - y.data()[i];
            for j in 0..2 {
                let analytic = 2.0 * resid * x.data()[j] / 3.0;
                let got = grads[&w_id].data()[i * 2 + j];
                assert!(
                    fdcheck::relative_error(got, analytic) < 1e-8,
                    "grad[{i},{j}] = {got}, analytic {analytic}"
                );
            }
        }
    }

    #[test]
    fn off_path_parameter_gets_exact_zero_gradient() {
        let mut store = ParamStore::new();
        let used = store.add("used", Tensor::from_vec(&[1], vec![2.0]).unwrap());
        let unused = store.add("unused", Tensor::from_vec(&[2], vec![1.0, 1.0]).unwrap());
        let mut g = Graph::new();
        let p = g.param(used, store.get(used));
        let _ = g.param(unused, store.get(unused));
        let loss = g.sum(p);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads[&unused].data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_is_bitwise_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::randn(&[4, 6], 0.5, &mut rng));
        let x = Tensor::randn(&[3, 4], 1.0, &mut rng);

        let run = |store: &ParamStore<f64>| {
            let mut g = Graph::new();
            let wn = g.param(w, store.get(w));
            let xn = g.leaf(x.clone());
            let h = g.matmul(xn, wn).unwrap();
            let r = g.relu(h);
            let s = g.sigmoid(r);
            let loss = g.mean(s);
            g.backward(loss).unwrap()
        };
        let a = run(&store);
        let b = run(&store);
        assert_eq!(a[&w].data(), b[&w].data());
    }

    #[test]
    fn mean_axis0_is_exactly_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows = 7;
        let cols = 3;
        let base: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut permuted = vec![0.0; rows * cols];
        let order = [4, 0, 6, 2, 5, 1, 3];
        for (dst, &src) in order.iter().enumerate() {
            permuted[dst * cols..(dst + 1) * cols]
                .copy_from_slice(&base[src * cols..(src + 1) * cols]);
        }
        let mut g = Graph::new();
        let a = leaf(&mut g, &[rows, cols], base);
        let b = leaf(&mut g, &[rows, cols], permuted);
        let ma = g.mean_axis0(a).unwrap();
        let mb = g.mean_axis0(b).unwrap();
        assert_eq!(g.value(ma).data(), g.value(mb).data());
    }

    #[test]
    fn concat_splits_gradient_back_to_parts() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap());
        let b = store.add("b", Tensor::from_vec(&[3], vec![3.0, 4.0, 5.0]).unwrap());
        let mut g = Graph::new();
        let an = g.param(a, store.get(a));
        let bn = g.param(b, store.get(b));
        let c = g.concat(&[an, bn]).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let s = g.sum(c);
        let scaled = g.scale(s, 3.0);
        let grads = g.backward(scaled).unwrap();
        assert_eq!(grads[&a].data(), &[3.0, 3.0]);
        assert_eq!(grads[&b].data(), &[3.0, 3.0, 3.0]);
    }

    #[test]
    fn every_primitive_passes_finite_difference_checks() {
        // One composite graph per seed exercising each differentiable
        // primitive at least once, checked coordinate-wise against central
        // differences.
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut store = ParamStore::new();
            let w = store.add("w", Tensor::randn(&[4, 4], 0.6, &mut rng));
            let bias_r = store.add("bias_r", Tensor::randn(&[4], 0.3, &mut rng));
            let bias_c = store.add("bias_c", Tensor::randn(&[3], 0.3, &mut rng));
            let kern = store.add("kern", Tensor::randn(&[2, 1, 3, 3], 0.5, &mut rng));
            let x = Tensor::randn(&[3, 4], 0.8, &mut rng);
            let img = Tensor::randn(&[1, 5, 5], 0.8, &mut rng);
            let target = Tensor::randn(&[3, 4], 0.8, &mut rng);
            let labels = Tensor::from_vec(&[3], vec![1.0, 0.0, 1.0]).unwrap();

            let build = |g: &mut Graph<f64>, store: &ParamStore<f64>| -> NodeId {
                let wn = g.param(w, store.get(w));
                let brn = g.param(bias_r, store.get(bias_r));
                let bcn = g.param(bias_c, store.get(bias_c));
                let kn = g.param(kern, store.get(kern));
                let xn = g.leaf(x.clone());
                let imgn = g.leaf(img.clone());
                let tn = g.leaf(target.clone());
                let yn = g.leaf(labels.clone());

                let h = g.matmul(xn, wn).unwrap();
                let h = g.add_row_vector(h, brn).unwrap();
                let h = g.add_col_vector(h, bcn).unwrap();
                let r = g.relu(h);
                let sg = g.sigmoid(h);
                let prod = g.mul(r, sg).unwrap();
                let diff = g.sub(prod, tn).unwrap();
                let both = g.add(diff, prod).unwrap();
                let mse_term = g.mse(both, tn).unwrap();

                let conv = g.conv2d(imgn, kn, 1).unwrap();
                let flat = g.reshape(conv, &[2, 25]).unwrap();
                let row_means = g.mean_axis1(flat).unwrap();
                let m2 = g.reshape(flat, &[10, 5]).unwrap();
                let col_means = g.mean_axis0(m2).unwrap();
                let pooled = g.concat(&[row_means, col_means]).unwrap();
                let pooled_sum = g.sum(pooled);
                let pooled_term = g.scale(pooled_sum, 0.1);

                let logits = g.mean_axis1(both).unwrap();
                let bce_term = g.bce_with_logits(logits, yn).unwrap();

                let t1 = g.add(mse_term, pooled_term).unwrap();
                let total = g.add(t1, bce_term).unwrap();
                g.mean(total)
            };

            let forward = |store: &ParamStore<f64>| -> f64 {
                let mut g = Graph::new();
                let loss = build(&mut g, store);
                g.value(loss).item().unwrap()
            };

            let grads = {
                let mut g = Graph::new();
                let loss = build(&mut g, &store);
                g.backward(loss).unwrap()
            };

            let worst = fdcheck::max_gradient_error(
                &mut store,
                &grads,
                6,
                fdcheck::DEFAULT_STEP,
                &mut rng,
                forward,
            );
            assert!(worst < 1e-4, "seed {seed}: worst rel err {worst}");
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv2d_backward<S: Scalar>(
    g: &[S],
    input: &[S],
    kernel: &[S],
    d: &ConvDims,
    grads: &mut [Option<Vec<S>>],
    input_id: NodeId,
    kernel_id: NodeId,
) {
    let p = d.padding as isize;
    {
        let gi = ensure(grads, input_id, d.in_ch * d.in_h * d.in_w);
        for f in 0..d.out_ch {
            for oh in 0..d.out_h {
                for ow in 0..d.out_w {
                    let go = g[(f * d.out_h + oh) * d.out_w + ow];
                    for c in 0..d.in_ch {
                        for i in 0..d.k_h {
                            let ih = oh as isize - p + i as isize;
                            if ih < 0 || ih >= d.in_h as isize {
                                continue;
                            }
                            for j in 0..d.k_w {
                                let iw = ow as isize - p + j as isize;
                                if iw < 0 || iw >= d.in_w as isize {
                                    continue;
                                }
                                let kv = kernel[((f * d.in_ch + c) * d.k_h + i) * d.k_w + j];
                                gi[(c * d.in_h + ih as usize) * d.in_w + iw as usize] += go * kv;
                            }
                        }
                    }
                }
            }
        }
    }
    let gk = ensure(grads, kernel_id, d.out_ch * d.in_ch * d.k_h * d.k_w);
    for f in 0..d.out_ch {
        for oh in 0..d.out_h {
            for ow in 0..d.out_w {
                let go = g[(f * d.out_h + oh) * d.out_w + ow];
                for c in 0..d.in_ch {
                    for i in 0..d.k_h {
                        let ih = oh as isize - p + i as isize;
                        if ih < 0 || ih >= d.in_h as isize {
                            continue;
                        }
                        for j in 0..d.k_w {
                            let iw = ow as isize - p + j as isize;
                            if iw < 0 || iw >= d.in_w as isize {
                                continue;
                            }
                            let iv = input[(c * d.in_h + ih as usize) * d.in_w + iw as usize];
                            gk[((f * d.in_ch + c) * d.k_h + i) * d.k_w + j] += go * iv;
                        }
                    }
                }
            }
        }
    }
}
