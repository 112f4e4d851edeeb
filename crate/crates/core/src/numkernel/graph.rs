//! Define-then-run computation graphs over 2-D tensors with reverse-mode
//! differentiation.
//!
//! Every value in a graph is a matrix (`rows x cols`); scalars are `1 x 1`.
//! Leaves are either trainable parameters or plain inputs, identified by
//! name and bound to concrete tensors at evaluation time. Declaring the same
//! leaf name twice returns the existing node, so a recurrent cell unrolled
//! over several steps shares its parameter leaves.

use std::collections::{BTreeMap, HashMap};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub enum Op {
    Leaf { name: String, trainable: bool },
    Const(Tensor),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// Adds a `1 x n` row to every row of an `m x n` matrix.
    AddBias(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    /// Row-wise softmax.
    Softmax(NodeId),
    /// Column-wise concatenation.
    Concat(NodeId, NodeId),
    /// Columns `start..end`.
    Slice { input: NodeId, start: usize, end: usize },
    ReduceSum(NodeId),
    /// `sum((a - b)^2)`
    SquaredError(NodeId, NodeId),
    /// Sum over rows of `-sum_j target_j * log_softmax(logits)_j`.
    SoftmaxCrossEntropy { logits: NodeId, target: NodeId },
    /// Row-wise one-hot at the argmax; the backward pass is the identity.
    StraightThroughOneHot(NodeId),
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        use Op::*;
        match *self {
            Leaf { .. } | Const(_) => vec![],
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) | AddBias(a, b) | Concat(a, b)
            | SquaredError(a, b) => vec![a, b],
            SoftmaxCrossEntropy { logits, target } => vec![logits, target],
            Scale(a, _) | Tanh(a) | Sigmoid(a) | Relu(a) | Softmax(a) | ReduceSum(a)
            | StraightThroughOneHot(a) => vec![a],
            Slice { input, .. } => vec![input],
        }
    }

    pub fn kind(&self) -> &'static str {
        use Op::*;
        match self {
            Leaf { .. } => "leaf",
            Const(_) => "const",
            MatMul(..) => "matmul",
            Add(..) => "add",
            Sub(..) => "sub",
            Mul(..) => "mul",
            AddBias(..) => "add_bias",
            Scale(..) => "scale",
            Tanh(_) => "tanh",
            Sigmoid(_) => "sigmoid",
            Relu(_) => "relu",
            Softmax(_) => "softmax",
            Concat(..) => "concat",
            Slice { .. } => "slice",
            ReduceSum(_) => "reduce_sum",
            SquaredError(..) => "squared_error",
            SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
            StraightThroughOneHot(_) => "straight_through_one_hot",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    shape: [usize; 2],
    requires_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct ComputeGraph {
    nodes: Vec<Node>,
    leaves: HashMap<String, NodeId>,
}

/// Name -> tensor bindings for the leaves of a graph.
#[derive(Default)]
pub struct Bindings<'a> {
    map: HashMap<&'a str, &'a Tensor>,
}

impl<'a> Bindings<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, name: &'a str, value: &'a Tensor) -> &mut Self {
        self.map.insert(name, value);
        self
    }

    pub fn bind_all<I>(&mut self, entries: I) -> &mut Self
    where
        I: IntoIterator<Item = (&'a String, &'a Tensor)>,
    {
        for (k, v) in entries {
            self.map.insert(k.as_str(), v);
        }
        self
    }

    pub fn get(&self, name: &str) -> Option<&'a Tensor> {
        self.map.get(name).copied()
    }
}

/// Values of every node after a forward pass.
#[derive(Clone, Debug)]
pub struct Evaluation {
    values: Vec<Tensor>,
}

impl Evaluation {
    pub fn get(&self, id: NodeId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<Tensor> {
        self.values
    }
}

/// Gradients keyed by trainable leaf name.
pub type Gradients = BTreeMap<String, Tensor>;

fn shape2(t: &Tensor) -> Option<[usize; 2]> {
    match *t.shape() {
        [r, c] => Some([r, c]),
        _ => None,
    }
}

impl ComputeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: NodeId) -> [usize; 2] {
        self.nodes[id.0].shape
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    /// Node ids in insertion (topological) order.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn leaf_id(&self, name: &str) -> Option<NodeId> {
        self.leaves.get(name).copied()
    }

    /// Names of all trainable leaves, sorted.
    pub fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .nodes
            .iter()
            .filter_map(|n| match &n.op {
                Op::Leaf {
                    name,
                    trainable: true,
                } => Some(name.clone()),
                _ => None,
            })
            .collect();
        names.sort();
        names
    }

    fn next_id(&self) -> usize {
        self.nodes.len()
    }

    fn mismatch<T>(&self, detail: String) -> Result<T> {
        Err(Error::Shape {
            node: self.next_id(),
            detail,
        })
    }

    fn push(&mut self, op: Op, shape: [usize; 2]) -> NodeId {
        let requires_grad = match &op {
            Op::Leaf { trainable, .. } => *trainable,
            Op::Const(_) => false,
            other => other.inputs().iter().any(|i| self.nodes[i.0].requires_grad),
        };
        self.nodes.push(Node {
            op,
            shape,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn leaf(&mut self, name: &str, shape: [usize; 2], trainable: bool) -> Result<NodeId> {
        if shape[0] == 0 || shape[1] == 0 {
            return self.mismatch(format!("leaf `{name}` has zero-sized shape {shape:?}"));
        }
        if let Some(&id) = self.leaves.get(name) {
            let node = &self.nodes[id.0];
            let same_kind = matches!(node.op, Op::Leaf { trainable: t, .. } if t == trainable);
            if node.shape != shape || !same_kind {
                return Err(Error::Shape {
                    node: id.0,
                    detail: format!(
                        "leaf `{name}` redeclared as {shape:?} (was {:?})",
                        node.shape
                    ),
                });
            }
            return Ok(id);
        }
        let id = self.push(
            Op::Leaf {
                name: name.to_string(),
                trainable,
            },
            shape,
        );
        self.leaves.insert(name.to_string(), id);
        Ok(id)
    }

    /// A trainable parameter leaf.
    pub fn param(&mut self, name: &str, shape: [usize; 2]) -> Result<NodeId> {
        self.leaf(name, shape, true)
    }

    /// A non-trainable input leaf.
    pub fn input(&mut self, name: &str, shape: [usize; 2]) -> Result<NodeId> {
        self.leaf(name, shape, false)
    }

    pub fn constant(&mut self, value: Tensor) -> Result<NodeId> {
        let Some(shape) = shape2(&value) else {
            return self.mismatch(format!("constant must be 2-D, got {:?}", value.shape()));
        };
        Ok(self.push(Op::Const(value), shape))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa[1] != sb[0] {
            return self.mismatch(format!("matmul {sa:?} x {sb:?}"));
        }
        Ok(self.push(Op::MatMul(a, b), [sa[0], sb[1]]))
    }

    fn same_shape(&mut self, a: NodeId, b: NodeId, what: &str) -> Result<[usize; 2]> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return self.mismatch(format!("{what} {sa:?} vs {sb:?}"));
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let s = self.same_shape(a, b, "add")?;
        Ok(self.push(Op::Add(a, b), s))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let s = self.same_shape(a, b, "sub")?;
        Ok(self.push(Op::Sub(a, b), s))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let s = self.same_shape(a, b, "mul")?;
        Ok(self.push(Op::Mul(a, b), s))
    }

    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sb != [1, sa[1]] {
            return self.mismatch(format!("bias {sb:?} for matrix {sa:?}"));
        }
        Ok(self.push(Op::AddBias(a, bias), sa))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        if !factor.is_finite() {
            return self.mismatch(format!("non-finite scale factor {factor}"));
        }
        let s = self.shape(a);
        Ok(self.push(Op::Scale(a, factor), s))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a);
        self.push(Op::Tanh(a), s)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a);
        self.push(Op::Sigmoid(a), s)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a);
        self.push(Op::Relu(a), s)
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a);
        self.push(Op::Softmax(a), s)
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa[0] != sb[0] {
            return self.mismatch(format!("concat rows {sa:?} vs {sb:?}"));
        }
        Ok(self.push(Op::Concat(a, b), [sa[0], sa[1] + sb[1]]))
    }

    pub fn slice(&mut self, input: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let s = self.shape(input);
        if start >= end || end > s[1] {
            return self.mismatch(format!("slice {start}..{end} of {s:?}"));
        }
        Ok(self.push(Op::Slice { input, start, end }, [s[0], end - start]))
    }

    pub fn reduce_sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::ReduceSum(a), [1, 1])
    }

    pub fn squared_error(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "squared_error")?;
        Ok(self.push(Op::SquaredError(a, b), [1, 1]))
    }

    pub fn softmax_cross_entropy(&mut self, logits: NodeId, target: NodeId) -> Result<NodeId> {
        self.same_shape(logits, target, "softmax_cross_entropy")?;
        Ok(self.push(Op::SoftmaxCrossEntropy { logits, target }, [1, 1]))
    }

    pub fn straight_through_one_hot(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a);
        self.push(Op::StraightThroughOneHot(a), s)
    }

    /// Evaluates every node in order.
    pub fn forward(&self, bindings: &Bindings) -> Result<Evaluation> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for (idx, node) in self.nodes.iter().enumerate() {
            let value = eval_node(idx, node, &values, bindings)?;
            values.push(value);
        }
        Ok(Evaluation { values })
    }

    /// Gradients of the scalar `loss` node with respect to every trainable
    /// leaf. Leaves the loss does not depend on get zero gradients.
    pub fn backward(&self, eval: &Evaluation, loss: NodeId) -> Result<Gradients> {
        let ls = self.shape(loss);
        if ls != [1, 1] {
            return Err(Error::NonScalarLoss {
                node: loss.0,
                shape: ls.to_vec(),
            });
        }
        if eval.values.len() != self.nodes.len() {
            return Err(Error::invalid("evaluation does not belong to this graph"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            if let Op::Leaf { .. } = node.op {
                grads[idx] = Some(upstream);
                continue;
            }
            self.propagate(idx, &upstream, &eval.values, &mut grads);
        }
        let mut out = Gradients::new();
        for node in &self.nodes {
            if let Op::Leaf {
                name,
                trainable: true,
            } = &node.op
            {
                let id = self.leaves[name];
                let g = grads
                    .get_mut(id.0)
                    .and_then(Option::take)
                    .unwrap_or_else(|| Tensor::zeros(&node.shape));
                out.insert(name.clone(), g);
            }
        }
        Ok(out)
    }

    fn propagate(
        &self,
        idx: usize,
        up: &Tensor,
        values: &[Tensor],
        grads: &mut [Option<Tensor>],
    ) {
        let wants = |id: NodeId| self.nodes[id.0].requires_grad;
        let val = |id: NodeId| &values[id.0];
        let out = &values[idx];
        match self.nodes[idx].op {
            Op::Leaf { .. } | Op::Const(_) => {}
            Op::MatMul(a, b) => {
                let [m, k] = self.shape(a);
                let n = self.shape(b)[1];
                if wants(a) {
                    let mut g = Tensor::zeros(&[m, k]);
                    gemm(m, n, k, up.data(), false, val(b).data(), true, g.data_mut());
                    accumulate(grads, a, g);
                }
                if wants(b) {
                    let mut g = Tensor::zeros(&[k, n]);
                    gemm(k, m, n, val(a).data(), true, up.data(), false, g.data_mut());
                    accumulate(grads, b, g);
                }
            }
            Op::Add(a, b) => {
                if wants(a) {
                    accumulate(grads, a, up.clone());
                }
                if wants(b) {
                    accumulate(grads, b, up.clone());
                }
            }
            Op::Sub(a, b) => {
                if wants(a) {
                    accumulate(grads, a, up.clone());
                }
                if wants(b) {
                    accumulate(grads, b, up.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                if wants(a) {
                    accumulate(grads, a, zip_map(up, val(b), |u, y| u * y));
                }
                if wants(b) {
                    accumulate(grads, b, zip_map(up, val(a), |u, x| u * x));
                }
            }
            Op::AddBias(a, bias) => {
                if wants(a) {
                    accumulate(grads, a, up.clone());
                }
                if wants(bias) {
                    let cols = up.cols();
                    let mut g = Tensor::zeros(&[1, cols]);
                    for r in 0..up.rows() {
                        for (acc, v) in g.data_mut().iter_mut().zip(up.row(r)) {
                            *acc += v;
                        }
                    }
                    accumulate(grads, bias, g);
                }
            }
            Op::Scale(a, s) => {
                if wants(a) {
                    accumulate(grads, a, up.map(|v| v * s));
                }
            }
            Op::Tanh(a) => {
                if wants(a) {
                    accumulate(grads, a, zip_map(up, out, |u, y| u * (1.0 - y * y)));
                }
            }
            Op::Sigmoid(a) => {
                if wants(a) {
                    accumulate(grads, a, zip_map(up, out, |u, y| u * y * (1.0 - y)));
                }
            }
            Op::Relu(a) => {
                if wants(a) {
                    accumulate(
                        grads,
                        a,
                        zip_map(up, val(a), |u, x| if x > 0.0 { u } else { 0.0 }),
                    );
                }
            }
            Op::Softmax(a) => {
                if wants(a) {
                    let mut g = Tensor::zeros(self.nodes[idx].shape.as_slice());
                    for r in 0..out.rows() {
                        let (y, u) = (out.row(r), up.row(r));
                        let dot: f64 = y.iter().zip(u).map(|(y, u)| y * u).sum();
                        for ((gv, &yv), &uv) in g.row_mut(r).iter_mut().zip(y).zip(u) {
                            *gv = yv * (uv - dot);
                        }
                    }
                    accumulate(grads, a, g);
                }
            }
            Op::Concat(a, b) => {
                let ca = self.shape(a)[1];
                let rows = up.rows();
                if wants(a) {
                    accumulate(grads, a, take_cols(up, 0, ca, rows));
                }
                if wants(b) {
                    accumulate(grads, b, take_cols(up, ca, up.cols(), rows));
                }
            }
            Op::Slice { input, start, .. } => {
                if wants(input) {
                    let [rows, cols] = self.shape(input);
                    let mut g = Tensor::zeros(&[rows, cols]);
                    let w = up.cols();
                    for r in 0..rows {
                        g.row_mut(r)[start..start + w].copy_from_slice(up.row(r));
                    }
                    accumulate(grads, input, g);
                }
            }
            Op::ReduceSum(a) => {
                if wants(a) {
                    accumulate(grads, a, Tensor::filled(&self.shape(a), up.item()));
                }
            }
            Op::SquaredError(a, b) => {
                let u = up.item();
                let diff = zip_map(val(a), val(b), |x, y| 2.0 * u * (x - y));
                if wants(b) {
                    accumulate(grads, b, diff.map(|v| -v));
                }
                if wants(a) {
                    accumulate(grads, a, diff);
                }
            }
            Op::SoftmaxCrossEntropy { logits, target } => {
                let u = up.item();
                let z = val(logits);
                let t = val(target);
                let shape = self.shape(logits);
                let mut gz = Tensor::zeros(&shape);
                let mut gt = Tensor::zeros(&shape);
                for r in 0..z.rows() {
                    let lsm = log_softmax_row(z.row(r));
                    let tsum: f64 = t.row(r).iter().sum();
                    for j in 0..shape[1] {
                        let p = lsm[j].exp();
                        gz.row_mut(r)[j] = u * (p * tsum - t.row(r)[j]);
                        gt.row_mut(r)[j] = -u * lsm[j];
                    }
                }
                if wants(logits) {
                    accumulate(grads, logits, gz);
                }
                if wants(target) {
                    accumulate(grads, target, gt);
                }
            }
            Op::StraightThroughOneHot(a) => {
                if wants(a) {
                    accumulate(grads, a, up.clone());
                }
            }
        }
    }
}

/// Free-function form of [`ComputeGraph::forward`].
pub fn forward(graph: &ComputeGraph, bindings: &Bindings) -> Result<Evaluation> {
    graph.forward(bindings)
}

/// Free-function form of [`ComputeGraph::backward`].
pub fn backward(graph: &ComputeGraph, eval: &Evaluation, loss: NodeId) -> Result<Gradients> {
    graph.backward(eval, loss)
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

fn take_cols(t: &Tensor, start: usize, end: usize, rows: usize) -> Tensor {
    let mut data = Vec::with_capacity(rows * (end - start));
    for r in 0..rows {
        data.extend_from_slice(&t.row(r)[start..end]);
    }
    Tensor::new(vec![rows, end - start], data).expect("slice shape")
}

pub(crate) fn log_softmax_row(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

pub(crate) fn softmax_row(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// `c = op(a) * op(b)` for row-major storage; `op` optionally transposes.
/// `a` is `m x k` after `op`, `b` is `k x n`, `c` is `m x n` and is overwritten.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn eval_node(idx: usize, node: &Node, values: &[Tensor], bindings: &Bindings) -> Result<Tensor> {
    let v = |id: NodeId| &values[id.0];
    let out = match &node.op {
        Op::Leaf { name, .. } => {
            let bound = bindings.get(name).ok_or_else(|| Error::UnboundLeaf {
                node: idx,
                name: name.clone(),
            })?;
            if shape2(bound) != Some(node.shape) {
                return Err(Error::Shape {
                    node: idx,
                    detail: format!(
                        "leaf `{name}` declared {:?}, bound {:?}",
                        node.shape,
                        bound.shape()
                    ),
                });
            }
            bound.clone()
        }
        Op::Const(t) => t.clone(),
        Op::MatMul(a, b) => {
            let [m, k] = v(*a).shape().try_into().expect("2-D");
            let n = v(*b).cols();
            let mut c = Tensor::zeros(&[m, n]);
            gemm(m, k, n, v(*a).data(), false, v(*b).data(), false, c.data_mut());
            c
        }
        Op::Add(a, b) => zip_map(v(*a), v(*b), |x, y| x + y),
        Op::Sub(a, b) => zip_map(v(*a), v(*b), |x, y| x - y),
        Op::Mul(a, b) => zip_map(v(*a), v(*b), |x, y| x * y),
        Op::AddBias(a, bias) => {
            let mut t = v(*a).clone();
            let b = v(*bias).data();
            for r in 0..t.rows() {
                for (x, y) in t.row_mut(r).iter_mut().zip(b) {
                    *x += y;
                }
            }
            t
        }
        Op::Scale(a, s) => v(*a).map(|x| x * s),
        Op::Tanh(a) => v(*a).map(f64::tanh),
        Op::Sigmoid(a) => v(*a).map(sigmoid),
        Op::Relu(a) => v(*a).map(|x| x.max(0.0)),
        Op::Softmax(a) => {
            let x = v(*a);
            let mut t = x.clone();
            for r in 0..x.rows() {
                t.row_mut(r).copy_from_slice(&softmax_row(x.row(r)));
            }
            t
        }
        Op::Concat(a, b) => {
            let (x, y) = (v(*a), v(*b));
            let mut data = Vec::with_capacity(x.len() + y.len());
            for r in 0..x.rows() {
                data.extend_from_slice(x.row(r));
                data.extend_from_slice(y.row(r));
            }
            Tensor::new(node.shape.to_vec(), data)?
        }
        Op::Slice { input, start, end } => take_cols(v(*input), *start, *end, node.shape[0]),
        Op::ReduceSum(a) => Tensor::scalar(v(*a).sum()),
        Op::SquaredError(a, b) => Tensor::scalar(
            v(*a)
                .data()
                .iter()
                .zip(v(*b).data())
                .map(|(x, y)| (x - y) * (x - y))
                .sum(),
        ),
        Op::SoftmaxCrossEntropy { logits, target } => {
            let (z, t) = (v(*logits), v(*target));
            let mut total = 0.0;
            for r in 0..z.rows() {
                let lsm = log_softmax_row(z.row(r));
                total -= lsm.iter().zip(t.row(r)).map(|(l, t)| l * t).sum::<f64>();
            }
            Tensor::scalar(total)
        }
        Op::StraightThroughOneHot(a) => {
            let x = v(*a);
            let mut t = Tensor::zeros(&node.shape);
            for r in 0..x.rows() {
                let j = argmax(x.row(r));
                t.row_mut(r)[j] = 1.0;
            }
            t
        }
    };
    Ok(out)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
