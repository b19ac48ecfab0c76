//! Define-by-run graph with manually written backward rules per op.
//!
//! Nodes are appended in topological order, so the backward sweep is a
//! single reverse pass. The graph is rebuilt for every forward evaluation.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{fe, kernels, Element, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

/// Backward rule for an externally computed forward value.
pub trait CustomOp<T: Element>: Send + Sync {
    /// Given the output gradient and the input values, return one gradient
    /// tensor per input (same shapes).
    fn backward(&self, grad_out: &Tensor<T>, inputs: &[&Tensor<T>]) -> Vec<Tensor<T>>;
    fn name(&self) -> &'static str;
}

enum Op<T: Element> {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId),
    ScaleBy { x: NodeId, s: NodeId },
    Recip(NodeId),
    Matmul(NodeId, NodeId),
    AddRowBias { x: NodeId, b: NodeId },
    Conv2d { x: NodeId, k: NodeId, bias: Option<NodeId>, stride: usize, pad: usize },
    MaxPool2d { x: NodeId, argmax: Arc<Vec<Option<usize>>> },
    Softmax { x: NodeId, axis: usize },
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId, eps: f64 },
    Sigmoid(NodeId),
    Relu(NodeId),
    Gelu(NodeId),
    Remap { x: NodeId, map: Arc<Vec<Option<usize>>> },
    Concat { xs: Vec<NodeId>, axis: usize },
    Sum(NodeId),
    SpatialMean(NodeId),
    MaskFill { x: NodeId, mask: Arc<Vec<bool>> },
    BceWithLogits { logits: NodeId, targets: Tensor<T>, weights: Tensor<T> },
    Custom { inputs: Vec<NodeId>, rule: Arc<dyn CustomOp<T>> },
}

struct Node<T: Element> {
    value: Tensor<T>,
    op: Op<T>,
}

pub struct Graph<T: Element> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new() }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Register an input (leaf) tensor.
    pub fn leaf(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` root w.r.t. the given node.
    /// Zero if the node does not influence the root.
    pub fn grad(&self, id: NodeId) -> Tensor<T> {
        match &self.grads.get(id.0) {
            Some(Some(g)) => g.clone(),
            _ => Tensor::zeros(self.nodes[id.0].value.shape()),
        }
    }

    // -- forward ops --------------------------------------------------------

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).mul(self.value(b))?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = self.value(x).scale(c);
        self.push(v, Op::Scale(x, c))
    }

    /// Add a constant tensor (no gradient flows into the constant).
    pub fn add_const(&mut self, x: NodeId, c: Tensor<T>) -> Result<NodeId> {
        let v = self.value(x).add(&c)?;
        Ok(self.push(v, Op::AddConst(x)))
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let t = Tensor::full(self.value(x).shape(), fe(c));
        self.add_const(x, t)
    }

    /// Multiply every element of `x` by the scalar node `s` (shape `[1]`).
    pub fn scale_by(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        if self.value(s).len() != 1 {
            return Err(Error::Shape("scale_by expects a scalar node".into()));
        }
        let sv = self.value(s).data()[0];
        let v = self.value(x).map(|e| e * sv);
        Ok(self.push(v, Op::ScaleBy { x, s }))
    }

    pub fn recip(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|e| e.recip());
        self.push(v, Op::Recip(x))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = kernels::matmul(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::Matmul(a, b)))
    }

    /// `x[m,n] + b[n]` broadcast over rows.
    pub fn add_row_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let xs = self.value(x).shape().to_vec();
        let n = *xs.last().unwrap();
        if self.value(b).shape() != [n] {
            return Err(Error::Shape(format!(
                "bias shape {:?} does not match row width {n}",
                self.value(b).shape()
            )));
        }
        let bd = self.value(b).data().to_vec();
        let mut v = self.value(x).clone();
        for (i, e) in v.data_mut().iter_mut().enumerate() {
            *e = *e + bd[i % n];
        }
        Ok(self.push(v, Op::AddRowBias { x, b }))
    }

    pub fn conv2d(
        &mut self,
        x: NodeId,
        k: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId> {
        let v = kernels::conv2d(
            self.value(x),
            self.value(k),
            bias.map(|b| self.value(b)),
            stride,
            pad,
        )?;
        Ok(self.push(v, Op::Conv2d { x, k, bias, stride, pad }))
    }

    pub fn maxpool2d(&mut self, x: NodeId, kernel: usize, stride: usize, pad: usize) -> Result<NodeId> {
        let p = kernels::maxpool2d(self.value(x), kernel, stride, pad)?;
        Ok(self.push(p.out, Op::MaxPool2d { x, argmax: Arc::new(p.argmax) }))
    }

    pub fn softmax(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let v = kernels::softmax(self.value(x), axis)?;
        Ok(self.push(v, Op::Softmax { x, axis }))
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: f64) -> Result<NodeId> {
        let v = kernels::layer_norm(self.value(x), self.value(gamma), self.value(beta), eps)?;
        Ok(self.push(v, Op::LayerNorm { x, gamma, beta, eps }))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(kernels::sigmoid);
        self.push(v, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|e| e.max(T::zero()));
        self.push(v, Op::Relu(x))
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(kernels::gelu);
        self.push(v, Op::Gelu(x))
    }

    pub fn remap(&mut self, x: NodeId, map: Arc<Vec<Option<usize>>>, out_shape: &[usize]) -> Result<NodeId> {
        let v = kernels::remap(self.value(x), &map, out_shape)?;
        Ok(self.push(v, Op::Remap { x, map }))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let n: usize = shape.iter().product();
        if n != self.value(x).len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} to {shape:?}",
                self.value(x).shape()
            )));
        }
        let map = Arc::new((0..n).map(Some).collect::<Vec<_>>());
        self.remap(x, map, shape)
    }

    pub fn concat(&mut self, xs: &[NodeId], axis: usize) -> Result<NodeId> {
        let tensors: Vec<&Tensor<T>> = xs.iter().map(|&id| self.value(id)).collect();
        let v = kernels::concat(&tensors, axis)?;
        Ok(self.push(v, Op::Concat { xs: xs.to_vec(), axis }))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(x).sum());
        self.push(v, Op::Sum(x))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).len();
        let s = self.sum(x);
        self.scale(s, 1.0 / n as f64)
    }

    pub fn spatial_mean(&mut self, x: NodeId) -> Result<NodeId> {
        let v = kernels::spatial_mean(self.value(x))?;
        Ok(self.push(v, Op::SpatialMean(x)))
    }

    /// Replace masked positions with `-inf` (used before attention softmax).
    pub fn mask_fill_neg_inf(&mut self, x: NodeId, mask: Arc<Vec<bool>>) -> Result<NodeId> {
        if mask.len() != self.value(x).len() {
            return Err(Error::Shape("mask length mismatch".into()));
        }
        let mut v = self.value(x).clone();
        for (e, &m) in v.data_mut().iter_mut().zip(mask.iter()) {
            if m {
                *e = T::neg_infinity();
            }
        }
        Ok(self.push(v, Op::MaskFill { x, mask }))
    }

    /// Weighted-mean binary cross-entropy on logits; returns a scalar node.
    pub fn bce_with_logits(&mut self, logits: NodeId, targets: Tensor<T>, weights: Tensor<T>) -> Result<NodeId> {
        let v = kernels::bce_with_logits(self.value(logits), &targets, &weights)?;
        Ok(self.push(Tensor::scalar(v), Op::BceWithLogits { logits, targets, weights }))
    }

    /// Register an externally computed value with a custom backward rule.
    pub fn custom(&mut self, inputs: Vec<NodeId>, value: Tensor<T>, rule: Arc<dyn CustomOp<T>>) -> NodeId {
        self.push(value, Op::Custom { inputs, rule })
    }

    // -- backward -----------------------------------------------------------

    fn accumulate(&mut self, id: NodeId, g: Tensor<T>) {
        match &mut self.grads[id.0] {
            Some(acc) => *acc = acc.add(&g).expect("gradient shape mismatch"),
            slot @ None => *slot = Some(g),
        }
    }

    /// Reverse sweep from a scalar root; gradients are then available via
    /// [`Graph::grad`].
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        if self.value(root).len() != 1 {
            return Err(Error::Shape("backward root must be scalar".into()));
        }
        if !self.value(root).is_finite() {
            return Err(Error::NonFinite("backward on non-finite root value".into()));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[root.0] = Some(Tensor::full(&[1], T::one()));
        for i in (0..=root.0).rev() {
            let Some(g) = self.grads[i].clone() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    self.accumulate(a, g.clone());
                    self.accumulate(b, g.clone());
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    self.accumulate(a, g.clone());
                    self.accumulate(b, g.scale(-1.0));
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let ga = g.mul(self.value(b)).unwrap();
                    let gb = g.mul(self.value(a)).unwrap();
                    self.accumulate(a, ga);
                    self.accumulate(b, gb);
                }
                Op::Scale(x, c) => {
                    let (x, c) = (*x, *c);
                    self.accumulate(x, g.scale(c));
                }
                Op::AddConst(x) => {
                    let x = *x;
                    self.accumulate(x, g.clone());
                }
                Op::ScaleBy { x, s } => {
                    let (x, s) = (*x, *s);
                    let sv = self.value(s).data()[0];
                    let gx = g.map(|e| e * sv);
                    let gs = Tensor::scalar(g.mul(self.value(x)).unwrap().sum());
                    self.accumulate(x, gx);
                    self.accumulate(s, gs);
                }
                Op::Recip(x) => {
                    let x = *x;
                    let gx = g
                        .zip_map(self.value(x), |gi, xi| -gi / (xi * xi))
                        .unwrap();
                    self.accumulate(x, gx);
                }
                Op::Matmul(a, b) => {
                    let (a, b) = (*a, *b);
                    let (da, db) = kernels::matmul_backward(self.value(a), self.value(b), &g);
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::AddRowBias { x, b } => {
                    let (x, b) = (*x, *b);
                    let n = *self.value(b).shape().last().unwrap();
                    let mut db = Tensor::zeros(&[n]);
                    for (i, &gv) in g.data().iter().enumerate() {
                        let j = i % n;
                        db.data_mut()[j] = db.data_mut()[j] + gv;
                    }
                    self.accumulate(x, g.clone());
                    self.accumulate(b, db);
                }
                Op::Conv2d { x, k, bias, stride, pad } => {
                    let (x, k, bias, stride, pad) = (*x, *k, *bias, *stride, *pad);
                    let (dx, dk, db) =
                        kernels::conv2d_backward(self.value(x), self.value(k), &g, stride, pad);
                    self.accumulate(x, dx);
                    self.accumulate(k, dk);
                    if let Some(b) = bias {
                        self.accumulate(b, db);
                    }
                }
                Op::MaxPool2d { x, argmax } => {
                    let (x, argmax) = (*x, argmax.clone());
                    let dx = kernels::maxpool2d_backward(self.value(x).shape(), &argmax, &g);
                    self.accumulate(x, dx);
                }
                Op::Softmax { x, axis } => {
                    let (x, axis) = (*x, *axis);
                    let dx = kernels::softmax_backward(&self.nodes[i].value, &g, axis);
                    self.accumulate(x, dx);
                }
                Op::LayerNorm { x, gamma, beta, eps } => {
                    let (x, gamma, beta, eps) = (*x, *gamma, *beta, *eps);
                    let (dx, dg, db) =
                        kernels::layer_norm_backward(self.value(x), self.value(gamma), eps, &g);
                    self.accumulate(x, dx);
                    self.accumulate(gamma, dg);
                    self.accumulate(beta, db);
                }
                Op::Sigmoid(x) => {
                    let x = *x;
                    let y = &self.nodes[i].value;
                    let dx = g.zip_map(y, |gi, yi| gi * yi * (T::one() - yi)).unwrap();
                    self.accumulate(x, dx);
                }
                Op::Relu(x) => {
                    let x = *x;
                    let dx = g
                        .zip_map(self.value(x), |gi, xi| gi * kernels::relu_grad(xi))
                        .unwrap();
                    self.accumulate(x, dx);
                }
                Op::Gelu(x) => {
                    let x = *x;
                    let dx = g
                        .zip_map(self.value(x), |gi, xi| gi * kernels::gelu_grad(xi))
                        .unwrap();
                    self.accumulate(x, dx);
                }
                Op::Remap { x, map } => {
                    let (x, map) = (*x, map.clone());
                    let dx = kernels::remap_backward(&g, &map, self.value(x).shape());
                    self.accumulate(x, dx);
                }
                Op::Concat { xs, axis } => {
                    let (xs, axis) = (xs.clone(), *axis);
                    let shapes: Vec<Vec<usize>> =
                        xs.iter().map(|&id| self.value(id).shape().to_vec()).collect();
                    let parts = kernels::concat_backward(&g, &shapes, axis);
                    for (id, part) in xs.into_iter().zip(parts) {
                        self.accumulate(id, part);
                    }
                }
                Op::Sum(x) => {
                    let x = *x;
                    let gv = g.data()[0];
                    let dx = Tensor::full(self.value(x).shape(), gv);
                    self.accumulate(x, dx);
                }
                Op::SpatialMean(x) => {
                    let x = *x;
                    let dx = kernels::spatial_mean_backward(self.value(x).shape(), &g);
                    self.accumulate(x, dx);
                }
                Op::MaskFill { x, mask } => {
                    let (x, mask) = (*x, mask.clone());
                    let mut dx = g.clone();
                    for (e, &m) in dx.data_mut().iter_mut().zip(mask.iter()) {
                        if m {
                            *e = T::zero();
                        }
                    }
                    self.accumulate(x, dx);
                }
                Op::BceWithLogits { logits, targets, weights } => {
                    let logits = *logits;
                    let (targets, weights) = (targets.clone(), weights.clone());
                    let dz = kernels::bce_with_logits_backward(
                        self.value(logits),
                        &targets,
                        &weights,
                        g.data()[0],
                    );
                    self.accumulate(logits, dz);
                }
                Op::Custom { inputs, rule } => {
                    let (inputs, rule) = (inputs.clone(), rule.clone());
                    let values: Vec<&Tensor<T>> =
                        inputs.iter().map(|&id| &self.nodes[id.0].value).collect();
                    let grads = rule.backward(&g, &values);
                    assert_eq!(grads.len(), inputs.len(), "{} backward arity", rule.name());
                    for (id, gr) in inputs.into_iter().zip(grads) {
                        self.accumulate(id, gr);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        let sq = g.mul(x, x).unwrap();
        let y = g.sum(sq);
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).data(), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_backward_matches_manual() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let at = Tensor::<f64>::uniform(&[2, 3], -1.0, 1.0, &mut rng);
        let bt = Tensor::<f64>::uniform(&[3, 2], -1.0, 1.0, &mut rng);
        let mut g = Graph::new();
        let a = g.leaf(at.clone());
        let b = g.leaf(bt.clone());
        let c = g.matmul(a, b).unwrap();
        let y = g.sum(c);
        g.backward(y).unwrap();
        // d(sum(ab))/da = ones @ b^T
        let ones = Tensor::full(&[2, 2], 1.0);
        let want_da = kernels::matmul(&ones, &kernels::transpose2(&bt)).unwrap();
        let want_db = kernels::matmul(&kernels::transpose2(&at), &ones).unwrap();
        for (got, want) in g.grad(a).data().iter().zip(want_da.data()) {
            assert!((got - want).abs() < 1e-12);
        }
        for (got, want) in g.grad(b).data().iter().zip(want_db.data()) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![1, 1, 2, 2], vec![1.0, 4.0, 3.0, 2.0]).unwrap());
        let p = g.maxpool2d(x, 2, 1, 0).unwrap();
        let y = g.sum(p);
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).data(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::<f64>::zeros(&[3]));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn unreached_leaf_gets_zero_grad() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(vec![1.0]));
        let z = g.leaf(Tensor::from_vec(vec![5.0]));
        let y = g.sum(x);
        g.backward(y).unwrap();
        assert_eq!(g.grad(z).data(), &[0.0]);
    }
}
