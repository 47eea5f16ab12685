use std::fmt;

use super::graph::{digamma_partial, sigmoid, softplus, Graph};
use super::AutogradError;

/// Index of a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Operation kinds that can be recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Tanh,
    Sigmoid,
    Relu,
    Softplus,
    Square,
    /// Partial is digamma of the input.
    Lgamma,
    /// Inputs `[bias, w₀..wₙ₋₁, x₀..xₙ₋₁]`.
    Affine,
    Sum,
}

impl Op {
    fn arity_ok(self, n: usize) -> bool {
        match self {
            Op::Leaf => n == 0,
            Op::Add | Op::Sub | Op::Mul | Op::Div => n == 2,
            Op::Neg
            | Op::Exp
            | Op::Log
            | Op::Tanh
            | Op::Sigmoid
            | Op::Relu
            | Op::Softplus
            | Op::Square
            | Op::Lgamma => n == 1,
            Op::Affine => n % 2 == 1,
            Op::Sum => n >= 1,
        }
    }
}

/// Append-only reverse-mode tape over scalar nodes.
///
/// Nodes are stored in recording order, so inputs always precede outputs and a
/// single reverse sweep computes all adjoints. Local partials are cached at
/// record time; `backward` never re-evaluates an operation.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    values: Vec<f64>,
    // Edges of node i are edge_src/edge_partial[edge_end[i-1]..edge_end[i]].
    edge_end: Vec<u32>,
    edge_src: Vec<u32>,
    edge_partial: Vec<f64>,
    first_non_finite: Option<NodeId>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops every node but keeps the allocations.
    pub fn clear(&mut self) {
        self.ops.clear();
        self.values.clear();
        self.edge_end.clear();
        self.edge_src.clear();
        self.edge_partial.clear();
        self.first_non_finite = None;
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn leaf(&mut self, value: f64) -> NodeId {
        self.push(Op::Leaf, value, &[])
    }

    pub fn value_of(&self, id: NodeId) -> f64 {
        self.values[id.index()]
    }

    pub fn op_of(&self, id: NodeId) -> Op {
        self.ops[id.index()]
    }

    /// Local partial derivatives of `id` with respect to each of its inputs,
    /// in input order.
    pub fn partials(&self, id: NodeId) -> &[f64] {
        let (lo, hi) = self.edge_range(id.index());
        &self.edge_partial[lo..hi]
    }

    /// First node whose value came out non-finite, if any.
    pub fn non_finite(&self) -> Option<NodeId> {
        self.first_non_finite
    }

    /// Records `op` applied to `inputs` and returns the new node.
    pub fn record(&mut self, op: Op, inputs: &[NodeId]) -> Result<NodeId, AutogradError> {
        if !op.arity_ok(inputs.len()) {
            return Err(AutogradError::Arity { op, got: inputs.len() });
        }
        if let Some(bad) = inputs.iter().find(|id| id.index() >= self.len()) {
            return Err(AutogradError::UnknownNode(*bad));
        }
        let id = match op {
            Op::Leaf => unreachable!("arity check rejects inputs for leaves"),
            Op::Add => self.add(inputs[0], inputs[1]),
            Op::Sub => self.sub(inputs[0], inputs[1]),
            Op::Mul => self.mul(inputs[0], inputs[1]),
            Op::Div => self.div(inputs[0], inputs[1]),
            Op::Neg => self.neg(inputs[0]),
            Op::Exp => self.exp(inputs[0]),
            Op::Log => self.ln(inputs[0]),
            Op::Tanh => self.tanh(inputs[0]),
            Op::Sigmoid => self.sigmoid(inputs[0]),
            Op::Relu => self.relu(inputs[0]),
            Op::Softplus => self.softplus(inputs[0]),
            Op::Square => self.square(inputs[0]),
            Op::Lgamma => self.lgamma(inputs[0]),
            Op::Affine => {
                let n = (inputs.len() - 1) / 2;
                self.affine(inputs[0], &inputs[1..=n], &inputs[n + 1..])
            }
            Op::Sum => self.sum(inputs),
        };
        Ok(id)
    }

    /// Reverse sweep from `output`; returns the adjoint of every node.
    pub fn backward(&self, output: NodeId) -> Gradients {
        let mut adj = vec![0.0; output.index() + 1];
        self.backward_into(output, &mut adj);
        Gradients { adjoints: adj, non_finite: self.first_non_finite }
    }

    /// Like [`Tape::backward`] but reuses `adj`, which is resized to cover
    /// every node up to `output`.
    pub fn backward_into(&self, output: NodeId, adj: &mut Vec<f64>) {
        let n = output.index() + 1;
        adj.clear();
        adj.resize(n, 0.0);
        adj[n - 1] = 1.0;
        for i in (0..n).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let (lo, hi) = self.edge_range(i);
            for e in lo..hi {
                adj[self.edge_src[e] as usize] += a * self.edge_partial[e];
            }
        }
    }

    fn edge_range(&self, i: usize) -> (usize, usize) {
        let lo = if i == 0 { 0 } else { self.edge_end[i - 1] as usize };
        (lo, self.edge_end[i] as usize)
    }

    fn push(&mut self, op: Op, value: f64, edges: &[(NodeId, f64)]) -> NodeId {
        let id = NodeId(self.values.len() as u32);
        for &(src, partial) in edges {
            self.edge_src.push(src.0);
            self.edge_partial.push(partial);
        }
        self.edge_end.push(self.edge_src.len() as u32);
        self.ops.push(op);
        self.values.push(value);
        if !value.is_finite() && self.first_non_finite.is_none() {
            self.first_non_finite = Some(id);
        }
        id
    }

    fn unary(&mut self, op: Op, a: NodeId, value: f64, partial: f64) -> NodeId {
        self.push(op, value, &[(a, partial)])
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<f64>,
    non_finite: Option<NodeId>,
}

impl Gradients {
    /// ∂output/∂node. Nodes recorded after the output have zero gradient.
    pub fn wrt(&self, id: NodeId) -> f64 {
        self.adjoints.get(id.index()).copied().unwrap_or(0.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.adjoints
    }

    /// Set when a non-finite value was recorded on the tape; gradients are
    /// then unreliable.
    pub fn non_finite(&self) -> Option<NodeId> {
        self.non_finite
    }
}

impl Graph for Tape {
    type Value = NodeId;

    fn constant(&mut self, v: f64) -> NodeId {
        self.leaf(v)
    }
    fn value(&self, v: NodeId) -> f64 {
        self.value_of(v)
    }
    fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value_of(a) + self.value_of(b);
        self.push(Op::Add, v, &[(a, 1.0), (b, 1.0)])
    }
    fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value_of(a) - self.value_of(b);
        self.push(Op::Sub, v, &[(a, 1.0), (b, -1.0)])
    }
    fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (x, y) = (self.value_of(a), self.value_of(b));
        self.push(Op::Mul, x * y, &[(a, y), (b, x)])
    }
    fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (x, y) = (self.value_of(a), self.value_of(b));
        self.push(Op::Div, x / y, &[(a, 1.0 / y), (b, -x / (y * y))])
    }
    fn neg(&mut self, a: NodeId) -> NodeId {
        let v = -self.value_of(a);
        self.unary(Op::Neg, a, v, -1.0)
    }
    fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value_of(a).exp();
        self.unary(Op::Exp, a, v, v)
    }
    fn ln(&mut self, a: NodeId) -> NodeId {
        let x = self.value_of(a);
        // ln of a nonpositive value yields NaN/−∞ and is flagged by `push`.
        self.unary(Op::Log, a, x.ln(), 1.0 / x)
    }
    fn tanh(&mut self, a: NodeId) -> NodeId {
        let t = self.value_of(a).tanh();
        self.unary(Op::Tanh, a, t, 1.0 - t * t)
    }
    fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let s = sigmoid(self.value_of(a));
        self.unary(Op::Sigmoid, a, s, s * (1.0 - s))
    }
    fn relu(&mut self, a: NodeId) -> NodeId {
        let x = self.value_of(a);
        let (v, d) = if x > 0.0 { (x, 1.0) } else { (0.0, 0.0) };
        self.unary(Op::Relu, a, v, d)
    }
    fn softplus(&mut self, a: NodeId) -> NodeId {
        let x = self.value_of(a);
        self.unary(Op::Softplus, a, softplus(x), sigmoid(x))
    }
    fn square(&mut self, a: NodeId) -> NodeId {
        let x = self.value_of(a);
        self.unary(Op::Square, a, x * x, 2.0 * x)
    }
    fn lgamma(&mut self, a: NodeId) -> NodeId {
        let x = self.value_of(a);
        let v = super::special::lgamma_unchecked(x);
        self.unary(Op::Lgamma, a, v, digamma_partial(x))
    }
    fn affine(&mut self, bias: NodeId, weights: &[NodeId], inputs: &[NodeId]) -> NodeId {
        debug_assert_eq!(weights.len(), inputs.len());
        let id = NodeId(self.values.len() as u32);
        let mut v = self.values[bias.index()];
        self.edge_src.push(bias.0);
        self.edge_partial.push(1.0);
        for (&w, &x) in weights.iter().zip(inputs) {
            let wv = self.values[w.index()];
            let xv = self.values[x.index()];
            v += wv * xv;
            self.edge_src.push(w.0);
            self.edge_partial.push(xv);
            self.edge_src.push(x.0);
            self.edge_partial.push(wv);
        }
        self.edge_end.push(self.edge_src.len() as u32);
        self.ops.push(Op::Affine);
        self.values.push(v);
        if !v.is_finite() && self.first_non_finite.is_none() {
            self.first_non_finite = Some(id);
        }
        id
    }
    fn sum(&mut self, terms: &[NodeId]) -> NodeId {
        let v = terms.iter().map(|&t| self.value_of(t)).sum();
        let edges: Vec<(NodeId, f64)> = terms.iter().map(|&t| (t, 1.0)).collect();
        self.push(Op::Sum, v, &edges)
    }
    fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let v = self.value_of(a) * k;
        self.unary(Op::Mul, a, v, k)
    }
    fn add_const(&mut self, a: NodeId, k: f64) -> NodeId {
        let v = self.value_of(a) + k;
        self.unary(Op::Add, a, v, 1.0)
    }
}
