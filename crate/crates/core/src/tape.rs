//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records one forward pass as a list of primitive operations;
//! [`Tape::backward`] replays it in exact reverse, accumulating gradients
//! for every recorded node reachable from a scalar loss. Parameters live
//! outside tapes and are re-registered as leaves on every pass; a tape can
//! be differentiated once and rejects a second backward call.
//!
//! Message-passing aggregation is a first-class primitive
//! ([`Tape::neighbor_sum`]) so the engine can count messages for the
//! complexity accounting, and the straight-through estimator is a dedicated
//! primitive rather than graph surgery: it forwards a hard one-hot while
//! backpropagating as if the output were the soft distribution it was
//! sampled from.

use crate::graph::Graph;
use crate::tensor::{stable_sum, Tensor};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TapeError {
    #[error("{op}: shape mismatch between {a:?} and {b:?}")]
    ShapeMismatch {
        op: &'static str,
        a: (usize, usize),
        b: (usize, usize),
    },
    #[error("backward requires a scalar loss, got {shape:?}")]
    NonScalarLoss { shape: (usize, usize) },
    #[error("this tape has already been differentiated")]
    TapeSpent,
    #[error("operation requires at least one operand")]
    EmptyOperands,
    #[error("index {index} out of range for {len} elements")]
    IndexOutOfRange { index: usize, len: usize },
}

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Handle to a graph whose adjacency is registered on the tape.
#[derive(Debug, Clone, Copy)]
pub struct GraphHandle(usize);

enum Op {
    Leaf,
    Add(usize, usize),
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MinPair(usize, usize),
    Scale(usize, f64),
    Neg(usize),
    Relu(usize),
    Log(usize),
    Matmul(usize, usize),
    NeighborSum(usize, usize),
    ConcatCols(usize, usize),
    SumAxis0(usize),
    MeanAxis0(usize),
    SumAxis1(usize),
    MeanAxis1(usize),
    SumAll(usize),
    SumStack(Vec<usize>),
    Softmax(usize),
    LogSoftmax(usize),
    StraightThrough { soft: usize },
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Recorder for one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    graphs: Vec<Graph>,
    messages: u64,
    spent: bool,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct GradStore {
    grads: Vec<Option<Tensor>>,
}

impl GradStore {
    /// Gradient of the loss with respect to the given variable, if any path
    /// reached it.
    pub fn grad(&self, var: Var) -> Option<&Tensor> {
        self.grads[var.0].as_ref()
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads[var.0].take()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Total messages (edge traversals) performed by [`Tape::neighbor_sum`]
    /// forwards recorded so far.
    pub fn messages(&self) -> u64 {
        self.messages
    }

    /// Register a graph once per tape; ops reference it by handle.
    pub fn register_graph(&mut self, graph: &Graph) -> GraphHandle {
        self.graphs.push(graph.clone());
        GraphHandle(self.graphs.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Differentiable leaf (a parameter bound for this pass).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Non-differentiable input (features, noise, labels, masks).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, false)
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_unary(&mut self, op: Op, parent: Var, value: Tensor) -> Var {
        let requires = self.nodes[parent.0].requires_grad;
        self.push(op, value, requires)
    }

    fn push_binary(&mut self, op: Op, a: Var, b: Var, value: Tensor) -> Var {
        let requires = self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad;
        self.push(op, value, requires)
    }

    fn check_same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TapeError> {
        let sa = self.value(a).shape();
        let sb = self.value(b).shape();
        if sa != sb {
            return Err(TapeError::ShapeMismatch { op, a: sa, b: sb });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        self.check_same_shape("add", a, b)?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push_binary(Op::Add(a.0, b.0), a, b, value))
    }

    /// `a` is `n x c`, `row` is `1 x c`; adds the row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, TapeError> {
        let (rows, cols) = self.value(a).shape();
        let rs = self.value(row).shape();
        if rs != (1, cols) {
            return Err(TapeError::ShapeMismatch {
                op: "add_row",
                a: (rows, cols),
                b: rs,
            });
        }
        let row_data = self.value(row).data().to_vec();
        let mut value = self.value(a).clone();
        for r in 0..rows {
            for c in 0..cols {
                let v = value.get(r, c) + row_data[c];
                value.set(r, c, v);
            }
        }
        Ok(self.push_binary(Op::AddRow(a.0, row.0), a, row, value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        self.check_same_shape("sub", a, b)?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push_binary(Op::Sub(a.0, b.0), a, b, value))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        self.check_same_shape("mul", a, b)?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push_binary(Op::Mul(a.0, b.0), a, b, value))
    }

    /// Elementwise minimum; gradients route to the smaller operand, with
    /// ties going to `a`.
    pub fn min_pair(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        self.check_same_shape("min_pair", a, b)?;
        let value = zip_map(self.value(a), self.value(b), f64::min);
        Ok(self.push_binary(Op::MinPair(a.0, b.0), a, b, value))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|x| x * factor);
        self.push_unary(Op::Scale(a.0, factor), a, value)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| -x);
        self.push_unary(Op::Neg(a.0), a, value)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push_unary(Op::Relu(a.0), a, value)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::ln);
        self.push_unary(Op::Log(a.0), a, value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        let (m, k) = self.value(a).shape();
        let (k2, p) = self.value(b).shape();
        if k != k2 {
            return Err(TapeError::ShapeMismatch {
                op: "matmul",
                a: (m, k),
                b: (k2, p),
            });
        }
        let value = matmul_values(self.value(a), self.value(b), false, false);
        Ok(self.push_binary(Op::Matmul(a.0, b.0), a, b, value))
    }

    /// Per node, the sum of its neighbors' feature rows. Sums in ascending
    /// value order, so the result is independent of neighbor-list order.
    /// Counts one message per traversed edge direction.
    pub fn neighbor_sum(&mut self, h: Var, graph: GraphHandle) -> Result<Var, TapeError> {
        let (rows, cols) = self.value(h).shape();
        let n = self.graphs[graph.0].num_nodes();
        if rows != n {
            return Err(TapeError::ShapeMismatch {
                op: "neighbor_sum",
                a: (rows, cols),
                b: (n, cols),
            });
        }
        let value = aggregate_neighbors(self.value(h), &self.graphs[graph.0]);
        self.messages += self.graphs[graph.0]
            .edges()
            .len() as u64
            * 2;
        Ok(self.push_unary(Op::NeighborSum(h.0, graph.0), h, value))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        let (ra, ca) = self.value(a).shape();
        let (rb, cb) = self.value(b).shape();
        if ra != rb {
            return Err(TapeError::ShapeMismatch {
                op: "concat_cols",
                a: (ra, ca),
                b: (rb, cb),
            });
        }
        let mut value = Tensor::zeros(ra, ca + cb);
        for r in 0..ra {
            for c in 0..ca {
                value.set(r, c, self.value(a).get(r, c));
            }
            for c in 0..cb {
                value.set(r, ca + c, self.value(b).get(r, c));
            }
        }
        Ok(self.push_binary(Op::ConcatCols(a.0, b.0), a, b, value))
    }

    /// Column sums: `n x c -> 1 x c`.
    pub fn sum_axis0(&mut self, a: Var) -> Var {
        let value = reduce_axis0(self.value(a), false);
        self.push_unary(Op::SumAxis0(a.0), a, value)
    }

    /// Column means: `n x c -> 1 x c`.
    pub fn mean_axis0(&mut self, a: Var) -> Var {
        let value = reduce_axis0(self.value(a), true);
        self.push_unary(Op::MeanAxis0(a.0), a, value)
    }

    /// Row sums: `n x c -> n x 1`.
    pub fn sum_axis1(&mut self, a: Var) -> Var {
        let value = reduce_axis1(self.value(a), false);
        self.push_unary(Op::SumAxis1(a.0), a, value)
    }

    /// Row means: `n x c -> n x 1`.
    pub fn mean_axis1(&mut self, a: Var) -> Var {
        let value = reduce_axis1(self.value(a), true);
        self.push_unary(Op::MeanAxis1(a.0), a, value)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let mut values: Vec<f64> = self.value(a).data().to_vec();
        let value = Tensor::scalar(stable_sum(&mut values));
        self.push_unary(Op::SumAll(a.0), a, value)
    }

    /// Elementwise sum of same-shaped variables, summed per element in
    /// ascending value order; the pooling primitive over the subgraph axis.
    pub fn sum_stack(&mut self, vars: &[Var]) -> Result<Var, TapeError> {
        let first = *vars.first().ok_or(TapeError::EmptyOperands)?;
        for &v in &vars[1..] {
            self.check_same_shape("sum_stack", first, v)?;
        }
        let (rows, cols) = self.value(first).shape();
        let mut value = Tensor::zeros(rows, cols);
        let mut slot = Vec::with_capacity(vars.len());
        for i in 0..rows * cols {
            slot.clear();
            slot.extend(vars.iter().map(|&v| self.value(v).data()[i]));
            value.data_mut()[i] = stable_sum(&mut slot);
        }
        let requires = vars.iter().any(|&v| self.nodes[v.0].requires_grad);
        Ok(self.push(Op::SumStack(vars.iter().map(|v| v.0).collect()), value, requires))
    }

    /// Mean over a stack of same-shaped variables.
    pub fn mean_stack(&mut self, vars: &[Var]) -> Result<Var, TapeError> {
        let total = self.sum_stack(vars)?;
        Ok(self.scale(total, 1.0 / vars.len() as f64))
    }

    /// Elementwise minimum over a stack of same-shaped variables.
    pub fn min_stack(&mut self, vars: &[Var]) -> Result<Var, TapeError> {
        let mut iter = vars.iter();
        let mut acc = *iter.next().ok_or(TapeError::EmptyOperands)?;
        for &v in iter {
            acc = self.min_pair(acc, v)?;
        }
        Ok(acc)
    }

    /// Softmax over all elements (max-shifted for stability). Intended for
    /// vectors; the shape is preserved.
    pub fn softmax(&mut self, a: Var) -> Var {
        let value = softmax_values(self.value(a));
        self.push_unary(Op::Softmax(a.0), a, value)
    }

    /// Log-softmax over all elements, computed directly for stability.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let input = self.value(a);
        let max = input.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut exps: Vec<f64> = input.data().iter().map(|&x| (x - max).exp()).collect();
        let log_z = stable_sum(&mut exps).ln();
        let value = input.map(|x| x - max - log_z);
        self.push_unary(Op::LogSoftmax(a.0), a, value)
    }

    /// Straight-through one-hot: forwards `one_hot(index)` with the shape of
    /// `soft`, while the backward pass treats the output as if it were
    /// `soft` itself (identity Jacobian).
    pub fn straight_through_one_hot(&mut self, soft: Var, index: usize) -> Result<Var, TapeError> {
        let len = self.value(soft).len();
        if index >= len {
            return Err(TapeError::IndexOutOfRange { index, len });
        }
        let (rows, cols) = self.value(soft).shape();
        let mut value = Tensor::zeros(rows, cols);
        value.data_mut()[index] = 1.0;
        Ok(self.push_unary(Op::StraightThrough { soft: soft.0 }, soft, value))
    }

    /// Reverse pass from a scalar loss. Consumes the tape's ability to
    /// differentiate: a second call is rejected.
    pub fn backward(&mut self, loss: Var) -> Result<GradStore, TapeError> {
        if self.spent {
            return Err(TapeError::TapeSpent);
        }
        if !self.value(loss).is_scalar() {
            return Err(TapeError::NonScalarLoss {
                shape: self.value(loss).shape(),
            });
        }
        self.spent = true;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(grad) = grads[id].take() else {
                continue;
            };
            self.propagate(id, &grad, &mut grads);
            grads[id] = Some(grad);
        }
        Ok(GradStore { grads })
    }

    fn propagate(&self, id: usize, grad: &Tensor, grads: &mut [Option<Tensor>]) {
        let value_of = |i: usize| &self.nodes[i].value;
        let accumulate = |target: usize, delta: Tensor, grads: &mut [Option<Tensor>]| {
            if !self.nodes[target].requires_grad {
                return;
            }
            match &mut grads[target] {
                Some(existing) => {
                    for (e, d) in existing.data_mut().iter_mut().zip(delta.data()) {
                        *e += d;
                    }
                }
                slot @ None => *slot = Some(delta),
            }
        };
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(*a, grad.clone(), grads);
                accumulate(*b, grad.clone(), grads);
            }
            Op::AddRow(a, row) => {
                accumulate(*a, grad.clone(), grads);
                accumulate(*row, reduce_axis0(grad, false), grads);
            }
            Op::Sub(a, b) => {
                accumulate(*a, grad.clone(), grads);
                accumulate(*b, grad.map(|x| -x), grads);
            }
            Op::Mul(a, b) => {
                accumulate(*a, zip_map(grad, value_of(*b), |g, y| g * y), grads);
                accumulate(*b, zip_map(grad, value_of(*a), |g, x| g * x), grads);
            }
            Op::MinPair(a, b) => {
                let (va, vb) = (value_of(*a), value_of(*b));
                let to_a = zip3_map(grad, va, vb, |g, x, y| if x <= y { g } else { 0.0 });
                let to_b = zip3_map(grad, va, vb, |g, x, y| if y < x { g } else { 0.0 });
                accumulate(*a, to_a, grads);
                accumulate(*b, to_b, grads);
            }
            Op::Scale(a, factor) => accumulate(*a, grad.map(|g| g * factor), grads),
            Op::Neg(a) => accumulate(*a, grad.map(|g| -g), grads),
            Op::Relu(a) => {
                accumulate(*a, zip_map(grad, value_of(*a), |g, x| if x > 0.0 { g } else { 0.0 }), grads);
            }
            Op::Log(a) => accumulate(*a, zip_map(grad, value_of(*a), |g, x| g / x), grads),
            Op::Matmul(a, b) => {
                accumulate(*a, matmul_values(grad, value_of(*b), false, true), grads);
                accumulate(*b, matmul_values(value_of(*a), grad, true, false), grads);
            }
            Op::NeighborSum(a, graph) => {
                // The adjacency is symmetric, so the adjoint is the same
                // aggregation applied to the output gradient.
                accumulate(*a, aggregate_neighbors(grad, &self.graphs[*graph]), grads);
            }
            Op::ConcatCols(a, b) => {
                let ca = value_of(*a).cols();
                let cb = value_of(*b).cols();
                let rows = grad.rows();
                let mut ga = Tensor::zeros(rows, ca);
                let mut gb = Tensor::zeros(rows, cb);
                for r in 0..rows {
                    for c in 0..ca {
                        ga.set(r, c, grad.get(r, c));
                    }
                    for c in 0..cb {
                        gb.set(r, c, grad.get(r, ca + c));
                    }
                }
                accumulate(*a, ga, grads);
                accumulate(*b, gb, grads);
            }
            Op::SumAxis0(a) => accumulate(*a, broadcast_rows(grad, value_of(*a).rows(), 1.0), grads),
            Op::MeanAxis0(a) => {
                let rows = value_of(*a).rows();
                accumulate(*a, broadcast_rows(grad, rows, 1.0 / rows as f64), grads);
            }
            Op::SumAxis1(a) => accumulate(*a, broadcast_cols(grad, value_of(*a).cols(), 1.0), grads),
            Op::MeanAxis1(a) => {
                let cols = value_of(*a).cols();
                accumulate(*a, broadcast_cols(grad, cols, 1.0 / cols as f64), grads);
            }
            Op::SumAll(a) => {
                let g = grad.item();
                let (rows, cols) = value_of(*a).shape();
                accumulate(*a, Tensor::from_shape(rows, cols, vec![g; rows * cols]), grads);
            }
            Op::SumStack(parents) => {
                for &p in parents {
                    accumulate(p, grad.clone(), grads);
                }
            }
            Op::Softmax(a) => {
                let y = &self.nodes[id].value;
                let mut weighted: Vec<f64> = grad
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(&g, &yi)| g * yi)
                    .collect();
                let dot = stable_sum(&mut weighted);
                let gx = zip_map(grad, y, |g, yi| yi * (g - dot));
                accumulate(*a, gx, grads);
            }
            Op::LogSoftmax(a) => {
                let log_probs = &self.nodes[id].value;
                let mut parts: Vec<f64> = grad.data().to_vec();
                let total = stable_sum(&mut parts);
                let gx = zip_map(grad, log_probs, |g, lp| g - lp.exp() * total);
                accumulate(*a, gx, grads);
            }
            Op::StraightThrough { soft } => accumulate(*soft, grad.clone(), grads),
        }
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::from_shape(a.rows(), a.cols(), data)
}

fn zip3_map(a: &Tensor, b: &Tensor, c: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .zip(c.data())
        .map(|((&x, &y), &z)| f(x, y, z))
        .collect();
    Tensor::from_shape(a.rows(), a.cols(), data)
}

fn matmul_values(a: &Tensor, b: &Tensor, transpose_a: bool, transpose_b: bool) -> Tensor {
    let (m, k) = if transpose_a {
        (a.cols(), a.rows())
    } else {
        a.shape()
    };
    let (_, p) = if transpose_b {
        (b.cols(), b.rows())
    } else {
        b.shape()
    };
    let get_a = |i: usize, j: usize| if transpose_a { a.get(j, i) } else { a.get(i, j) };
    let get_b = |i: usize, j: usize| if transpose_b { b.get(j, i) } else { b.get(i, j) };
    let mut out = Tensor::zeros(m, p);
    for i in 0..m {
        for j in 0..p {
            let mut acc = 0.0;
            for t in 0..k {
                acc += get_a(i, t) * get_b(t, j);
            }
            out.set(i, j, acc);
        }
    }
    out
}

fn aggregate_neighbors(h: &Tensor, graph: &Graph) -> Tensor {
    let (n, cols) = h.shape();
    let mut out = Tensor::zeros(n, cols);
    let mut bucket = Vec::new();
    for v in 0..n {
        for c in 0..cols {
            bucket.clear();
            bucket.extend(graph.neighbors(v).iter().map(|&u| h.get(u, c)));
            out.set(v, c, stable_sum(&mut bucket));
        }
    }
    out
}

fn reduce_axis0(a: &Tensor, mean: bool) -> Tensor {
    let (rows, cols) = a.shape();
    let mut out = Tensor::zeros(1, cols);
    let mut bucket = Vec::with_capacity(rows);
    for c in 0..cols {
        bucket.clear();
        bucket.extend((0..rows).map(|r| a.get(r, c)));
        let mut total = stable_sum(&mut bucket);
        if mean {
            total /= rows as f64;
        }
        out.set(0, c, total);
    }
    out
}

fn reduce_axis1(a: &Tensor, mean: bool) -> Tensor {
    let (rows, cols) = a.shape();
    let mut out = Tensor::zeros(rows, 1);
    let mut bucket = Vec::with_capacity(cols);
    for r in 0..rows {
        bucket.clear();
        bucket.extend((0..cols).map(|c| a.get(r, c)));
        let mut total = stable_sum(&mut bucket);
        if mean {
            total /= cols as f64;
        }
        out.set(r, 0, total);
    }
    out
}

fn broadcast_rows(row: &Tensor, rows: usize, factor: f64) -> Tensor {
    let cols = row.cols();
    let mut out = Tensor::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            out.set(r, c, row.get(0, c) * factor);
        }
    }
    out
}

fn broadcast_cols(col: &Tensor, cols: usize, factor: f64) -> Tensor {
    let rows = col.rows();
    let mut out = Tensor::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            out.set(r, c, col.get(r, 0) * factor);
        }
    }
    out
}

fn softmax_values(input: &Tensor) -> Tensor {
    let max = input.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = input.data().iter().map(|&x| (x - max).exp()).collect();
    let mut parts = exps.clone();
    let z = stable_sum(&mut parts);
    Tensor::from_shape(input.rows(), input.cols(), exps.into_iter().map(|e| e / z).collect())
}

/// Max relative error between the analytic gradient and a central-difference
/// estimate of `value` at `params`, with denominator `max(|a|, |b|, 1e-8)`.
pub fn finite_diff_check<V>(
    value: V,
    analytic: &[Tensor],
    params: &[Tensor],
    eps: f64,
) -> f64
where
    V: Fn(&[Tensor]) -> f64,
{
    assert!(eps > 0.0, "eps must be positive");
    assert_eq!(analytic.len(), params.len(), "one gradient per parameter");
    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, param) in params.iter().enumerate() {
        for i in 0..param.len() {
            let original = param.data()[i];
            work[pi].data_mut()[i] = original + eps;
            let plus = value(&work);
            work[pi].data_mut()[i] = original - eps;
            let minus = value(&work);
            work[pi].data_mut()[i] = original;
            let estimate = (plus - minus) / (2.0 * eps);
            let reference = analytic[pi].data()[i];
            let denom = estimate.abs().max(reference.abs()).max(1e-8);
            worst = worst.max((estimate - reference).abs() / denom);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient_is_2x() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::column(&[1.0, 2.0]));
        let sq = tape.mul(w, w).unwrap();
        let loss = tape.sum_all(sq);
        assert_eq!(tape.value(loss).item(), 5.0);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.grad(w).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn dead_relu_blocks_gradient() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::scalar(2.0));
        let x = tape.constant(Tensor::scalar(-3.0));
        let r = tape.relu(x);
        let prod = tape.mul(r, w).unwrap();
        let loss = tape.sum_all(prod);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.grad(w).unwrap().data(), &[0.0]);
    }

    #[test]
    fn matmul_identity_is_identity() {
        let mut tape = Tape::new();
        let eye = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
        let m = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let out = tape.matmul(eye, m).unwrap();
        assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn relu_and_softmax_forward_values() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::column(&[-1.0, 0.0, 2.0]));
        let r = tape.relu(x);
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);
        let z = tape.constant(Tensor::column(&[0.0, 0.0, 0.0]));
        let s = tape.softmax(z);
        for &p in tape.value(s).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn second_backward_is_rejected() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::scalar(1.5));
        let loss = tape.sum_all(w);
        tape.backward(loss).unwrap();
        assert_eq!(tape.backward(loss).unwrap_err(), TapeError::TapeSpent);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::column(&[1.0, 2.0]));
        assert!(matches!(
            tape.backward(w),
            Err(TapeError::NonScalarLoss { .. })
        ));
    }

    fn mlp_loss(params: &[Tensor], x: &Tensor) -> (f64, Option<Vec<Tensor>>) {
        let mut tape = Tape::new();
        let w1 = tape.leaf(params[0].clone());
        let b1 = tape.leaf(params[1].clone());
        let w2 = tape.leaf(params[2].clone());
        let b2 = tape.leaf(params[3].clone());
        let input = tape.constant(x.clone());
        let h = tape.matmul(input, w1).unwrap();
        let h = tape.add_row(h, b1).unwrap();
        let h = tape.relu(h);
        let out = tape.matmul(h, w2).unwrap();
        let out = tape.add_row(out, b2).unwrap();
        let sq = tape.mul(out, out).unwrap();
        let loss = tape.sum_all(sq);
        let value = tape.value(loss).item();
        let mut grads = tape.backward(loss).unwrap();
        let collected = vec![
            grads.take(w1).unwrap(),
            grads.take(b1).unwrap(),
            grads.take(w2).unwrap(),
            grads.take(b2).unwrap(),
        ];
        (value, Some(collected))
    }

    #[test]
    fn two_layer_mlp_gradient_matches_finite_differences() {
        let x = Tensor::from_rows(&[vec![0.3, -0.7, 1.2], vec![-0.4, 0.9, 0.1]]);
        let params = vec![
            Tensor::from_rows(&[vec![0.5, -0.2], vec![0.1, 0.4], vec![-0.3, 0.8]]),
            Tensor::row(&[0.05, -0.15]),
            Tensor::from_rows(&[vec![0.7], vec![-0.6]]),
            Tensor::row(&[0.2]),
        ];
        let (_, grads) = mlp_loss(&params, &x);
        let error = finite_diff_check(
            |p| mlp_loss(p, &x).0,
            &grads.unwrap(),
            &params,
            1e-4,
        );
        assert!(error < 1e-5, "max relative error {error}");
    }

    #[test]
    fn quadratic_gradient_check_is_tight() {
        let params = vec![Tensor::column(&[1.0, -2.0, 0.5])];
        let value = |p: &[Tensor]| p[0].data().iter().map(|&x| x * x).sum::<f64>();
        let analytic = vec![params[0].map(|x| 2.0 * x)];
        let error = finite_diff_check(value, &analytic, &params, 1e-4);
        assert!(error < 1e-7, "max relative error {error}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let params = vec![Tensor::column(&[1.0, 2.0])];
        let analytic = vec![Tensor::zeros(2, 1)];
        let error = finite_diff_check(|_| 42.0, &analytic, &params, 1e-4);
        assert_eq!(error, 0.0);
    }

    #[test]
    fn softmax_gradient_matches_analytic_jacobian_product() {
        // Loss = a . softmax(x); gradient should be J_softmax^T a.
        let x_values = [0.3, -1.2, 0.8, 0.1];
        let a_values = [0.9, -0.4, 0.2, 0.7];
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::column(&x_values));
        let a = tape.constant(Tensor::column(&a_values));
        let y = tape.softmax(x);
        let prod = tape.mul(y, a).unwrap();
        let loss = tape.sum_all(prod);
        let y_vals: Vec<f64> = tape.value(y).data().to_vec();
        let mut grads = tape.backward(loss).unwrap();
        let got = grads.take(x).unwrap();
        let dot: f64 = a_values.iter().zip(&y_vals).map(|(&ai, &yi)| ai * yi).sum();
        for i in 0..4 {
            let expected = y_vals[i] * (a_values[i] - dot);
            assert!((got.data()[i] - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn log_softmax_agrees_with_log_of_softmax() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::column(&[0.2, -0.5, 1.3]));
        let direct = tape.log_softmax(x);
        let soft = tape.softmax(x);
        let logged = tape.log(soft);
        for (d, l) in tape.value(direct).data().iter().zip(tape.value(logged).data()) {
            assert!((d - l).abs() < 1e-12);
        }
    }

    #[test]
    fn straight_through_forwards_hard_and_backwards_soft() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::column(&[0.1, 0.9, 0.2]));
        let y = tape.softmax(x);
        let hard = tape.straight_through_one_hot(y, 1).unwrap();
        assert_eq!(tape.value(hard).data(), &[0.0, 1.0, 0.0]);
        let a = tape.constant(Tensor::column(&[0.3, -0.2, 0.5]));
        let prod = tape.mul(hard, a).unwrap();
        let loss = tape.sum_all(prod);
        let y_vals: Vec<f64> = tape.value(y).data().to_vec();
        let mut grads = tape.backward(loss).unwrap();
        let got = grads.take(x).unwrap();
        // Same Jacobian product as if the loss had consumed y directly.
        let a_values = [0.3, -0.2, 0.5];
        let dot: f64 = a_values.iter().zip(&y_vals).map(|(&ai, &yi)| ai * yi).sum();
        for i in 0..3 {
            let expected = y_vals[i] * (a_values[i] - dot);
            assert!((got.data()[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn neighbor_sum_counts_messages() {
        let g = crate::graph::csl(13, 5).unwrap();
        let mut tape = Tape::new();
        let handle = tape.register_graph(&g);
        let h = tape.constant(Tensor::from_shape(13, 1, vec![1.0; 13]));
        let out = tape.neighbor_sum(h, handle).unwrap();
        // 4-regular: each node sums four ones.
        assert!(tape.value(out).data().iter().all(|&x| x == 5.0 - 1.0));
        assert_eq!(tape.messages(), 52);
    }

    #[test]
    fn min_stack_routes_gradient_to_smallest() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::column(&[1.0, 5.0]));
        let b = tape.leaf(Tensor::column(&[2.0, 3.0]));
        let m = tape.min_stack(&[a, b]).unwrap();
        assert_eq!(tape.value(m).data(), &[1.0, 3.0]);
        let loss = tape.sum_all(m);
        let mut grads = tape.backward(loss).unwrap();
        assert_eq!(grads.take(a).unwrap().data(), &[1.0, 0.0]);
        assert_eq!(grads.take(b).unwrap().data(), &[0.0, 1.0]);
    }
}
