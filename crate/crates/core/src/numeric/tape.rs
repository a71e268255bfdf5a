//! Reverse-mode differentiation over a closed set of matrix primitives.
//!
//! Expressions are built on a [`Tape`] as a flat list of nodes; the list order
//! is a topological order by construction, so the backward pass is a single
//! reverse sweep. Scalars are 1x1 matrices.

use crate::numeric::matrix::{dot, norm, Matrix};
use crate::numeric::param::{ParamId, ParamSet};
use crate::numeric::NumericError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

const COSINE_NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Op {
    /// Leaf value; `Some(id)` ties it to a parameter so gradients can be
    /// routed back after the sweep.
    Leaf(Option<ParamId>),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// `a (n x c) + b (1 x c)` broadcast over rows; the bias path of dense layers.
    AddRowBroadcast(NodeId, NodeId),
    /// Multiply by a constant; `1/temperature` scaling uses this.
    Scale(NodeId, f64),
    /// Add a constant to every entry; used for detached log-sum-exp shifts.
    Offset(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    ConcatCols(NodeId, NodeId),
    MeanRows(NodeId),
    MaxRows(NodeId),
    SelectRows(NodeId, Vec<usize>),
    Transpose(NodeId),
    SoftmaxRows(NodeId),
    Cosine(NodeId, NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Sum(NodeId),
    Neg(NodeId),
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Gradients of one scalar output with respect to every parameter leaf
/// reached by the expression.
pub struct TapeGradients {
    by_param: Vec<(ParamId, Matrix)>,
}

impl TapeGradients {
    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.by_param.iter().map(|(id, m)| (*id, m))
    }

    /// Add `scale *` these gradients into the parameter set's accumulators.
    /// Frozen parameters are skipped and keep their zero gradient.
    pub fn accumulate_into(&self, params: &mut ParamSet, scale: f64) {
        for (id, g) in &self.by_param {
            params.accumulate_grad(*id, g, scale);
        }
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_leaves: Vec<(ParamId, NodeId)>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), param_leaves: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.scalar()
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Insert a constant leaf (no gradient flows into it).
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf(None), false)
    }

    /// Insert a leaf bound to a parameter, or return the existing leaf if
    /// this tape saw the parameter already. The value is copied onto the
    /// tape; gradients flow back through [`TapeGradients`]. One tape must
    /// only ever see a single parameter-set snapshot.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> NodeId {
        if let Some(&(_, node)) = self.param_leaves.iter().find(|(pid, _)| *pid == id) {
            return node;
        }
        let value = params.value(id).clone();
        let trainable = params.is_trainable(id);
        let node = self.push(value, Op::Leaf(Some(id)), trainable);
        self.param_leaves.push((id, node));
        node
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericError> {
        let v = self.nodes[a.0].value.matmul(&self.nodes[b.0].value)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::MatMul(a, b), ng))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericError> {
        let v = self.nodes[a.0].value.add(&self.nodes[b.0].value)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Add(a, b), ng))
    }

    pub fn add_row_broadcast(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericError> {
        let (am, bm) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if bm.rows() != 1 || bm.cols() != am.cols() {
            return Err(NumericError::Shape(format!(
                "row broadcast: {}x{} + {}x{}",
                am.rows(),
                am.cols(),
                bm.rows(),
                bm.cols()
            )));
        }
        let mut v = am.clone();
        for r in 0..v.rows() {
            for c in 0..v.cols() {
                v.set(r, c, v.get(r, c) + bm.get(0, c));
            }
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::AddRowBroadcast(a, b), ng))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let v = self.nodes[a.0].value.scale(factor);
        let ng = self.needs(a);
        self.push(v, Op::Scale(a, factor), ng)
    }

    pub fn offset(&mut self, a: NodeId, delta: f64) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| x + delta);
        let ng = self.needs(a);
        self.push(v, Op::Offset(a), ng)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(f64::tanh);
        let ng = self.needs(a);
        self.push(v, Op::Tanh(a), ng)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| if x > 0.0 { x } else { 0.0 });
        let ng = self.needs(a);
        self.push(v, Op::Relu(a), ng)
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericError> {
        let (am, bm) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if am.rows() != bm.rows() {
            return Err(NumericError::Shape(format!(
                "concat: {}x{} || {}x{}",
                am.rows(),
                am.cols(),
                bm.rows(),
                bm.cols()
            )));
        }
        let mut v = Matrix::zeros(am.rows(), am.cols() + bm.cols());
        for r in 0..am.rows() {
            for c in 0..am.cols() {
                v.set(r, c, am.get(r, c));
            }
            for c in 0..bm.cols() {
                v.set(r, am.cols() + c, bm.get(r, c));
            }
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::ConcatCols(a, b), ng))
    }

    pub fn mean_rows(&mut self, a: NodeId) -> Result<NodeId, NumericError> {
        let am = &self.nodes[a.0].value;
        if am.rows() == 0 {
            return Err(NumericError::Shape("mean over zero rows".into()));
        }
        let mut v = Matrix::zeros(1, am.cols());
        for r in 0..am.rows() {
            for c in 0..am.cols() {
                v.set(0, c, v.get(0, c) + am.get(r, c));
            }
        }
        let inv = 1.0 / am.rows() as f64;
        let v = v.scale(inv);
        let ng = self.needs(a);
        Ok(self.push(v, Op::MeanRows(a), ng))
    }

    pub fn max_rows(&mut self, a: NodeId) -> Result<NodeId, NumericError> {
        let am = &self.nodes[a.0].value;
        if am.rows() == 0 {
            return Err(NumericError::Shape("max over zero rows".into()));
        }
        let mut v = Matrix::zeros(1, am.cols());
        for c in 0..am.cols() {
            v.set(0, c, max_col(am, c).1);
        }
        let ng = self.needs(a);
        Ok(self.push(v, Op::MaxRows(a), ng))
    }

    pub fn select_rows(&mut self, a: NodeId, rows: Vec<usize>) -> Result<NodeId, NumericError> {
        let am = &self.nodes[a.0].value;
        for &r in &rows {
            if r >= am.rows() {
                return Err(NumericError::Shape(format!(
                    "select row {} out of {} rows",
                    r,
                    am.rows()
                )));
            }
        }
        let mut v = Matrix::zeros(rows.len(), am.cols());
        for (i, &r) in rows.iter().enumerate() {
            for c in 0..am.cols() {
                v.set(i, c, am.get(r, c));
            }
        }
        let ng = self.needs(a);
        Ok(self.push(v, Op::SelectRows(a, rows), ng))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.transpose();
        let ng = self.needs(a);
        self.push(v, Op::Transpose(a), ng)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let am = &self.nodes[a.0].value;
        let mut v = am.clone();
        for r in 0..v.rows() {
            let m = am.row(r).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for c in 0..v.cols() {
                let e = (am.get(r, c) - m).exp();
                v.set(r, c, e);
                sum += e;
            }
            for c in 0..v.cols() {
                v.set(r, c, v.get(r, c) / sum);
            }
        }
        let ng = self.needs(a);
        self.push(v, Op::SoftmaxRows(a), ng)
    }

    /// Cosine similarity of two row vectors, as a 1x1 node. Norms are
    /// floored at 1e-12 so training survives rectifier dead rows; the
    /// standalone [`crate::numeric::cosine_similarity`] keeps the
    /// zero-vector error contract instead.
    pub fn cosine(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericError> {
        let (am, bm) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if am.rows() != 1 || bm.rows() != 1 || am.cols() != bm.cols() {
            return Err(NumericError::Shape(format!(
                "cosine: {}x{} vs {}x{}",
                am.rows(),
                am.cols(),
                bm.rows(),
                bm.cols()
            )));
        }
        let na = norm(am.row(0)).max(COSINE_NORM_FLOOR);
        let nb = norm(bm.row(0)).max(COSINE_NORM_FLOOR);
        let v = Matrix::row_vector(vec![dot(am.row(0), bm.row(0)) / (na * nb)]);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Cosine(a, b), ng))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(f64::exp);
        let ng = self.needs(a);
        self.push(v, Op::Exp(a), ng)
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(f64::ln);
        let ng = self.needs(a);
        self.push(v, Op::Ln(a), ng)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let total: f64 = self.nodes[a.0].value.data().iter().sum();
        let ng = self.needs(a);
        self.push(Matrix::row_vector(vec![total]), Op::Sum(a), ng)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.scale(-1.0);
        let ng = self.needs(a);
        self.push(v, Op::Neg(a), ng)
    }

    /// Sum several 1x1 nodes.
    pub fn sum_scalars(&mut self, ids: &[NodeId]) -> Result<NodeId, NumericError> {
        let mut acc = match ids.first() {
            Some(&id) => id,
            None => return Err(NumericError::Shape("sum of zero scalars".into())),
        };
        for &id in &ids[1..] {
            acc = self.add(acc, id)?;
        }
        Ok(acc)
    }

    /// Numerically stable `log(sum_i exp(s_i))` over 1x1 nodes: the maximum
    /// is subtracted as a detached constant, which leaves gradients intact.
    pub fn log_sum_exp(&mut self, scores: &[NodeId]) -> Result<NodeId, NumericError> {
        if scores.is_empty() {
            return Err(NumericError::Shape("log-sum-exp over zero scores".into()));
        }
        let shift = scores
            .iter()
            .map(|&s| self.scalar_value(s))
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<NodeId> = scores
            .iter()
            .map(|&s| {
                let shifted = self.offset(s, -shift);
                self.exp(shifted)
            })
            .collect();
        let total = self.sum_scalars(&exps)?;
        let log = self.ln(total);
        Ok(self.offset(log, shift))
    }

    /// Reverse sweep from a 1x1 `loss` node. Returns gradients grouped by the
    /// parameter leaves that were reached.
    pub fn backward(&self, loss: NodeId) -> Result<TapeGradients, NumericError> {
        let lm = &self.nodes[loss.0].value;
        if lm.rows() * lm.cols() != 1 {
            return Err(NumericError::Shape(format!(
                "backward needs a 1x1 loss, got {}x{}",
                lm.rows(),
                lm.cols()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::row_vector(vec![1.0]));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                grads[idx] = None;
                continue;
            }
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(idx, &g, &mut grads);
            if let Op::Leaf(Some(_)) = self.nodes[idx].op {
                grads[idx] = Some(g);
            }
        }

        let mut by_param = Vec::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf(Some(pid)) = node.op {
                if let Some(g) = grads[idx].take() {
                    by_param.push((pid, g));
                }
            }
        }
        Ok(TapeGradients { by_param })
    }

    fn add_grad(&self, grads: &mut [Option<Matrix>], id: NodeId, contribution: Matrix) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(existing) => existing.add_assign(&contribution),
            slot @ None => *slot = Some(contribution),
        }
    }

    fn propagate(&self, idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        match &self.nodes[idx].op {
            Op::Leaf(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                if self.nodes[a.0].needs_grad {
                    let ga = g.matmul(&bv.transpose()).expect("matmul vjp shape");
                    self.add_grad(grads, *a, ga);
                }
                if self.nodes[b.0].needs_grad {
                    let gb = av.transpose().matmul(g).expect("matmul vjp shape");
                    self.add_grad(grads, *b, gb);
                }
            }
            Op::Add(a, b) => {
                self.add_grad(grads, *a, g.clone());
                self.add_grad(grads, *b, g.clone());
            }
            Op::AddRowBroadcast(a, b) => {
                self.add_grad(grads, *a, g.clone());
                if self.nodes[b.0].needs_grad {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            gb.set(0, c, gb.get(0, c) + g.get(r, c));
                        }
                    }
                    self.add_grad(grads, *b, gb);
                }
            }
            Op::Scale(a, factor) => self.add_grad(grads, *a, g.scale(*factor)),
            Op::Offset(a) => self.add_grad(grads, *a, g.clone()),
            Op::Tanh(a) => {
                let y = &self.nodes[idx].value;
                let mut ga = g.clone();
                for (d, &yv) in ga.data_mut().iter_mut().zip(y.data().iter()) {
                    *d *= 1.0 - yv * yv;
                }
                self.add_grad(grads, *a, ga);
            }
            Op::Relu(a) => {
                let x = &self.nodes[a.0].value;
                let mut ga = g.clone();
                for (d, &xv) in ga.data_mut().iter_mut().zip(x.data().iter()) {
                    if xv <= 0.0 {
                        *d = 0.0;
                    }
                }
                self.add_grad(grads, *a, ga);
            }
            Op::ConcatCols(a, b) => {
                let ac = self.nodes[a.0].value.cols();
                let bc = self.nodes[b.0].value.cols();
                if self.nodes[a.0].needs_grad {
                    let mut ga = Matrix::zeros(g.rows(), ac);
                    for r in 0..g.rows() {
                        for c in 0..ac {
                            ga.set(r, c, g.get(r, c));
                        }
                    }
                    self.add_grad(grads, *a, ga);
                }
                if self.nodes[b.0].needs_grad {
                    let mut gb = Matrix::zeros(g.rows(), bc);
                    for r in 0..g.rows() {
                        for c in 0..bc {
                            gb.set(r, c, g.get(r, ac + c));
                        }
                    }
                    self.add_grad(grads, *b, gb);
                }
            }
            Op::MeanRows(a) => {
                let n = self.nodes[a.0].value.rows();
                let inv = 1.0 / n as f64;
                let mut ga = Matrix::zeros(n, g.cols());
                for r in 0..n {
                    for c in 0..g.cols() {
                        ga.set(r, c, g.get(0, c) * inv);
                    }
                }
                self.add_grad(grads, *a, ga);
            }
            Op::MaxRows(a) => {
                // Routes to the argmax entry; ties break to the lowest row.
                let x = &self.nodes[a.0].value;
                let mut ga = Matrix::zeros(x.rows(), x.cols());
                for c in 0..x.cols() {
                    let (argmax, _) = max_col(x, c);
                    ga.set(argmax, c, g.get(0, c));
                }
                self.add_grad(grads, *a, ga);
            }
            Op::SelectRows(a, rows) => {
                // Scatter-add: a source row selected twice accumulates both.
                let x = &self.nodes[a.0].value;
                let mut ga = Matrix::zeros(x.rows(), x.cols());
                for (i, &r) in rows.iter().enumerate() {
                    for c in 0..x.cols() {
                        ga.set(r, c, ga.get(r, c) + g.get(i, c));
                    }
                }
                self.add_grad(grads, *a, ga);
            }
            Op::Transpose(a) => self.add_grad(grads, *a, g.transpose()),
            Op::SoftmaxRows(a) => {
                let y = &self.nodes[idx].value;
                let mut ga = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let inner = dot(g.row(r), y.row(r));
                    for c in 0..y.cols() {
                        ga.set(r, c, y.get(r, c) * (g.get(r, c) - inner));
                    }
                }
                self.add_grad(grads, *a, ga);
            }
            Op::Cosine(a, b) => {
                let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (raw_na, raw_nb) = (norm(av.row(0)), norm(bv.row(0)));
                let na = raw_na.max(COSINE_NORM_FLOOR);
                let nb = raw_nb.max(COSINE_NORM_FLOOR);
                let cos = self.nodes[idx].value.scalar();
                let gs = g.scalar();
                if self.nodes[a.0].needs_grad {
                    // below the floor the norm is a constant, so only the
                    // dot-product term survives
                    let self_term = if raw_na > COSINE_NORM_FLOOR { cos / (na * na) } else { 0.0 };
                    let mut ga = Matrix::zeros(1, av.cols());
                    for c in 0..av.cols() {
                        let d = bv.get(0, c) / (na * nb) - self_term * av.get(0, c);
                        ga.set(0, c, gs * d);
                    }
                    self.add_grad(grads, *a, ga);
                }
                if self.nodes[b.0].needs_grad {
                    let self_term = if raw_nb > COSINE_NORM_FLOOR { cos / (nb * nb) } else { 0.0 };
                    let mut gb = Matrix::zeros(1, bv.cols());
                    for c in 0..bv.cols() {
                        let d = av.get(0, c) / (na * nb) - self_term * bv.get(0, c);
                        gb.set(0, c, gs * d);
                    }
                    self.add_grad(grads, *b, gb);
                }
            }
            Op::Exp(a) => {
                let y = &self.nodes[idx].value;
                let mut ga = g.clone();
                for (d, &yv) in ga.data_mut().iter_mut().zip(y.data().iter()) {
                    *d *= yv;
                }
                self.add_grad(grads, *a, ga);
            }
            Op::Ln(a) => {
                let x = &self.nodes[a.0].value;
                let mut ga = g.clone();
                for (d, &xv) in ga.data_mut().iter_mut().zip(x.data().iter()) {
                    *d /= xv;
                }
                self.add_grad(grads, *a, ga);
            }
            Op::Sum(a) => {
                let x = &self.nodes[a.0].value;
                let mut ga = Matrix::zeros(x.rows(), x.cols());
                ga.fill(g.scalar());
                self.add_grad(grads, *a, ga);
            }
            Op::Neg(a) => self.add_grad(grads, *a, g.scale(-1.0)),
        }
    }
}

fn max_col(m: &Matrix, col: usize) -> (usize, f64) {
    let mut best = (0, m.get(0, col));
    for r in 1..m.rows() {
        let v = m.get(r, col);
        if v > best.1 {
            best = (r, v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::param::ParamSet;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
    }

    /// Central finite differences over every entry of every trainable
    /// parameter; `forward` must evaluate the loss from scratch.
    pub(crate) fn finite_difference_check(
        params: &ParamSet,
        forward: impl Fn(&ParamSet) -> f64,
        analytic: &TapeGradients,
        tol: f64,
    ) {
        let eps = 1e-4;
        for (pid, grad) in analytic.iter() {
            for i in 0..grad.data().len() {
                let mut plus = params.clone();
                plus.value_mut(pid).data_mut()[i] += eps;
                let mut minus = params.clone();
                minus.value_mut(pid).data_mut()[i] -= eps;
                let fd = (forward(&plus) - forward(&minus)) / (2.0 * eps);
                let an = grad.data()[i];
                assert!(
                    rel_err(an, fd) < tol,
                    "param {:?} entry {}: analytic {} vs fd {}",
                    pid,
                    i,
                    an,
                    fd
                );
            }
        }
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let mut params = ParamSet::new();
        let w = params.add_trainable("w", Matrix::from_vec(2, 3, vec![1.0, -2.0, 0.5, 3.0, 0.0, 4.0]).unwrap());
        let mut tape = Tape::new();
        let wn = tape.param(&params, w);
        let loss = tape.sum(wn);
        let grads = tape.backward(loss).unwrap();
        let (_, g) = grads.iter().next().map(|(id, m)| (id, m.clone())).unwrap();
        assert_eq!(g.data(), &[1.0; 6]);
    }

    #[test]
    fn tanh_gradient_at_zero_is_one() {
        let mut params = ParamSet::new();
        let x = params.add_trainable("x", Matrix::row_vector(vec![0.0]));
        let mut tape = Tape::new();
        let xn = tape.param(&params, x);
        let y = tape.tanh(xn);
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        let g = grads.iter().next().unwrap().1;
        assert_eq!(g.data(), &[1.0]);
    }

    #[test]
    fn frozen_leaf_gets_no_gradient() {
        let mut params = ParamSet::new();
        let w = params.add_frozen("w", Matrix::row_vector(vec![2.0]));
        let t = params.add_trainable("t", Matrix::row_vector(vec![3.0]));
        let mut tape = Tape::new();
        let wn = tape.param(&params, w);
        let tn = tape.param(&params, t);
        let prod = tape.matmul(wn, tn).unwrap();
        let loss = tape.sum(prod);
        let grads = tape.backward(loss).unwrap();
        let ids: Vec<ParamId> = grads.iter().map(|(id, _)| id).collect();
        assert_eq!(ids, vec![t]);
    }

    #[test]
    fn random_composition_matches_finite_differences() {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut rnd = |r: usize, c: usize| {
            Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
        };
        let mut params = ParamSet::new();
        let w1 = params.add_trainable("w1", rnd(4, 5));
        let b1 = params.add_trainable("b1", rnd(1, 5));
        let w2 = params.add_trainable("w2", rnd(5, 3));
        let w3 = params.add_trainable("w3", rnd(3, 3));
        let x = rnd(6, 4);
        let probe = rnd(1, 3);

        let forward = |ps: &ParamSet| -> f64 {
            let mut tape = Tape::new();
            let loss = build(&mut tape, ps, (w1, b1, w2, w3), &x, &probe);
            tape.scalar_value(loss)
        };
        fn build(
            tape: &mut Tape,
            ps: &ParamSet,
            (w1, b1, w2, w3): (ParamId, ParamId, ParamId, ParamId),
            x: &Matrix,
            probe: &Matrix,
        ) -> NodeId {
            let xn = tape.constant(x.clone());
            let w1n = tape.param(ps, w1);
            let b1n = tape.param(ps, b1);
            let w2n = tape.param(ps, w2);
            let w3n = tape.param(ps, w3);
            let h1 = tape.matmul(xn, w1n).unwrap();
            let h1 = tape.add_row_broadcast(h1, b1n).unwrap();
            let h1 = tape.tanh(h1);
            let h2 = tape.matmul(h1, w2n).unwrap();
            let h2 = tape.relu(h2);
            let h3 = tape.matmul(h2, w3n).unwrap();
            let picked = tape.select_rows(h3, vec![0, 2, 2]).unwrap();
            let mean = tape.mean_rows(picked).unwrap();
            let mx = tape.max_rows(h3).unwrap();
            let rep = tape.concat_cols(mean, mx).unwrap();
            let pn = tape.constant(Matrix::row_vector(
                probe.row(0).iter().chain(probe.row(0).iter()).cloned().collect(),
            ));
            let cos = tape.cosine(rep, pn).unwrap();
            let scaled = tape.scale(cos, 1.0 / 0.3);
            let e = tape.exp(scaled);
            let one = tape.constant(Matrix::row_vector(vec![1.0]));
            let denom = tape.add(e, one).unwrap();
            let l = tape.ln(denom);
            tape.neg(l)
        }

        let mut tape = Tape::new();
        let loss = build(&mut tape, &params, (w1, b1, w2, w3), &x, &probe);
        let grads = tape.backward(loss).unwrap();
        finite_difference_check(&params, forward, &grads, 1e-4);
    }

    #[test]
    fn softmax_rows_matches_finite_differences() {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut params = ParamSet::new();
        let w = params.add_trainable(
            "w",
            Matrix::from_vec(3, 4, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap(),
        );
        let probe = Matrix::row_vector((0..4).map(|_| rng.random_range(-1.0..1.0)).collect());

        let forward = |ps: &ParamSet| -> f64 {
            let mut tape = Tape::new();
            let wn = tape.param(ps, w);
            let sm = tape.softmax_rows(wn);
            let t = tape.transpose(sm);
            let m = tape.mean_rows(t).unwrap();
            let pn = tape.constant(Matrix::row_vector(probe.row(0)[..3].to_vec()));
            let cos = tape.cosine(m, pn).unwrap();
            tape.scalar_value(cos)
        };
        let mut tape = Tape::new();
        let wn = tape.param(&params, w);
        let sm = tape.softmax_rows(wn);
        let t = tape.transpose(sm);
        let m = tape.mean_rows(t).unwrap();
        let pn = tape.constant(Matrix::row_vector(probe.row(0)[..3].to_vec()));
        let cos = tape.cosine(m, pn).unwrap();
        let grads = tape.backward(cos).unwrap();
        finite_difference_check(&params, forward, &grads, 1e-4);
    }

    #[test]
    fn max_rows_routes_to_lowest_index_on_ties() {
        let mut params = ParamSet::new();
        let w = params.add_trainable("w", Matrix::from_vec(3, 1, vec![2.0, 2.0, 1.0]).unwrap());
        let mut tape = Tape::new();
        let wn = tape.param(&params, w);
        let mx = tape.max_rows(wn).unwrap();
        let loss = tape.sum(mx);
        let grads = tape.backward(loss).unwrap();
        let g = grads.iter().next().unwrap().1;
        assert_eq!(g.data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn log_sum_exp_handles_large_scores() {
        let mut tape = Tape::new();
        let a = tape.constant(Matrix::row_vector(vec![700.0]));
        let b = tape.constant(Matrix::row_vector(vec![699.0]));
        let lse = tape.log_sum_exp(&[a, b]).unwrap();
        let expected = 700.0 + (1.0 + (-1.0f64).exp()).ln();
        assert!((tape.scalar_value(lse) - expected).abs() < 1e-9);
    }
}
