//! Define-by-run reverse-mode differentiation over [`Matrix`] values.
//!
//! Every forward pass builds a fresh [`Tape`]. Operations are appended in
//! execution order, so the node list is already topologically sorted and the
//! backward pass is a single reverse sweep. A node that does not depend on any
//! `requires_grad` leaf is recorded as a constant and is skipped by backward.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::{Matrix, SparseMatrix};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    SpMM(Arc<SparseMatrix>, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Elu(Var),
    RowSoftmax(Var),
    ConcatCols(Var, Var),
    SelectRow(Var, usize),
    L2Normalize(Var),
    RowNormalize(Var, f64),
    WeightedSum { coeffs: Var, terms: Vec<Var> },
    Sum(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        mask: Vec<usize>,
        probs: Matrix,
    },
    EdgeScores {
        pattern: Arc<SparseMatrix>,
        src: Option<Var>,
        dst: Option<Var>,
    },
    EdgeDot {
        pattern: Arc<SparseMatrix>,
        a: Var,
        b: Var,
    },
    EdgeSoftmax {
        pattern: Arc<SparseMatrix>,
        scores: Var,
    },
    EdgeAggregate {
        pattern: Arc<SparseMatrix>,
        weights: Var,
        x: Var,
    },
    NeighborMax {
        x: Var,
        argmax: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    requires_grad: bool,
    op: Op,
}

/// Recorded computation. See the module docs.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to the tape's trainable leaves.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

const NO_SOURCE: usize = usize::MAX;

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn param(&mut self, value: Matrix) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.leaf(value, false)
    }

    fn push(&mut self, value: Matrix, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape {
                op,
                lhs: self.shape(a),
                rhs: self.shape(b),
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, rg, Op::MatMul(a, b)))
    }

    /// Sparse-dense product. The sparse operand is treated as constant.
    pub fn spmm(&mut self, s: &Arc<SparseMatrix>, d: Var) -> Result<Var> {
        let value = s.mul_dense(self.value(d))?;
        let rg = self.rg(&[d]);
        Ok(self.push(value, rg, Op::SpMM(Arc::clone(s), d)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, rg, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, rg, Op::Sub(a, b)))
    }

    /// Adds a 1×C row vector to every row of an N×C matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (n, c) = self.shape(a);
        if self.shape(row) != (1, c) {
            return Err(Error::Shape {
                op: "add_row",
                lhs: (n, c),
                rhs: self.shape(row),
            });
        }
        let mut value = self.value(a).clone();
        let r = self.value(row).data().to_vec();
        for i in 0..n {
            for (v, b) in value.row_mut(i).iter_mut().zip(&r) {
                *v += b;
            }
        }
        let rg = self.rg(&[a, row]);
        Ok(self.push(value, rg, Op::AddRow(a, row)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, rg, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        let rg = self.rg(&[a]);
        self.push(value, rg, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let rg = self.rg(&[a]);
        self.push(value, rg, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        let rg = self.rg(&[a]);
        self.push(value, rg, Op::LeakyRelu(a, slope))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(libm::tanh);
        let rg = self.rg(&[a]);
        self.push(value, rg, Op::Tanh(a))
    }

    /// `x` for `x > 0`, `exp(x) - 1` otherwise.
    pub fn elu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| if v > 0.0 { v } else { libm::expm1(v) });
        let rg = self.rg(&[a]);
        self.push(value, rg, Op::Elu(a))
    }

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut value = Matrix::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            softmax_into(x.row(r), value.row_mut(r));
        }
        let rg = self.rg(&[a]);
        self.push(value, rg, Op::RowSoftmax(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = Matrix::hcat(&[self.value(a), self.value(b)])?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, rg, Op::ConcatCols(a, b)))
    }

    pub fn select_row(&mut self, a: Var, r: usize) -> Result<Var> {
        let x = self.value(a);
        if r >= x.rows() {
            return Err(Error::IndexOutOfRange {
                what: "row",
                index: r,
                limit: x.rows(),
            });
        }
        let value = Matrix::row_vector(x.row(r).to_vec());
        let rg = self.rg(&[a]);
        Ok(self.push(value, rg, Op::SelectRow(a, r)))
    }

    /// Divides the whole tensor by its L2 norm.
    pub fn l2_normalize(&mut self, v: Var) -> Result<Var> {
        let norm = self.value(v).frobenius_norm();
        if norm < 1e-12 {
            return Err(Error::DegenerateCoefficients { norm });
        }
        let value = self.value(v).scale(1.0 / norm);
        let rg = self.rg(&[v]);
        Ok(self.push(value, rg, Op::L2Normalize(v)))
    }

    /// Divides each row by `max(‖row‖₂, eps)`; zero rows stay zero.
    pub fn row_normalize(&mut self, a: Var, eps: f64) -> Var {
        let x = self.value(a);
        let mut value = x.clone();
        for r in 0..x.rows() {
            let n = libm::sqrt(x.row(r).iter().map(|v| v * v).sum::<f64>()).max(eps);
            for v in value.row_mut(r) {
                *v /= n;
            }
        }
        let rg = self.rg(&[a]);
        self.push(value, rg, Op::RowNormalize(a, eps))
    }

    /// `Σ_k coeffs[k] · terms[k]` for a coefficient tensor with one entry per term.
    pub fn weighted_sum(&mut self, coeffs: Var, terms: &[Var]) -> Result<Var> {
        let c = self.value(coeffs);
        if c.len() != terms.len() || terms.is_empty() {
            return Err(Error::Shape {
                op: "weighted_sum",
                lhs: c.shape(),
                rhs: (terms.len(), 1),
            });
        }
        for &t in &terms[1..] {
            self.same_shape(terms[0], t, "weighted_sum")?;
        }
        let c = c.data().to_vec();
        let mut value = Matrix::zeros(self.shape(terms[0]).0, self.shape(terms[0]).1);
        for (k, &t) in terms.iter().enumerate() {
            value.axpy(c[k], self.value(t))?;
        }
        let mut deps = terms.to_vec();
        deps.push(coeffs);
        let rg = self.rg(&deps);
        Ok(self.push(
            value,
            rg,
            Op::WeightedSum {
                coeffs,
                terms: terms.to_vec(),
            },
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::filled(1, 1, self.value(a).sum());
        let rg = self.rg(&[a]);
        self.push(value, rg, Op::Sum(a))
    }

    /// Mean negative log-softmax likelihood of `labels` over the rows in `mask`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize], mask: &[usize]) -> Result<Var> {
        if mask.is_empty() {
            return Err(Error::EmptyMask("cross_entropy"));
        }
        let z = self.value(logits);
        if labels.len() != z.rows() {
            return Err(Error::Shape {
                op: "cross_entropy",
                lhs: z.shape(),
                rhs: (labels.len(), 1),
            });
        }
        let classes = z.cols();
        let mut probs = Matrix::zeros(mask.len(), classes);
        let mut loss = 0.0;
        for (m, &i) in mask.iter().enumerate() {
            if i >= z.rows() {
                return Err(Error::IndexOutOfRange {
                    what: "mask row",
                    index: i,
                    limit: z.rows(),
                });
            }
            let y = labels[i];
            if y >= classes {
                return Err(Error::IndexOutOfRange {
                    what: "label",
                    index: y,
                    limit: classes,
                });
            }
            let row = z.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + libm::log(row.iter().map(|v| libm::exp(v - max)).sum::<f64>());
            loss += lse - row[y];
            softmax_into(row, probs.row_mut(m));
        }
        let value = Matrix::filled(1, 1, loss / mask.len() as f64);
        let rg = self.rg(&[logits]);
        Ok(self.push(
            value,
            rg,
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                mask: mask.to_vec(),
                probs,
            },
        ))
    }

    fn check_node_vector(&self, v: Var, n: usize, op: &'static str) -> Result<()> {
        if self.shape(v) != (n, 1) {
            return Err(Error::Shape {
                op,
                lhs: (n, 1),
                rhs: self.shape(v),
            });
        }
        Ok(())
    }

    /// Per-edge score `src[i] + dst[j]` for every stored entry (i, j) of
    /// `pattern`. Either side may be omitted. Output is nnz×1.
    pub fn edge_scores(&mut self, pattern: &Arc<SparseMatrix>, src: Option<Var>, dst: Option<Var>) -> Result<Var> {
        let n = pattern.rows();
        let mut value = Matrix::zeros(pattern.nnz(), 1);
        if let Some(s) = src {
            self.check_node_vector(s, n, "edge_scores")?;
            let sv = self.value(s).data();
            for r in 0..n {
                for e in pattern.row_range(r) {
                    value.data_mut()[e] += sv[r];
                }
            }
        }
        if let Some(d) = dst {
            self.check_node_vector(d, pattern.cols(), "edge_scores")?;
            let dv = self.value(d).data();
            for (e, &c) in pattern.col_indices().iter().enumerate() {
                value.data_mut()[e] += dv[c];
            }
        }
        let deps: Vec<Var> = src.into_iter().chain(dst).collect();
        let rg = self.rg(&deps);
        Ok(self.push(
            value,
            rg,
            Op::EdgeScores {
                pattern: Arc::clone(pattern),
                src,
                dst,
            },
        ))
    }

    /// Per-edge inner product `⟨a_i, b_j⟩`. Output is nnz×1.
    pub fn edge_dot(&mut self, pattern: &Arc<SparseMatrix>, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "edge_dot")?;
        if self.shape(a).0 != pattern.rows() || pattern.rows() != pattern.cols() {
            return Err(Error::Shape {
                op: "edge_dot",
                lhs: pattern.shape(),
                rhs: self.shape(a),
            });
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut value = Matrix::zeros(pattern.nnz(), 1);
        for r in 0..pattern.rows() {
            for e in pattern.row_range(r) {
                let c = pattern.col_indices()[e];
                value.data_mut()[e] = dot(av.row(r), bv.row(c));
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(
            value,
            rg,
            Op::EdgeDot {
                pattern: Arc::clone(pattern),
                a,
                b,
            },
        ))
    }

    /// Softmax of edge scores within each row of `pattern`.
    pub fn edge_softmax(&mut self, pattern: &Arc<SparseMatrix>, scores: Var) -> Result<Var> {
        self.check_node_vector(scores, pattern.nnz(), "edge_softmax")?;
        let s = self.value(scores).data();
        let mut value = Matrix::zeros(pattern.nnz(), 1);
        for r in 0..pattern.rows() {
            let range = pattern.row_range(r);
            if !range.is_empty() {
                softmax_into(&s[range.clone()], &mut value.data_mut()[range]);
            }
        }
        let rg = self.rg(&[scores]);
        Ok(self.push(
            value,
            rg,
            Op::EdgeSoftmax {
                pattern: Arc::clone(pattern),
                scores,
            },
        ))
    }

    /// `out_i = Σ_{(i,j) ∈ pattern} w_ij · x_j` with per-edge weights from a
    /// nnz×1 tensor.
    pub fn edge_aggregate(&mut self, pattern: &Arc<SparseMatrix>, weights: Var, x: Var) -> Result<Var> {
        self.check_node_vector(weights, pattern.nnz(), "edge_aggregate")?;
        if self.shape(x).0 != pattern.cols() {
            return Err(Error::Shape {
                op: "edge_aggregate",
                lhs: pattern.shape(),
                rhs: self.shape(x),
            });
        }
        let weighted = pattern.with_values(self.value(weights).data().to_vec())?;
        let value = weighted.mul_dense(self.value(x))?;
        let rg = self.rg(&[weights, x]);
        Ok(self.push(
            value,
            rg,
            Op::EdgeAggregate {
                pattern: Arc::clone(pattern),
                weights,
                x,
            },
        ))
    }

    /// Elementwise max over the neighbors listed in each row of `pattern`;
    /// rows without neighbors produce zeros.
    pub fn neighbor_max(&mut self, pattern: &Arc<SparseMatrix>, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rows() != pattern.cols() {
            return Err(Error::Shape {
                op: "neighbor_max",
                lhs: pattern.shape(),
                rhs: xv.shape(),
            });
        }
        let c = xv.cols();
        let mut value = Matrix::zeros(pattern.rows(), c);
        let mut argmax = vec![NO_SOURCE; pattern.rows() * c];
        for r in 0..pattern.rows() {
            let range = pattern.row_range(r);
            if range.is_empty() {
                continue;
            }
            let out = value.row_mut(r);
            out.fill(f64::NEG_INFINITY);
            for e in range {
                let j = pattern.col_indices()[e];
                for (k, &v) in xv.row(j).iter().enumerate() {
                    if v > out[k] {
                        out[k] = v;
                        argmax[r * c + k] = j;
                    }
                }
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(value, rg, Op::NeighborMax { x, argmax }))
    }

    /// Reverse sweep from a scalar `loss`. Returns gradients for every
    /// trainable leaf and clears the tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::NonScalarLoss(shape));
        }
        let nodes = core::mem::take(&mut self.nodes);
        let mut grads: Vec<Option<Matrix>> = (0..nodes.len()).map(|_| None).collect();
        if nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Matrix::ones(1, 1));
        }
        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            backprop(&nodes, node, &g, &mut grads);
        }
        for (i, node) in nodes.iter().enumerate() {
            if !(matches!(node.op, Op::Leaf) && node.requires_grad) {
                grads[i] = None;
            } else if grads[i].is_none() {
                grads[i] = Some(Matrix::zeros(node.value.rows(), node.value.cols()));
            }
        }
        Ok(Gradients { grads })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax_into(x: &[f64], out: &mut [f64]) {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = libm::exp(v - max);
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

fn accumulate(nodes: &[Node], grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    if !nodes[v.0].requires_grad {
        return;
    }
    match &mut grads[v.0] {
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn wants(nodes: &[Node], v: Var) -> bool {
    nodes[v.0].requires_grad
}

fn backprop(nodes: &[Node], node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
    let val = |v: Var| &nodes[v.0].value;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            if wants(nodes, *a) {
                let ga = g.matmul_t(val(*b)).expect("matmul backward shapes");
                accumulate(nodes, grads, *a, ga);
            }
            if wants(nodes, *b) {
                let gb = val(*a).t_matmul(g).expect("matmul backward shapes");
                accumulate(nodes, grads, *b, gb);
            }
        }
        Op::SpMM(s, d) => {
            let gd = s.t_mul_dense(g).expect("spmm backward shapes");
            accumulate(nodes, grads, *d, gd);
        }
        Op::Add(a, b) => {
            if wants(nodes, *a) {
                accumulate(nodes, grads, *a, g.clone());
            }
            accumulate(nodes, grads, *b, g.clone());
        }
        Op::Sub(a, b) => {
            if wants(nodes, *a) {
                accumulate(nodes, grads, *a, g.clone());
            }
            if wants(nodes, *b) {
                accumulate(nodes, grads, *b, g.scale(-1.0));
            }
        }
        Op::AddRow(a, row) => {
            if wants(nodes, *a) {
                accumulate(nodes, grads, *a, g.clone());
            }
            if wants(nodes, *row) {
                let mut gr = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, &v) in gr.data_mut().iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                accumulate(nodes, grads, *row, gr);
            }
        }
        Op::Mul(a, b) => {
            if wants(nodes, *a) {
                accumulate(nodes, grads, *a, g.zip_map(val(*b), |x, y| x * y));
            }
            if wants(nodes, *b) {
                accumulate(nodes, grads, *b, g.zip_map(val(*a), |x, y| x * y));
            }
        }
        Op::Scale(a, s) => accumulate(nodes, grads, *a, g.scale(*s)),
        Op::Relu(a) => {
            let ga = g.zip_map(val(*a), |gv, x| if x > 0.0 { gv } else { 0.0 });
            accumulate(nodes, grads, *a, ga);
        }
        Op::LeakyRelu(a, slope) => {
            let ga = g.zip_map(val(*a), |gv, x| if x > 0.0 { gv } else { slope * gv });
            accumulate(nodes, grads, *a, ga);
        }
        Op::Tanh(a) => {
            let ga = g.zip_map(&node.value, |gv, y| gv * (1.0 - y * y));
            accumulate(nodes, grads, *a, ga);
        }
        Op::Elu(a) => {
            let ga = g.zip_map(&node.value, |gv, y| if y > 0.0 { gv } else { gv * (y + 1.0) });
            accumulate(nodes, grads, *a, ga);
        }
        Op::RowSoftmax(a) => {
            let y = &node.value;
            let mut ga = Matrix::zeros(y.rows(), y.cols());
            for r in 0..y.rows() {
                let inner = dot(g.row(r), y.row(r));
                for ((o, &gv), &yv) in ga.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                    *o = yv * (gv - inner);
                }
            }
            accumulate(nodes, grads, *a, ga);
        }
        Op::ConcatCols(a, b) => {
            let ca = val(*a).cols();
            if wants(nodes, *a) {
                let ga = Matrix::from_fn(g.rows(), ca, |i, j| g.get(i, j));
                accumulate(nodes, grads, *a, ga);
            }
            if wants(nodes, *b) {
                let gb = Matrix::from_fn(g.rows(), g.cols() - ca, |i, j| g.get(i, ca + j));
                accumulate(nodes, grads, *b, gb);
            }
        }
        Op::SelectRow(a, r) => {
            let src = val(*a);
            let mut ga = Matrix::zeros(src.rows(), src.cols());
            ga.row_mut(*r).copy_from_slice(g.data());
            accumulate(nodes, grads, *a, ga);
        }
        Op::L2Normalize(v) => {
            let y = &node.value;
            let norm = val(*v).frobenius_norm();
            let inner = dot(g.data(), y.data());
            let gv = g.zip_map(y, |gv, yv| (gv - yv * inner) / norm);
            accumulate(nodes, grads, *v, gv);
        }
        Op::RowNormalize(a, eps) => {
            let x = val(*a);
            let y = &node.value;
            let mut ga = Matrix::zeros(x.rows(), x.cols());
            for r in 0..x.rows() {
                let n = libm::sqrt(dot(x.row(r), x.row(r)));
                let gr = g.row(r);
                if n > *eps {
                    let inner = dot(gr, y.row(r));
                    for ((o, &gv), &yv) in ga.row_mut(r).iter_mut().zip(gr).zip(y.row(r)) {
                        *o = (gv - yv * inner) / n;
                    }
                } else {
                    for (o, &gv) in ga.row_mut(r).iter_mut().zip(gr) {
                        *o = gv / eps;
                    }
                }
            }
            accumulate(nodes, grads, *a, ga);
        }
        Op::WeightedSum { coeffs, terms } => {
            let c = val(*coeffs).data();
            for (k, &t) in terms.iter().enumerate() {
                if wants(nodes, t) {
                    accumulate(nodes, grads, t, g.scale(c[k]));
                }
            }
            if wants(nodes, *coeffs) {
                let (r, cc) = val(*coeffs).shape();
                let gc: Vec<f64> = terms.iter().map(|&t| dot(g.data(), val(t).data())).collect();
                accumulate(nodes, grads, *coeffs, Matrix::new(r, cc, gc).expect("coefficient shape"));
            }
        }
        Op::Sum(a) => {
            let (r, c) = val(*a).shape();
            accumulate(nodes, grads, *a, Matrix::filled(r, c, g.data()[0]));
        }
        Op::CrossEntropy {
            logits,
            labels,
            mask,
            probs,
        } => {
            let z = val(*logits);
            let mut gz = Matrix::zeros(z.rows(), z.cols());
            let scale = g.data()[0] / mask.len() as f64;
            for (m, &i) in mask.iter().enumerate() {
                let dst = gz.row_mut(i);
                for (o, &p) in dst.iter_mut().zip(probs.row(m)) {
                    *o += scale * p;
                }
                dst[labels[i]] -= scale;
            }
            accumulate(nodes, grads, *logits, gz);
        }
        Op::EdgeScores { pattern, src, dst } => {
            let gd = g.data();
            if let Some(s) = src.filter(|s| wants(nodes, *s)) {
                let mut gs = Matrix::zeros(pattern.rows(), 1);
                for r in 0..pattern.rows() {
                    gs.data_mut()[r] = pattern.row_range(r).map(|e| gd[e]).sum();
                }
                accumulate(nodes, grads, s, gs);
            }
            if let Some(d) = dst.filter(|d| wants(nodes, *d)) {
                let mut gdst = Matrix::zeros(pattern.cols(), 1);
                for (e, &c) in pattern.col_indices().iter().enumerate() {
                    gdst.data_mut()[c] += gd[e];
                }
                accumulate(nodes, grads, d, gdst);
            }
        }
        Op::EdgeDot { pattern, a, b } => {
            let (av, bv) = (val(*a), val(*b));
            let gd = g.data();
            let mut ga = Matrix::zeros(av.rows(), av.cols());
            let mut gb = Matrix::zeros(bv.rows(), bv.cols());
            for r in 0..pattern.rows() {
                for e in pattern.row_range(r) {
                    let c = pattern.col_indices()[e];
                    let w = gd[e];
                    for (o, &v) in ga.row_mut(r).iter_mut().zip(bv.row(c)) {
                        *o += w * v;
                    }
                    for (o, &v) in gb.row_mut(c).iter_mut().zip(av.row(r)) {
                        *o += w * v;
                    }
                }
            }
            if wants(nodes, *a) {
                accumulate(nodes, grads, *a, ga);
            }
            if wants(nodes, *b) {
                accumulate(nodes, grads, *b, gb);
            }
        }
        Op::EdgeSoftmax { pattern, scores } => {
            let y = node.value.data();
            let gd = g.data();
            let mut gs = Matrix::zeros(pattern.nnz(), 1);
            for r in 0..pattern.rows() {
                let range = pattern.row_range(r);
                let inner: f64 = range.clone().map(|e| gd[e] * y[e]).sum();
                for e in range {
                    gs.data_mut()[e] = y[e] * (gd[e] - inner);
                }
            }
            accumulate(nodes, grads, *scores, gs);
        }
        Op::EdgeAggregate { pattern, weights, x } => {
            let w = val(*weights).data();
            let xv = val(*x);
            if wants(nodes, *weights) {
                let mut gw = Matrix::zeros(pattern.nnz(), 1);
                for r in 0..pattern.rows() {
                    for e in pattern.row_range(r) {
                        gw.data_mut()[e] = dot(g.row(r), xv.row(pattern.col_indices()[e]));
                    }
                }
                accumulate(nodes, grads, *weights, gw);
            }
            if wants(nodes, *x) {
                let weighted = pattern.with_values(w.to_vec()).expect("edge weights");
                accumulate(nodes, grads, *x, weighted.t_mul_dense(g).expect("aggregate shapes"));
            }
        }
        Op::NeighborMax { x, argmax } => {
            let xv = val(*x);
            let c = xv.cols();
            let mut gx = Matrix::zeros(xv.rows(), c);
            for (idx, &src) in argmax.iter().enumerate() {
                if src != NO_SOURCE {
                    let (r, k) = (idx / c, idx % c);
                    let cur = gx.get(src, k);
                    gx.set(src, k, cur + g.get(r, k));
                }
            }
            accumulate(nodes, grads, *x, gx);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use rand::Rng;

    fn random(rng: &mut crate::Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    /// Central finite differences of a scalar function of one matrix input.
    fn numeric_grad(x: &Matrix, f: &dyn Fn(&Matrix) -> f64) -> Matrix {
        let h = 1e-6;
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.len() {
            let mut p = x.clone();
            p.data_mut()[i] += h;
            let mut m = x.clone();
            m.data_mut()[i] -= h;
            out.data_mut()[i] = (f(&p) - f(&m)) / (2.0 * h);
        }
        out
    }

    fn check(x: Matrix, build: impl Fn(&mut Tape, Var) -> Var, tol: f64) {
        let mut tape = Tape::new();
        let v = tape.param(x.clone());
        let loss = build(&mut tape, v);
        let grads = tape.backward(loss).unwrap();
        let analytic = grads.get(v).unwrap().clone();
        let numeric = numeric_grad(&x, &|m| {
            let mut t = Tape::new();
            let v = t.param(m.clone());
            let l = build(&mut t, v);
            t.scalar(l)
        });
        let err = analytic.relative_error(&numeric);
        assert!(err <= tol, "relative error {err:e}");
    }

    /// Weighted sum with fixed random weights so every output entry matters.
    fn probe(tape: &mut Tape, y: Var, seed: u64) -> Var {
        let mut rng = crate::rng_from_seed(seed);
        let (r, c) = tape.value(y).shape();
        let w = tape.constant(random(&mut rng, r, c));
        let p = tape.mul(y, w).unwrap();
        tape.sum(p)
    }

    #[test]
    fn matmul_grad_matches_fd() {
        let mut rng = crate::rng_from_seed(1);
        let b = random(&mut rng, 4, 3);
        check(
            random(&mut rng, 5, 4),
            |t, a| {
                let bv = t.constant(b.clone());
                let y = t.matmul(a, bv).unwrap();
                t.sum(y)
            },
            1e-7,
        );
    }

    #[test]
    fn softmax_rows_sum_to_one_and_grad() {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::from_rows(&[[1.0, 1.0, 1.0, 1.0], [3.0, -2.0, 0.5, 7.0]]));
        let y = tape.row_softmax(x);
        for r in 0..2 {
            assert!((tape.value(y).row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        assert!(tape.value(y).row(0).iter().all(|&p| (p - 0.25).abs() < 1e-15));
        let mut rng = crate::rng_from_seed(2);
        check(
            random(&mut rng, 3, 4),
            |t, a| {
                let y = t.row_softmax(a);
                probe(t, y, 9)
            },
            1e-6,
        );
    }

    #[test]
    fn elu_grad_matches_fd() {
        let mut rng = crate::rng_from_seed(12);
        check(
            random(&mut rng, 4, 3),
            |t, a| {
                let y = t.elu(a);
                probe(t, y, 13)
            },
            1e-6,
        );
    }

    #[test]
    fn relu_values_and_zero_subgradient() {
        let mut tape = Tape::new();
        let x = tape.param(Matrix::row_vector(vec![-1.0, 0.0, 2.0]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
        let s = tape.sum(y);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn l2_normalize_values_and_grad() {
        let mut tape = Tape::new();
        let a = tape.constant(Matrix::row_vector(vec![3.0, 4.0]));
        let b = tape.constant(Matrix::row_vector(vec![1.0; 4]));
        let na = tape.l2_normalize(a).unwrap();
        let nb = tape.l2_normalize(b).unwrap();
        assert!(tape.value(na).max_abs_diff(&Matrix::row_vector(vec![0.6, 0.8])) < 1e-15);
        assert!(tape.value(nb).data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let mut rng = crate::rng_from_seed(3);
        check(
            random(&mut rng, 1, 6),
            |t, a| {
                let y = t.l2_normalize(a).unwrap();
                probe(t, y, 4)
            },
            1e-6,
        );
    }

    #[test]
    fn l2_normalize_rejects_zero() {
        let mut tape = Tape::new();
        let a = tape.constant(Matrix::zeros(1, 3));
        assert!(matches!(tape.l2_normalize(a), Err(Error::DegenerateCoefficients { .. })));
    }

    #[test]
    fn cross_entropy_values_and_grad() {
        let mut tape = Tape::new();
        let z = tape.constant(Matrix::zeros(3, 5));
        let l = tape.cross_entropy(z, &[0, 1, 4], &[0, 1, 2]).unwrap();
        assert!((tape.scalar(l) - libm::log(5.0)).abs() < 1e-12);
        let z2 = tape.constant(Matrix::from_rows(&[[4.0, 0.0, 0.0], [0.0, 4.0, 0.0]]));
        let l2 = tape.cross_entropy(z2, &[0, 1], &[0, 1]).unwrap();
        assert!(tape.scalar(l2) < libm::log(3.0));
        assert!(matches!(tape.cross_entropy(z2, &[0, 1], &[]), Err(Error::EmptyMask(_))));
        let mut rng = crate::rng_from_seed(5);
        check(
            random(&mut rng, 6, 4),
            |t, a| t.cross_entropy(a, &[0, 3, 1, 2, 2, 0], &[0, 2, 3, 5]).unwrap(),
            1e-6,
        );
    }

    #[test]
    fn backward_sum_and_fan_out() {
        let mut tape = Tape::new();
        let x = tape.param(Matrix::ones(2, 3));
        let s = tape.sum(x);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &Matrix::ones(2, 3));
        assert!(tape.is_empty());

        let x = tape.param(Matrix::row_vector(vec![1.5, -2.0]));
        let y = tape.add(x, x).unwrap();
        let s = tape.sum(y);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(Matrix::ones(2, 2));
        assert_eq!(tape.backward(x).unwrap_err(), Error::NonScalarLoss((2, 2)));
    }

    #[test]
    fn constants_never_get_gradients() {
        let mut tape = Tape::new();
        let c = tape.constant(Matrix::ones(2, 2));
        let p = tape.param(Matrix::ones(2, 2));
        let y = tape.mul(c, p).unwrap();
        let s = tape.sum(y);
        let g = tape.backward(s).unwrap();
        assert!(g.get(c).is_none());
        assert!(g.get(p).is_some());
    }

    #[test]
    fn graph_attention_ops_grad() {
        let pattern = Arc::new(
            SparseMatrix::from_triplets(
                4,
                4,
                &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0), (1, 2, 1.0), (2, 2, 1.0), (2, 3, 1.0), (3, 3, 1.0)],
            )
            .unwrap(),
        );
        let mut rng = crate::rng_from_seed(6);
        let a_src = random(&mut rng, 3, 1);
        let a_dst = random(&mut rng, 3, 1);
        let p = pattern.clone();
        check(
            random(&mut rng, 4, 3),
            move |t, h| {
                let asv = t.constant(a_src.clone());
                let adv = t.constant(a_dst.clone());
                let s = t.matmul(h, asv).unwrap();
                let d = t.matmul(h, adv).unwrap();
                let e = t.edge_scores(&p, Some(s), Some(d)).unwrap();
                let e = t.leaky_relu(e, 0.2);
                let w = t.edge_softmax(&p, e).unwrap();
                let y = t.edge_aggregate(&p, w, h).unwrap();
                let y = t.tanh(y);
                probe(t, y, 7)
            },
            1e-6,
        );
        let p = pattern.clone();
        check(
            random(&mut rng, 4, 3),
            move |t, h| {
                let n = t.row_normalize(h, 1e-12);
                let e = t.edge_dot(&p, n, n).unwrap();
                let w = t.edge_softmax(&p, e).unwrap();
                let y = t.edge_aggregate(&p, w, h).unwrap();
                probe(t, y, 8)
            },
            1e-6,
        );
        let p = pattern;
        check(
            random(&mut rng, 4, 3),
            move |t, h| {
                let m = t.neighbor_max(&p, h).unwrap();
                let c = t.concat_cols(h, m).unwrap();
                probe(t, c, 10)
            },
            1e-6,
        );
    }

    #[test]
    fn weighted_sum_and_select_row_grad() {
        let mut rng = crate::rng_from_seed(12);
        let terms: Vec<Matrix> = (0..3).map(|_| random(&mut rng, 4, 2)).collect();
        check(
            random(&mut rng, 2, 3),
            move |t, alpha| {
                let row = t.select_row(alpha, 1).unwrap();
                let c = t.l2_normalize(row).unwrap();
                let vs: Vec<Var> = terms.iter().map(|m| t.constant(m.clone())).collect();
                let y = t.weighted_sum(c, &vs).unwrap();
                probe(t, y, 13)
            },
            1e-6,
        );
    }

    #[test]
    fn add_row_broadcast_only() {
        let mut tape = Tape::new();
        let a = tape.param(Matrix::zeros(3, 2));
        let good = tape.param(Matrix::row_vector(vec![1.0, 2.0]));
        let bad = tape.param(Matrix::zeros(2, 2));
        assert!(tape.add_row(a, bad).is_err());
        let y = tape.add_row(a, good).unwrap();
        let s = tape.sum(y);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(good).unwrap().data(), &[3.0, 3.0]);
        let mut tape = Tape::new();
        let a = tape.param(Matrix::zeros(3, 2));
        let b = tape.param(Matrix::zeros(2, 3));
        assert!(matches!(tape.add(a, b), Err(Error::Shape { .. })));
    }
}
