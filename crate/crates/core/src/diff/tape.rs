use std::sync::Arc;

use crate::diff::{counters, DenseMatrix};
use crate::error::{Error, Result};
use crate::graph::SparseMatrix;

/// Probabilities are clamped to `[PROB_FLOOR, 1]` before every logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0)
}

/// Derivative of `ln(clamp(p))` with respect to `p`.
#[inline]
fn dlog_clamped(p: f64) -> f64 {
    if p > PROB_FLOOR {
        1.0 / p
    } else {
        0.0
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    SparseMatMul(Arc<SparseMatrix>, Var),
    AddRowBias(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    MulConst(Var, DenseMatrix),
    Relu(Var),
    SoftmaxRows(Var),
    MaskedCrossEntropy { probs: Var, targets: Vec<(usize, usize)> },
    KlRows { p: Var, q: DenseMatrix },
    GatherRows(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
    FrobeniusNormSquared(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: DenseMatrix,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of primitive operations and their forward values.
///
/// Nodes are stored in creation order, so every operation refers only to
/// earlier nodes and the record is acyclic by construction.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

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

    /// Records an input. Only `differentiable` leaves can be passed to
    /// [`Tape::backward`].
    pub fn leaf(&mut self, value: DenseMatrix, differentiable: bool) -> Var {
        self.push(value, Op::Leaf, differentiable)
    }

    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        self.value(v)
            .as_scalar()
            .ok_or_else(|| Error::usage("node is not a scalar"))
    }

    fn push(&mut self, value: DenseMatrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(Error::usage(format!("matmul {sa:?} x {sb:?}")));
        }
        let value = self.value(a).matmul(self.value(b));
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// `sparse · b` with a constant sparse left operand.
    pub fn sparse_matmul(&mut self, sparse: &Arc<SparseMatrix>, b: Var) -> Result<Var> {
        if sparse.n_cols() != self.shape(b).0 {
            return Err(Error::usage(format!(
                "sparse {}x{} times {:?}",
                sparse.n_rows(),
                sparse.n_cols(),
                self.shape(b)
            )));
        }
        let value = sparse.matmul_dense(self.value(b));
        let rg = self.needs(b);
        Ok(self.push(value, Op::SparseMatMul(Arc::clone(sparse), b), rg))
    }

    /// Adds the 1×n row `bias` to every row of `a`.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sb != (1, sa.1) {
            return Err(Error::usage(format!("bias {sb:?} for matrix {sa:?}")));
        }
        let mut value = self.value(a).clone();
        let b = self.value(bias).row(0).to_vec();
        for r in 0..sa.0 {
            for (x, &bb) in value.row_mut(r).iter_mut().zip(&b) {
                *x += bb;
            }
        }
        let rg = self.needs(a) || self.needs(bias);
        Ok(self.push(value, Op::AddRowBias(a, bias), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::usage(format!("add {:?} + {:?}", self.shape(a), self.shape(b))));
        }
        let value = self.value(a).add(self.value(b));
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).scale(c);
        let rg = self.needs(a);
        self.push(value, Op::Scale(a, c), rg)
    }

    /// Elementwise product with a constant matrix (dropout masks).
    pub fn mul_const(&mut self, a: Var, mask: DenseMatrix) -> Result<Var> {
        if self.shape(a) != mask.shape() {
            return Err(Error::usage("mask shape mismatch"));
        }
        let value = self.value(a).zip_map(&mask, |x, m| x * m);
        let rg = self.needs(a);
        Ok(self.push(value, Op::MulConst(a, mask), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let rg = self.needs(a);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let mut value = src.clone();
        for r in 0..value.n_rows() {
            let row = value.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            for x in row.iter_mut() {
                *x /= total;
            }
        }
        let rg = self.needs(a);
        self.push(value, Op::SoftmaxRows(a), rg)
    }

    /// Mean of `-ln p[i, y]` over the `(row, class)` targets.
    pub fn masked_cross_entropy(&mut self, probs: Var, targets: &[(usize, usize)]) -> Result<Var> {
        if targets.is_empty() {
            return Err(Error::usage("cross-entropy over an empty node set"));
        }
        let p = self.value(probs);
        if let Some(&(r, c)) = targets.iter().find(|&&(r, c)| r >= p.n_rows() || c >= p.n_cols()) {
            return Err(Error::usage(format!("target ({r}, {c}) outside probabilities")));
        }
        let total: f64 = targets.iter().map(|&(r, c)| -clamp_prob(p[(r, c)]).ln()).sum();
        let value = DenseMatrix::scalar(total / targets.len() as f64);
        let rg = self.needs(probs);
        Ok(self.push(
            value,
            Op::MaskedCrossEntropy {
                probs,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    /// Per-row `Σ_c q_c (ln q_c − ln p_c)` with `q` held constant. Output is n×1.
    pub fn kl_rows(&mut self, p: Var, q: DenseMatrix) -> Result<Var> {
        if self.shape(p) != q.shape() {
            return Err(Error::usage(format!(
                "kl_rows {:?} vs target {:?}",
                self.shape(p),
                q.shape()
            )));
        }
        let value = kl_rows_value(self.value(p), &q);
        let rg = self.needs(p);
        Ok(self.push(value, Op::KlRows { p, q }, rg))
    }

    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let src = self.value(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= src.n_rows()) {
            return Err(Error::usage(format!("gather index {bad} out of range")));
        }
        let cols = src.n_cols();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(src.row(i));
        }
        let value = DenseMatrix::from_vec(indices.len(), cols, data);
        let rg = self.needs(a);
        Ok(self.push(value, Op::GatherRows(a, indices.to_vec()), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = DenseMatrix::scalar(self.value(a).sum());
        let rg = self.needs(a);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        let n = m.n_rows() * m.n_cols();
        if n == 0 {
            return Err(Error::usage("mean of an empty matrix"));
        }
        let value = DenseMatrix::scalar(m.sum() / n as f64);
        let rg = self.needs(a);
        Ok(self.push(value, Op::Mean(a), rg))
    }

    pub fn frobenius_norm_squared(&mut self, a: Var) -> Var {
        let value = DenseMatrix::scalar(self.value(a).frobenius_norm_squared());
        let rg = self.needs(a);
        self.push(value, Op::FrobeniusNormSquared(a), rg)
    }

    /// Reverse sweep from the scalar `target`, returning `∂target/∂leaf` for
    /// each requested leaf in order. Leaves that do not influence `target`
    /// get zero gradients.
    pub fn backward(&self, target: Var, leaves: &[Var]) -> Result<Vec<DenseMatrix>> {
        if target.0 >= self.nodes.len() {
            return Err(Error::usage("target is not on this tape"));
        }
        if self.shape(target) != (1, 1) {
            return Err(Error::usage("backward target must be a scalar"));
        }
        for &leaf in leaves {
            let node = self
                .nodes
                .get(leaf.0)
                .ok_or_else(|| Error::usage("leaf is not on this tape"))?;
            if !matches!(node.op, Op::Leaf) || !node.requires_grad {
                return Err(Error::usage(format!("node {} is not a differentiable leaf", leaf.0)));
            }
        }
        counters::record_backward();

        let mut grads: Vec<Option<DenseMatrix>> = vec![None; target.0 + 1];
        grads[target.0] = Some(DenseMatrix::scalar(1.0));

        for idx in (0..=target.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }

        Ok(leaves
            .iter()
            .map(|&leaf| {
                grads.get_mut(leaf.0).and_then(Option::take).unwrap_or_else(|| {
                    let (r, c) = self.shape(leaf);
                    DenseMatrix::zeros(r, c)
                })
            })
            .collect())
    }

    fn propagate(&self, node: &Node, g: &DenseMatrix, grads: &mut [Option<DenseMatrix>]) {
        let mut accumulate = |v: Var, contribution: DenseMatrix| {
            if !self.needs(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&contribution),
                slot @ None => *slot = Some(contribution),
            }
        };

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    accumulate(*a, g.matmul_transpose(self.value(*b)));
                }
                if self.needs(*b) {
                    accumulate(*b, self.value(*a).transpose_matmul(g));
                }
            }
            Op::SparseMatMul(s, b) => accumulate(*b, s.transpose_matmul_dense(g)),
            Op::AddRowBias(a, bias) => {
                accumulate(*a, g.clone());
                if self.needs(*bias) {
                    let mut col_sums = DenseMatrix::zeros(1, g.n_cols());
                    for row in g.rows() {
                        for (s, &x) in col_sums.row_mut(0).iter_mut().zip(row) {
                            *s += x;
                        }
                    }
                    accumulate(*bias, col_sums);
                }
            }
            Op::Add(a, b) => {
                accumulate(*a, g.clone());
                accumulate(*b, g.clone());
            }
            Op::Scale(a, c) => accumulate(*a, g.scale(*c)),
            Op::MulConst(a, mask) => accumulate(*a, g.zip_map(mask, |x, m| x * m)),
            Op::Relu(a) => accumulate(*a, self.value(*a).zip_map(g, |x, gx| if x > 0.0 { gx } else { 0.0 })),
            Op::SoftmaxRows(a) => {
                let p = &node.value;
                let mut dz = DenseMatrix::zeros(p.n_rows(), p.n_cols());
                for r in 0..p.n_rows() {
                    let (pr, gr) = (p.row(r), g.row(r));
                    // p_c Σ_k p_k (g_c − g_k): equal to p_c (g_c − Σ_k p_k g_k) when
                    // rows sum to one, and exactly zero for row-constant g.
                    for (c, d) in dz.row_mut(r).iter_mut().enumerate() {
                        let s: f64 = pr.iter().zip(gr).map(|(&pk, &gk)| pk * (gr[c] - gk)).sum();
                        *d = pr[c] * s;
                    }
                }
                accumulate(*a, dz);
            }
            Op::MaskedCrossEntropy { probs, targets } => {
                let p = self.value(*probs);
                let scale = g.data()[0] / targets.len() as f64;
                let mut dp = DenseMatrix::zeros(p.n_rows(), p.n_cols());
                for &(r, c) in targets {
                    dp[(r, c)] -= scale * dlog_clamped(p[(r, c)]);
                }
                accumulate(*probs, dp);
            }
            Op::KlRows { p, q } => {
                let pv = self.value(*p);
                let mut dp = DenseMatrix::zeros(pv.n_rows(), pv.n_cols());
                for r in 0..pv.n_rows() {
                    let gr = g[(r, 0)];
                    for c in 0..pv.n_cols() {
                        dp[(r, c)] = -gr * q[(r, c)] * dlog_clamped(pv[(r, c)]);
                    }
                }
                accumulate(*p, dp);
            }
            Op::GatherRows(a, indices) => {
                let (rows, cols) = self.shape(*a);
                let mut da = DenseMatrix::zeros(rows, cols);
                for (k, &i) in indices.iter().enumerate() {
                    for (d, &x) in da.row_mut(i).iter_mut().zip(g.row(k)) {
                        *d += x;
                    }
                }
                accumulate(*a, da);
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                accumulate(*a, DenseMatrix::filled(r, c, g.data()[0]));
            }
            Op::Mean(a) => {
                let (r, c) = self.shape(*a);
                accumulate(*a, DenseMatrix::filled(r, c, g.data()[0] / (r * c) as f64));
            }
            Op::FrobeniusNormSquared(a) => {
                let gs = g.data()[0];
                accumulate(*a, self.value(*a).scale(2.0 * gs));
            }
        }
    }
}

/// Per-row divergence `Σ_c q_c (ln q_c − ln p_c)` with clamped logarithms,
/// returned as an n×1 column. Terms with `q_c = 0` contribute nothing.
pub fn kl_rows_value(p: &DenseMatrix, q: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(p.n_rows(), 1);
    for r in 0..p.n_rows() {
        out[(r, 0)] = p
            .row(r)
            .iter()
            .zip(q.row(r))
            .filter(|(_, &qc)| qc != 0.0)
            .map(|(&pc, &qc)| qc * (clamp_prob(qc).ln() - clamp_prob(pc).ln()))
            .sum();
    }
    out
}
