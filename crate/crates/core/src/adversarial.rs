//! Neighbor sampling and construction of graph-adversarial and
//! virtual-adversarial feature perturbations.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diff::{DenseMatrix, Tape, Var};
use crate::error::{Error, Result};
use crate::gcn::{gcn_forward, predict, Dropout, GcnParams};
use crate::graph::{node_degrees, pagerank_default, NormalizedAdjacency, SparseMatrix};
use crate::rng::RunRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingStrategy {
    Uniform,
    /// Weight proportional to the neighbor's degree.
    Degree,
    /// Weight proportional to the reciprocal of the neighbor's degree.
    DegreeReverse,
    /// Weight proportional to the neighbor's PageRank score.
    #[serde(rename = "pagerank")]
    PageRank,
}

impl SamplingStrategy {
    pub const ALL: [SamplingStrategy; 4] = [
        SamplingStrategy::Uniform,
        SamplingStrategy::Degree,
        SamplingStrategy::DegreeReverse,
        SamplingStrategy::PageRank,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SamplingStrategy::Uniform => "uniform",
            SamplingStrategy::Degree => "degree",
            SamplingStrategy::DegreeReverse => "degree-reverse",
            SamplingStrategy::PageRank => "pagerank",
        }
    }
}

impl fmt::Display for SamplingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::usage(format!(
                    "unknown sampling strategy {s:?} (expected uniform, degree, degree-reverse, pagerank)"
                ))
            })
    }
}

/// Sampled `(node, neighbor)` pairs, at most `k` per node.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSample {
    pub pairs: Vec<(usize, usize)>,
    pub strategy: SamplingStrategy,
    pub k: usize,
}

/// Per-node neighbor weights, computed once per graph and strategy.
#[derive(Debug, Clone)]
pub struct NeighborSampler {
    adjacency: SparseMatrix,
    weights: Vec<f64>,
    strategy: SamplingStrategy,
}

impl NeighborSampler {
    pub fn new(adjacency: &SparseMatrix, strategy: SamplingStrategy) -> Result<Self> {
        let degrees = node_degrees(adjacency);
        let weights = match strategy {
            SamplingStrategy::Uniform => vec![1.0; degrees.len()],
            SamplingStrategy::Degree => degrees.iter().map(|&d| d as f64).collect(),
            SamplingStrategy::DegreeReverse => degrees
                .iter()
                .map(|&d| if d > 0 { 1.0 / d as f64 } else { 0.0 })
                .collect(),
            SamplingStrategy::PageRank => pagerank_default(adjacency)?,
        };
        Ok(Self {
            adjacency: adjacency.clone(),
            weights,
            strategy,
        })
    }

    /// For every node, `k` neighbors drawn without replacement with
    /// probability proportional to the strategy weight, renormalized over
    /// that node's neighborhood. Nodes with at most `k` neighbors keep all.
    pub fn sample(&self, k: usize, rng: &mut RunRng) -> Result<NeighborSample> {
        if k == 0 {
            return Err(Error::usage("k must be at least 1"));
        }
        let mut pairs = Vec::new();
        for i in 0..self.adjacency.n_rows() {
            let neighbors = self.adjacency.row(i).0;
            if neighbors.len() <= k {
                pairs.extend(neighbors.iter().map(|&j| (i, j)));
                continue;
            }
            let chosen = neighbors
                .choose_multiple_weighted(rng, k, |&j| self.weights[j])
                .map_err(|e| Error::validation(format!("sampling weights for node {i}: {e}")))?;
            pairs.extend(chosen.map(|&j| (i, j)));
        }
        Ok(NeighborSample {
            pairs,
            strategy: self.strategy,
            k,
        })
    }
}

pub fn sample_neighbors(
    adjacency: &SparseMatrix,
    k: usize,
    strategy: SamplingStrategy,
    rng: &mut RunRng,
) -> Result<NeighborSample> {
    NeighborSampler::new(adjacency, strategy)?.sample(k, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PerturbationKind {
    Graph,
    Virtual,
}

/// Per-node feature perturbations; every row has norm 0 or `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSet {
    pub r: DenseMatrix,
    pub epsilon: f64,
    pub kind: PerturbationKind,
}

impl PerturbationSet {
    pub fn zeros(n: usize, f: usize, epsilon: f64, kind: PerturbationKind) -> Self {
        Self {
            r: DenseMatrix::zeros(n, f),
            epsilon,
            kind,
        }
    }

    /// Scales each row of `gradient` to norm `epsilon`. Rows that are exactly
    /// zero have no direction and stay zero.
    pub fn from_gradient(gradient: &DenseMatrix, epsilon: f64, kind: PerturbationKind) -> Self {
        let mut r = gradient.clone();
        for i in 0..r.n_rows() {
            let row = r.row_mut(i);
            let peak = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if peak == 0.0 {
                continue;
            }
            // Pre-scale by the peak so tiny or huge gradients normalize cleanly.
            row.iter_mut().for_each(|v| *v /= peak);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            row.iter_mut().for_each(|v| *v *= epsilon / norm);
        }
        Self { r, epsilon, kind }
    }

    pub fn row_norms(&self) -> Vec<f64> {
        self.r
            .rows()
            .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// `x + r`.
    pub fn apply(&self, x: &DenseMatrix) -> DenseMatrix {
        x.add(&self.r)
    }
}

/// A graph-adversarial perturbation and the clean predictions it was
/// computed against.
#[derive(Debug, Clone)]
pub struct GraphAdversarial {
    pub perturbation: PerturbationSet,
    pub clean_probs: DenseMatrix,
}

/// Linearized worst-case perturbation against neighbor agreement.
///
/// One forward pass at the clean input gives predictions `P`; the gradient
/// `g = ∇_X Σ_{(i,j)} d(P_i, P_j)` treats every `P_j` as a constant and is
/// obtained with one backward sweep; each row becomes `ε g_i / ‖g_i‖`.
pub fn graph_adv_perturbation(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    params: &GcnParams,
    sample: &NeighborSample,
    epsilon: f64,
) -> Result<GraphAdversarial> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::usage(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone(), true);
    let pv = params.register(&mut tape, false);
    let probs = gcn_forward(&mut tape, adj, xv, &pv, Dropout::Off)?;
    let perturbation = graph_adv_on_tape(&mut tape, xv, probs, sample, epsilon)?;
    Ok(GraphAdversarial {
        perturbation,
        clean_probs: tape.value(probs).clone(),
    })
}

/// The backward half of [`graph_adv_perturbation`], for callers that already
/// recorded the clean forward pass `probs = f(x)` with `x` differentiable.
pub fn graph_adv_on_tape(
    tape: &mut Tape,
    x: Var,
    probs: Var,
    sample: &NeighborSample,
    epsilon: f64,
) -> Result<PerturbationSet> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::usage(format!("epsilon must be positive, got {epsilon}")));
    }
    let (rows, f) = tape.value(x).shape();
    if sample.pairs.is_empty() {
        return Ok(PerturbationSet::zeros(rows, f, epsilon, PerturbationKind::Graph));
    }
    let (sources, targets): (Vec<usize>, Vec<usize>) = sample.pairs.iter().copied().unzip();
    let neighbor_probs = gather(tape.value(probs), &targets);
    let own = tape.gather_rows(probs, &sources)?;
    let kl = tape.kl_rows(own, neighbor_probs)?;
    let total = tape.sum(kl);
    let grad = tape.backward(total, &[x])?.remove(0);
    Ok(PerturbationSet::from_gradient(&grad, epsilon, PerturbationKind::Graph))
}

/// A virtual-adversarial perturbation and the targets `ỹ` it attacks.
#[derive(Debug, Clone)]
pub struct VirtualAdversarial {
    pub perturbation: PerturbationSet,
    pub targets: DenseMatrix,
}

/// Targets for the virtual term: one-hot labels on `labeled` nodes, the
/// current predictions elsewhere.
pub fn virtual_targets(clean_probs: &DenseMatrix, labeled: &[(usize, usize)]) -> DenseMatrix {
    let mut targets = clean_probs.clone();
    for &(i, c) in labeled {
        targets.row_mut(i).fill(0.0);
        targets[(i, c)] = 1.0;
    }
    targets
}

/// Single power-iteration estimate of the most sensitive input direction.
///
/// With `ỹ` from [`virtual_targets`] and random unit rows `d`,
/// `g = ∇_r Σ_i d(f(x_i + r), ỹ_i)` evaluated at `r = ξ d`, and each row
/// becomes `ε′ g_i / ‖g_i‖`.
pub fn virtual_adv_perturbation(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    params: &GcnParams,
    labeled: &[(usize, usize)],
    epsilon: f64,
    xi: f64,
    rng: &mut RunRng,
) -> Result<VirtualAdversarial> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::usage(format!("virtual epsilon must be positive, got {epsilon}")));
    }
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(Error::usage(format!("xi must be positive, got {xi}")));
    }
    let clean = predict(adj, x, params)?;
    let targets = virtual_targets(&clean, labeled);
    let perturbation = virtual_adv_from_targets(adj, x, params, &targets, epsilon, xi, rng)?;
    Ok(VirtualAdversarial { perturbation, targets })
}

/// The power-iteration step of [`virtual_adv_perturbation`] for precomputed
/// targets: one forward pass at `x + ξ d` and one backward sweep.
pub fn virtual_adv_from_targets(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    params: &GcnParams,
    targets: &DenseMatrix,
    epsilon: f64,
    xi: f64,
    rng: &mut RunRng,
) -> Result<PerturbationSet> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::usage(format!("virtual epsilon must be positive, got {epsilon}")));
    }
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(Error::usage(format!("xi must be positive, got {xi}")));
    }
    let (rows, f) = x.shape();
    let mut probe = DenseMatrix::from_vec(
        rows,
        f,
        (0..rows * f).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
    );
    for i in 0..rows {
        let row = probe.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v *= xi / norm);
        }
    }

    let mut tape = Tape::new();
    let shifted = tape.leaf(x.add(&probe), true);
    let pv = params.register(&mut tape, false);
    let probs = gcn_forward(&mut tape, adj, shifted, &pv, Dropout::Off)?;
    let kl = tape.kl_rows(probs, targets.clone())?;
    let total = tape.sum(kl);
    let grad = tape.backward(total, &[shifted])?.remove(0);
    Ok(PerturbationSet::from_gradient(
        &grad,
        epsilon,
        PerturbationKind::Virtual,
    ))
}

pub(crate) fn gather(m: &DenseMatrix, rows: &[usize]) -> DenseMatrix {
    let mut data = Vec::with_capacity(rows.len() * m.n_cols());
    for &i in rows {
        data.extend_from_slice(m.row(i));
    }
    DenseMatrix::from_vec(rows.len(), m.n_cols(), data)
}
