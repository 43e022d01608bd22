#![allow(dead_code)]

use graphat::adversarial::{
    graph_adv_perturbation, sample_neighbors, virtual_adv_perturbation, NeighborSample, PerturbationSet,
    SamplingStrategy,
};
use graphat::diff::{kl_rows_value, DenseMatrix, Tape};
use graphat::gcn::{gcn_forward, predict, Dropout, GcnParams};
use graphat::graph::{adjacency_from_edges, normalize_adjacency, NormalizedAdjacency, SparseMatrix};
use graphat::trainer::{composite_objective, GraphTerm, Mode, ObjectiveInputs, TrainConfig, VirtualTerm};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect())
}

/// Random connected-ish graph: a spanning path plus extra edges with probability `p`.
pub fn random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> SparseMatrix {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
    for i in 0..n {
        for j in i + 2..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    adjacency_from_edges(n, &edges).unwrap()
}

pub fn random_params(f: usize, d: usize, l: usize, rng: &mut ChaCha8Rng) -> GcnParams {
    GcnParams {
        w1: uniform(f, d, -1.0, 1.0, rng),
        b1: uniform(1, d, -0.5, 0.5, rng),
        w2: uniform(d, l, -1.0, 1.0, rng),
        b2: uniform(1, l, -0.5, 0.5, rng),
    }
}

/// A small problem with frozen perturbations for every objective.
pub struct Instance {
    pub adjacency: SparseMatrix,
    pub adj: NormalizedAdjacency,
    pub x: DenseMatrix,
    pub params: GcnParams,
    pub train_targets: Vec<(usize, usize)>,
    pub sample: NeighborSample,
    pub graph_r: PerturbationSet,
    pub neighbor_probs: DenseMatrix,
    pub virtual_r: PerturbationSet,
    pub virtual_targets: DenseMatrix,
}

impl Instance {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.random_range(2..=10);
        let f = rng.random_range(1..=8);
        let l = rng.random_range(2..=4);
        let d = rng.random_range(2..=6);
        let adjacency = random_graph(n, 0.3, rng);
        let adj = normalize_adjacency(&adjacency).unwrap();
        let x = uniform(n, f, 0.0, 1.0, rng);
        let params = random_params(f, d, l, rng);
        let mut train_targets = Vec::new();
        for i in 0..n {
            if rng.random_bool(0.5) {
                train_targets.push((i, rng.random_range(0..l)));
            }
        }
        if train_targets.is_empty() {
            train_targets.push((0, rng.random_range(0..l)));
        }
        let mut stream = graphat::rng::stream(rng.random(), graphat::rng::Stream::NeighborSampling);
        let sample = sample_neighbors(&adjacency, 2, SamplingStrategy::Uniform, &mut stream).unwrap();
        let graph = graph_adv_perturbation(&adj, &x, &params, &sample, 0.1).unwrap();
        let virt = virtual_adv_perturbation(&adj, &x, &params, &train_targets, 0.1, 1e-6, &mut stream).unwrap();
        Instance {
            adjacency,
            adj,
            x,
            params,
            train_targets,
            sample,
            graph_r: graph.perturbation,
            neighbor_probs: graph.clean_probs,
            virtual_r: virt.perturbation,
            virtual_targets: virt.targets,
        }
    }

    /// Smallest |pre-activation| of the hidden layer over every input the
    /// objectives evaluate, so callers can avoid ReLU kinks.
    pub fn relu_margin(&self) -> f64 {
        [
            self.x.clone(),
            self.graph_r.apply(&self.x),
            self.virtual_r.apply(&self.x),
        ]
        .iter()
        .map(|input| {
            let mut xw = input.matmul(&self.params.w1);
            for i in 0..xw.n_rows() {
                for (k, v) in xw.row_mut(i).iter_mut().enumerate() {
                    *v += self.params.b1[(0, k)];
                }
            }
            let z = self.adj.matrix().matmul_dense(&xw);
            z.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
        })
        .fold(f64::INFINITY, f64::min)
    }

    pub fn config(mode: Mode) -> TrainConfig {
        TrainConfig {
            beta: 0.7,
            alpha: 0.9,
            weight_decay: 0.01,
            ..TrainConfig::for_mode(mode)
        }
    }

    /// Objective value and its gradients w.r.t. `[W1, b1, W2, b2, X]`.
    pub fn objective(&self, mode: Mode, params: &GcnParams, x: &DenseMatrix) -> (f64, Vec<DenseMatrix>) {
        let config = Self::config(mode);
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone(), true);
        let pv = params.register(&mut tape, true);
        let inputs = ObjectiveInputs {
            adj: &self.adj,
            train_targets: &self.train_targets,
            graph: Some(GraphTerm {
                perturbation: &self.graph_r,
                sample: &self.sample,
                neighbor_probs: &self.neighbor_probs,
            }),
            virtual_term: Some(VirtualTerm {
                perturbation: &self.virtual_r,
                targets: &self.virtual_targets,
            }),
        };
        let terms = composite_objective(&mut tape, &inputs, xv, &pv, &config, Dropout::Off, Dropout::Off).unwrap();
        let mut leaves = pv.as_array().to_vec();
        leaves.push(xv);
        let grads = tape.backward(terms.total, &leaves).unwrap();
        (tape.scalar(terms.total).unwrap(), grads)
    }

    fn value(&self, mode: Mode, params: &GcnParams, x: &DenseMatrix) -> f64 {
        self.objective(mode, params, x).0
    }

    /// Worst norm-wise relative error between analytic and central-difference
    /// gradients across all five leaves.
    pub fn gradient_error(&self, mode: Mode, step: f64) -> f64 {
        self.gradient_errors(mode, step).into_iter().fold(0.0, f64::max)
    }

    /// Per-leaf norm-wise relative errors, in `[W1, b1, W2, b2, X]` order.
    pub fn gradient_errors(&self, mode: Mode, step: f64) -> Vec<f64> {
        let (_, analytic) = self.objective(mode, &self.params, &self.x);
        let mut errors = Vec::with_capacity(analytic.len());
        for (leaf, grad) in analytic.iter().enumerate() {
            let mut numeric = DenseMatrix::zeros(grad.n_rows(), grad.n_cols());
            for idx in 0..grad.data().len() {
                let mut params = self.params.clone();
                let mut x = self.x.clone();
                let mut eval = |delta: f64| {
                    let target = if leaf < 4 {
                        &mut params.tensors_mut()[leaf].data_mut()[idx]
                    } else {
                        &mut x.data_mut()[idx]
                    };
                    let saved = *target;
                    *target = saved + delta;
                    let v = self.value(mode, &params, &x);
                    let target = if leaf < 4 {
                        &mut params.tensors_mut()[leaf].data_mut()[idx]
                    } else {
                        &mut x.data_mut()[idx]
                    };
                    *target = saved;
                    v
                };
                numeric.data_mut()[idx] = (eval(step) - eval(-step)) / (2.0 * step);
            }
            let diff = grad.zip_map(&numeric, |a, b| a - b).frobenius_norm_squared().sqrt();
            let scale = grad
                .frobenius_norm_squared()
                .sqrt()
                .max(numeric.frobenius_norm_squared().sqrt())
                .max(1e-7);
            errors.push(diff / scale);
        }
        errors
    }
}

/// Draws instances until one keeps every ReLU pre-activation at least
/// `margin` away from zero.
pub fn smooth_instance(rng: &mut ChaCha8Rng, margin: f64) -> Instance {
    loop {
        let inst = Instance::random(rng);
        if inst.relu_margin() > margin {
            return inst;
        }
    }
}

/// `Σ_{(i,j)} d(f(x + r)_i, p_j)` with `p` the clean predictions.
pub fn neighbor_divergence(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    params: &GcnParams,
    sample: &NeighborSample,
    clean: &DenseMatrix,
) -> f64 {
    let probs = predict(adj, x, params).unwrap();
    let rows = |m: &DenseMatrix, idx: Vec<usize>| {
        DenseMatrix::from_rows(&idx.iter().map(|&i| m.row(i).to_vec()).collect::<Vec<_>>())
    };
    let own = rows(&probs, sample.pairs.iter().map(|p| p.0).collect());
    let neighbor = rows(clean, sample.pairs.iter().map(|p| p.1).collect());
    kl_rows_value(&own, &neighbor).sum()
}

/// Clean forward with `X` recorded, for callers that need the raw tape.
pub fn clean_forward(adj: &NormalizedAdjacency, x: &DenseMatrix, params: &GcnParams) -> DenseMatrix {
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone(), false);
    let pv = params.register(&mut tape, false);
    let probs = gcn_forward(&mut tape, adj, xv, &pv, Dropout::Off).unwrap();
    tape.value(probs).clone()
}
