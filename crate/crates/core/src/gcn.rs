//! Two-layer graph convolutional network.
//!
//! `probs = softmax(Â · (relu(Â · (X W1 + b1)) W2 + b2))`

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{counters, DenseMatrix, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::rng::{stream, RunRng, Stream};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnParams {
    pub w1: DenseMatrix,
    pub b1: DenseMatrix,
    pub w2: DenseMatrix,
    pub b2: DenseMatrix,
}

impl GcnParams {
    /// Glorot-uniform weights and zero biases, drawn from the run's init stream.
    pub fn init(num_features: usize, hidden: usize, num_classes: usize, seed: u64) -> Self {
        let mut rng = stream(seed, Stream::Init);
        Self {
            w1: glorot_init(num_features, hidden, &mut rng),
            b1: DenseMatrix::zeros(1, hidden),
            w2: glorot_init(hidden, num_classes, &mut rng),
            b2: DenseMatrix::zeros(1, num_classes),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &DenseMatrix| DenseMatrix::zeros(m.n_rows(), m.n_cols());
        Self {
            w1: z(&self.w1),
            b1: z(&self.b1),
            w2: z(&self.w2),
            b2: z(&self.b2),
        }
    }

    pub fn num_features(&self) -> usize {
        self.w1.n_rows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.n_cols()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.n_cols()
    }

    pub fn tensors(&self) -> [&DenseMatrix; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut DenseMatrix; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn validate(&self) -> Result<()> {
        let (f, d, l) = (self.num_features(), self.hidden(), self.num_classes());
        if self.b1.shape() != (1, d) || self.w2.n_rows() != d || self.b2.shape() != (1, l) {
            return Err(Error::validation(format!(
                "inconsistent parameter shapes: w1 {:?} b1 {:?} w2 {:?} b2 {:?}",
                self.w1.shape(),
                self.b1.shape(),
                self.w2.shape(),
                self.b2.shape()
            )));
        }
        if f == 0 || d == 0 || l == 0 {
            return Err(Error::validation("parameter dimensions must be positive"));
        }
        if !self.tensors().iter().all(|t| t.is_finite()) {
            return Err(Error::validation("non-finite parameter"));
        }
        Ok(())
    }

    /// Records the parameters on `tape`.
    pub fn register(&self, tape: &mut Tape, differentiable: bool) -> ParamVars {
        ParamVars {
            w1: tape.leaf(self.w1.clone(), differentiable),
            b1: tape.leaf(self.b1.clone(), differentiable),
            w2: tape.leaf(self.w2.clone(), differentiable),
            b2: tape.leaf(self.b2.clone(), differentiable),
        }
    }

    /// `‖W1‖² + ‖W2‖²`; biases carry no weight decay.
    pub fn weight_penalty(&self) -> f64 {
        self.w1.frobenius_norm_squared() + self.w2.frobenius_norm_squared()
    }
}

/// Tape handles for one registration of [`GcnParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl ParamVars {
    pub fn as_array(&self) -> [Var; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }

    /// Reassembles gradients returned by `backward(.., &self.as_array())`.
    pub fn collect(grads: Vec<DenseMatrix>) -> GcnParams {
        let [w1, b1, w2, b2]: [DenseMatrix; 4] = grads.try_into().expect("four parameter gradients");
        GcnParams { w1, b1, w2, b2 }
    }
}

/// Uniform on `±sqrt(6 / (n_in + n_out))`.
pub fn glorot_init(n_in: usize, n_out: usize, rng: &mut RunRng) -> DenseMatrix {
    let bound = (6.0 / (n_in + n_out) as f64).sqrt();
    let data = (0..n_in * n_out).map(|_| rng.random_range(-bound..=bound)).collect();
    DenseMatrix::from_vec(n_in, n_out, data)
}

pub enum Dropout<'a> {
    Off,
    /// Inverted dropout: kept entries are scaled by `1 / (1 - rate)`.
    On {
        rate: f64,
        rng: &'a mut RunRng,
    },
}

impl Dropout<'_> {
    fn apply(&mut self, tape: &mut Tape, v: Var) -> Result<Var> {
        match self {
            Dropout::On { rate, rng } if *rate > 0.0 => {
                let (r, c) = tape.value(v).shape();
                let keep = 1.0 - *rate;
                let mask = (0..r * c)
                    .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                tape.mul_const(v, DenseMatrix::from_vec(r, c, mask))
            }
            _ => Ok(v),
        }
    }
}

/// Records one forward pass and returns the row-stochastic prediction node.
pub fn gcn_forward(
    tape: &mut Tape,
    adj: &NormalizedAdjacency,
    x: Var,
    params: &ParamVars,
    mut dropout: Dropout<'_>,
) -> Result<Var> {
    let (n, f) = tape.value(x).shape();
    let (pf, _) = tape.value(params.w1).shape();
    if n != adj.num_nodes() || f != pf {
        return Err(Error::usage(format!(
            "features {n}x{f} incompatible with {} nodes and {pf} input weights",
            adj.num_nodes()
        )));
    }
    counters::record_forward();

    let a = adj.matrix();
    let x = dropout.apply(tape, x)?;
    let h = tape.matmul(x, params.w1)?;
    let h = tape.add_row_bias(h, params.b1)?;
    let h = tape.sparse_matmul(a, h)?;
    let h = tape.relu(h);
    let h = dropout.apply(tape, h)?;
    let z = tape.matmul(h, params.w2)?;
    let z = tape.add_row_bias(z, params.b2)?;
    let z = tape.sparse_matmul(a, z)?;
    Ok(tape.softmax_rows(z))
}

/// Dropout-free predictions without keeping the tape.
pub fn predict(adj: &NormalizedAdjacency, x: &DenseMatrix, params: &GcnParams) -> Result<DenseMatrix> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let pv = params.register(&mut tape, false);
    let probs = gcn_forward(&mut tape, adj, xv, &pv, Dropout::Off)?;
    Ok(tape.value(probs).clone())
}

/// Mean cross-entropy over `targets` plus `λ (‖W1‖² + ‖W2‖²)`.
pub fn gcn_objective(
    tape: &mut Tape,
    probs: Var,
    targets: &[(usize, usize)],
    params: &ParamVars,
    weight_decay: f64,
) -> Result<Var> {
    if targets.is_empty() {
        return Err(Error::usage("supervised objective needs at least one labeled node"));
    }
    let ce = tape.masked_cross_entropy(probs, targets)?;
    let p1 = tape.frobenius_norm_squared(params.w1);
    let p2 = tape.frobenius_norm_squared(params.w2);
    let penalty = tape.add(p1, p2)?;
    let penalty = tape.scale(penalty, weight_decay);
    tape.add(ce, penalty)
}

/// Trained parameters together with the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub params: GcnParams,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        ckpt.params.validate()?;
        Ok(ckpt)
    }
}
