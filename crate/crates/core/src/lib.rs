//! Graph adversarial training for two-layer graph convolutional networks.
//!
//! The crate trains a GCN for transductive node classification under four
//! regimes: plain supervised training, virtual adversarial training (VAT),
//! graph adversarial training (GraphAT), and both regularizers together
//! (GraphVAT). Adversarial modes perturb node features along the gradient
//! of a divergence, either between a node and its sampled neighbors or
//! between a node and its own current prediction, and penalize the
//! resulting divergence during training.
//!
//! Modules, bottom-up:
//! - [`graph`]: CSR matrices, datasets, propagation matrices, PageRank,
//!   stochastic block model generation, and the GDF file format.
//! - [`diff`]: dense matrices and the reverse-mode tape.
//! - [`gcn`]: parameters, forward pass, supervised objective, checkpoints.
//! - [`adversarial`]: neighbor sampling and perturbation construction.
//! - [`trainer`]: composite objectives, Adam, early stopping, sweeps.
//! - [`eval`]: accuracy, degree groups, neighbor divergence, attacks.

pub mod adversarial;
pub mod diff;
pub mod error;
pub mod eval;
pub mod gcn;
pub mod graph;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
