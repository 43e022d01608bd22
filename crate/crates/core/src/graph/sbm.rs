use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{adjacency_from_edges, Dataset, SparseMatrix};
use crate::rng::{stream, Stream};

/// Parameters of a planted-partition graph with class-correlated features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    pub num_classes: usize,
    pub nodes_per_class: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub noise_scale: f64,
    pub seed: u64,
    pub train_per_class: usize,
    pub num_val: usize,
    pub num_test: usize,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            num_classes: 2,
            nodes_per_class: 100,
            p_in: 0.05,
            p_out: 0.005,
            feature_dim: 16,
            noise_scale: 2.0,
            seed: 0,
            train_per_class: 20,
            num_val: 500,
            num_test: 1000,
        }
    }
}

/// Samples a stochastic block model dataset.
///
/// Nodes `c·n .. (c+1)·n` belong to class `c`. Each unordered pair is an edge
/// with probability `p_in` inside a class and `p_out` across classes. The
/// feature space is cut into `num_classes` contiguous blocks; a node gets 1.0
/// on its own class block plus `noise_scale · U(0, 1)` on every feature.
///
/// Split: up to `train_per_class` labeled nodes per class (always leaving at
/// least one node of the class out), then of the remaining nodes
/// `min(num_val, remaining / 2)` go to validation and up to `num_test` of the
/// rest to test.
pub fn generate_sbm(config: &SbmConfig) -> Result<Dataset> {
    let SbmConfig {
        num_classes,
        nodes_per_class,
        p_in,
        p_out,
        feature_dim,
        noise_scale,
        seed,
        ..
    } = *config;
    for (name, p) in [("p_in", p_in), ("p_out", p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::usage(format!("{name} = {p} is not a probability")));
        }
    }
    if num_classes == 0 || nodes_per_class == 0 {
        return Err(Error::usage("need at least one class and one node per class"));
    }
    if feature_dim < num_classes {
        return Err(Error::usage(format!(
            "feature_dim {feature_dim} smaller than num_classes {num_classes}"
        )));
    }
    if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
        return Err(Error::usage(format!(
            "noise_scale {noise_scale} must be finite and >= 0"
        )));
    }

    let mut rng = stream(seed, Stream::Generator);
    let n = num_classes * nodes_per_class;
    let class_of = |i: usize| i / nodes_per_class;

    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if class_of(i) == class_of(j) { p_in } else { p_out };
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }

    let block_of = |f: usize| f * num_classes / feature_dim;
    let mut triplets = Vec::with_capacity(n * feature_dim);
    for i in 0..n {
        for f in 0..feature_dim {
            let signal = if block_of(f) == class_of(i) { 1.0 } else { 0.0 };
            let value = signal + noise_scale * rng.random::<f64>();
            if value != 0.0 {
                triplets.push((i, f, value));
            }
        }
    }

    let per_class = config.train_per_class.min(nodes_per_class - 1);
    let mut train = Vec::new();
    let mut rest = Vec::new();
    for c in 0..num_classes {
        let mut members: Vec<usize> = (c * nodes_per_class..(c + 1) * nodes_per_class).collect();
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..per_class]);
        rest.extend_from_slice(&members[per_class..]);
    }
    rest.shuffle(&mut rng);
    let num_val = config.num_val.min(rest.len() / 2);
    let num_test = config.num_test.min(rest.len() - num_val);
    let mut val = rest[..num_val].to_vec();
    let mut test = rest[num_val..num_val + num_test].to_vec();
    if train.is_empty() || val.is_empty() || test.is_empty() {
        return Err(Error::usage(format!(
            "split is empty (train {}, val {}, test {})",
            train.len(),
            val.len(),
            test.len()
        )));
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();

    Dataset::new(
        format!("sbm-{num_classes}x{nodes_per_class}-seed{seed}"),
        num_classes,
        adjacency_from_edges(n, &edges)?,
        SparseMatrix::from_triplets(n, feature_dim, triplets)?,
        (0..n).map(|i| Some(class_of(i))).collect(),
        train,
        val,
        test,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certain_blocks_give_disjoint_cliques() {
        let ds = generate_sbm(&SbmConfig {
            nodes_per_class: 3,
            p_in: 1.0,
            p_out: 0.0,
            ..Default::default()
        })
        .unwrap();
        let edges: Vec<_> = ds.edges().collect();
        assert_eq!(edges, vec![(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)]);
    }

    #[test]
    fn same_seed_same_dataset() {
        let cfg = SbmConfig {
            seed: 42,
            ..Default::default()
        };
        assert_eq!(generate_sbm(&cfg).unwrap(), generate_sbm(&cfg).unwrap());
        let other = SbmConfig { seed: 43, ..cfg };
        assert_ne!(generate_sbm(&other).unwrap().edges().count(), 0);
    }

    #[test]
    fn edge_count_within_three_sigma_of_binomial_mean() {
        // Intra pairs: 2·C(100,2) at 0.05; inter pairs: 100·100 at 0.005.
        let intra: f64 = 2.0 * 4950.0;
        let inter: f64 = 10_000.0;
        let mean = intra * 0.05 + inter * 0.005;
        let sd = (intra * 0.05 * 0.95 + inter * 0.005 * 0.995).sqrt();
        assert!((mean - 545.0).abs() < 1e-9);
        for seed in 0..5 {
            let ds = generate_sbm(&SbmConfig {
                seed,
                ..Default::default()
            })
            .unwrap();
            let m = ds.num_edges() as f64;
            assert!((m - mean).abs() <= 3.0 * sd, "seed {seed}: {m} edges");
        }
    }

    #[test]
    fn split_sizes() {
        let ds = generate_sbm(&SbmConfig::default()).unwrap();
        assert_eq!(ds.train_nodes().len(), 40);
        assert_eq!(ds.val_nodes().len(), 80);
        assert_eq!(ds.test_nodes().len(), 80);
        let big = generate_sbm(&SbmConfig {
            num_classes: 3,
            nodes_per_class: 600,
            p_in: 0.005,
            p_out: 0.0005,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(
            (big.train_nodes().len(), big.val_nodes().len(), big.test_nodes().len()),
            (60, 500, 1000)
        );
    }

    #[test]
    fn invalid_parameters() {
        let bad = |cfg: SbmConfig| generate_sbm(&cfg).is_err();
        assert!(bad(SbmConfig {
            p_in: 1.5,
            ..Default::default()
        }));
        assert!(bad(SbmConfig {
            p_out: -0.1,
            ..Default::default()
        }));
        assert!(bad(SbmConfig {
            nodes_per_class: 1,
            ..Default::default()
        }));
        assert!(bad(SbmConfig {
            feature_dim: 1,
            ..Default::default()
        }));
    }
}
