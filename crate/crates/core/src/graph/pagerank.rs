use crate::error::{Error, Result};
use crate::graph::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PageRankConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankConfig {
    fn default() -> Self {
        Self {
            damping: 0.85,
            tol: 1e-10,
            max_iter: 1000,
        }
    }
}

/// PageRank with the default damping, tolerance, and iteration cap.
pub fn pagerank_default(adjacency: &SparseMatrix) -> Result<Vec<f64>> {
    pagerank(adjacency, PageRankConfig::default())
}

/// Power iteration of the damped random walk on an undirected graph.
///
/// Teleportation is uniform. Mass sitting on nodes without neighbors is
/// spread uniformly over all nodes. Iteration stops once the L1 change
/// between successive iterates falls below `tol`.
pub fn pagerank(adjacency: &SparseMatrix, config: PageRankConfig) -> Result<Vec<f64>> {
    let PageRankConfig { damping, tol, max_iter } = config;
    if !(damping > 0.0 && damping < 1.0) {
        return Err(Error::usage(format!("damping {damping} not in (0, 1)")));
    }
    let n = adjacency.n_rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let uniform = 1.0 / n as f64;
    let degree: Vec<usize> = (0..n).map(|i| adjacency.row_nnz(i)).collect();
    let mut rank = vec![uniform; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;

    for _ in 0..max_iter {
        let dangling: f64 = (0..n).filter(|&i| degree[i] == 0).map(|i| rank[i]).sum();
        let base = (1.0 - damping) * uniform + damping * dangling * uniform;
        for (i, slot) in next.iter_mut().enumerate() {
            let inflow: f64 = adjacency.row(i).0.iter().map(|&j| rank[j] / degree[j] as f64).sum();
            *slot = base + damping * inflow;
        }
        residual = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if residual < tol {
            return Ok(rank);
        }
    }
    Err(Error::PageRankNotConverged {
        iterations: max_iter,
        residual,
        last_iterate: rank,
    })
}
