//! Attributed graphs, propagation matrices, and graph statistics.

mod dataset;
pub mod gdf;
mod pagerank;
mod sbm;
mod sparse;

use std::sync::Arc;

pub use dataset::Dataset;
pub use pagerank::{pagerank, pagerank_default, PageRankConfig};
pub use sbm::{generate_sbm, SbmConfig};
pub use sparse::SparseMatrix;

use crate::error::{Error, Result};

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃ = D + I`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    matrix: Arc<SparseMatrix>,
}

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &Arc<SparseMatrix> {
        &self.matrix
    }

    pub fn num_nodes(&self) -> usize {
        self.matrix.n_rows()
    }

    /// The identity propagation (an edgeless graph).
    pub fn identity(n: usize) -> Self {
        Self {
            matrix: Arc::new(SparseMatrix::identity(n)),
        }
    }
}

/// Checks that `adjacency` is square, symmetric, binary, and loop-free.
pub fn validate_adjacency(adjacency: &SparseMatrix) -> Result<()> {
    if adjacency.n_rows() != adjacency.n_cols() {
        return Err(Error::validation("adjacency must be square"));
    }
    for (r, c, v) in adjacency.triplets() {
        if r == c {
            return Err(Error::validation(format!("self-loop on node {r}")));
        }
        if v != 1.0 {
            return Err(Error::validation(format!(
                "non-binary adjacency entry ({r}, {c}) = {v}"
            )));
        }
    }
    if !adjacency.is_symmetric() {
        return Err(Error::validation("adjacency is not symmetric"));
    }
    Ok(())
}

pub fn normalize_adjacency(adjacency: &SparseMatrix) -> Result<NormalizedAdjacency> {
    validate_adjacency(adjacency)?;
    let n = adjacency.n_rows();
    let degree: Vec<f64> = (0..n).map(|i| (adjacency.row_nnz(i) + 1) as f64).collect();

    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(adjacency.nnz() + n);
    let mut values = Vec::with_capacity(adjacency.nnz() + n);
    row_offsets.push(0);
    for i in 0..n {
        let (cols, _) = adjacency.row(i);
        let split = cols.partition_point(|&c| c < i);
        let mut push = |j: usize| {
            col_indices.push(j);
            values.push(1.0 / (degree[i] * degree[j]).sqrt());
        };
        cols[..split].iter().for_each(|&j| push(j));
        push(i);
        cols[split..].iter().for_each(|&j| push(j));
        row_offsets.push(col_indices.len());
    }
    let matrix = SparseMatrix::from_csr(n, n, row_offsets, col_indices, values)?;
    Ok(NormalizedAdjacency {
        matrix: Arc::new(matrix),
    })
}

/// Neighbor counts, self-loops excluded.
pub fn node_degrees(adjacency: &SparseMatrix) -> Vec<usize> {
    (0..adjacency.n_rows())
        .map(|i| adjacency.row(i).0.iter().filter(|&&j| j != i).count())
        .collect()
}

/// Symmetric binary adjacency from undirected pairs; each pair may appear in
/// either orientation, repeated pairs collapse to one edge.
pub fn adjacency_from_edges(n: usize, edges: &[(usize, usize)]) -> Result<SparseMatrix> {
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
    for &(a, b) in edges {
        if a >= n || b >= n {
            return Err(Error::validation(format!("edge ({a}, {b}) outside {n} nodes")));
        }
        if a == b {
            return Err(Error::validation(format!("self-loop on node {a}")));
        }
        pairs.push((a.min(b), a.max(b)));
    }
    pairs.sort_unstable();
    pairs.dedup();
    SparseMatrix::from_triplets(n, n, pairs.iter().flat_map(|&(a, b)| [(a, b, 1.0), (b, a, 1.0)]))
}
