use crate::diff::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{adjacency_from_edges, validate_adjacency, SparseMatrix};

/// Immutable attributed graph with labels and a transductive split.
///
/// Features are kept raw; [`Dataset::normalized_features`] produces the
/// row-L1-normalized dense matrix the model consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    num_classes: usize,
    adjacency: SparseMatrix,
    features: SparseMatrix,
    labels: Vec<Option<usize>>,
    train_nodes: Vec<usize>,
    val_nodes: Vec<usize>,
    test_nodes: Vec<usize>,
}

impl Dataset {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        num_classes: usize,
        adjacency: SparseMatrix,
        features: SparseMatrix,
        labels: Vec<Option<usize>>,
        train_nodes: Vec<usize>,
        val_nodes: Vec<usize>,
        test_nodes: Vec<usize>,
    ) -> Result<Self> {
        let ds = Self {
            name: name.into(),
            num_classes,
            adjacency,
            features,
            labels,
            train_nodes,
            val_nodes,
            test_nodes,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Convenience constructor from an undirected edge list and feature triplets.
    #[allow(clippy::too_many_arguments)]
    pub fn from_edges(
        name: impl Into<String>,
        num_nodes: usize,
        num_features: usize,
        num_classes: usize,
        edges: &[(usize, usize)],
        features: impl IntoIterator<Item = (usize, usize, f64)>,
        labels: Vec<Option<usize>>,
        splits: [Vec<usize>; 3],
    ) -> Result<Self> {
        let adjacency = adjacency_from_edges(num_nodes, edges)?;
        let features = SparseMatrix::from_triplets(num_nodes, num_features, features)?;
        let [train, val, test] = splits;
        Self::new(name, num_classes, adjacency, features, labels, train, val, test)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        validate_adjacency(&self.adjacency)?;
        if self.features.n_rows() != n {
            return Err(Error::validation(format!(
                "feature matrix has {} rows for {n} nodes",
                self.features.n_rows()
            )));
        }
        if let Some((r, c, v)) = self.features.triplets().find(|&(_, _, v)| !v.is_finite() || v < 0.0) {
            return Err(Error::validation(format!(
                "feature ({r}, {c}) = {v} is not finite and nonnegative"
            )));
        }
        if self.labels.len() != n {
            return Err(Error::validation(format!("{} labels for {n} nodes", self.labels.len())));
        }
        if let Some(bad) = self.labels.iter().flatten().find(|&&l| l >= self.num_classes) {
            return Err(Error::validation(format!(
                "label {bad} outside {} classes",
                self.num_classes
            )));
        }
        let mut seen = vec![false; n];
        for (split, nodes) in [
            ("train", &self.train_nodes),
            ("val", &self.val_nodes),
            ("test", &self.test_nodes),
        ] {
            for &i in nodes {
                if i >= n {
                    return Err(Error::validation(format!("{split} node {i} out of range")));
                }
                if seen[i] {
                    return Err(Error::validation(format!("node {i} appears twice across splits")));
                }
                seen[i] = true;
                if self.labels[i].is_none() {
                    return Err(Error::validation(format!("{split} node {i} is unlabeled")));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.n_rows()
    }

    pub fn num_features(&self) -> usize {
        self.features.n_cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    pub fn features(&self) -> &SparseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn train_nodes(&self) -> &[usize] {
        &self.train_nodes
    }

    pub fn val_nodes(&self) -> &[usize] {
        &self.val_nodes
    }

    pub fn test_nodes(&self) -> &[usize] {
        &self.test_nodes
    }

    /// Neighbors of node `i`, ascending.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.adjacency.row(i).0
    }

    /// Undirected edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .triplets()
            .filter(|&(i, j, _)| i < j)
            .map(|(i, j, _)| (i, j))
    }

    /// `(node, class)` pairs for a labeled node set. Panics on unlabeled nodes,
    /// which validation rules out for the three splits.
    pub fn labeled(&self, nodes: &[usize]) -> Vec<(usize, usize)> {
        nodes
            .iter()
            .map(|&i| (i, self.labels[i].expect("split nodes are labeled")))
            .collect()
    }

    /// Dense features with each row scaled to unit L1 norm; all-zero rows stay zero.
    pub fn normalized_features(&self) -> DenseMatrix {
        let mut x = self.features.to_dense();
        for r in 0..x.n_rows() {
            let row = x.row_mut(r);
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.iter_mut().for_each(|v| *v /= total);
            }
        }
        x
    }
}
