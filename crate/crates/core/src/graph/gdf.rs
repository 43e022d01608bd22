//! GDF: the JSON dataset interchange format.
//!
//! ```json
//! { "name": "cora", "num_nodes": 3, "num_features": 2, "num_classes": 2,
//!   "edges": [[0, 1], [1, 2]],
//!   "features": [[0, 0, 1.0], [2, 1, 0.5]],
//!   "labels": [0, 1, -1],
//!   "train_nodes": [0], "val_nodes": [1], "test_nodes": [] }
//! ```
//!
//! Each undirected edge appears once; writers emit `i < j`, readers accept
//! either orientation. Raw (unnormalized) feature values are stored.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dataset, SparseMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GdfDocument {
    pub name: String,
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
    pub edges: Vec<[usize; 2]>,
    pub features: Vec<(usize, usize, f64)>,
    pub labels: Vec<i64>,
    pub train_nodes: Vec<usize>,
    pub val_nodes: Vec<usize>,
    pub test_nodes: Vec<usize>,
}

impl GdfDocument {
    pub fn from_dataset(ds: &Dataset) -> Self {
        Self {
            name: ds.name().to_owned(),
            num_nodes: ds.num_nodes(),
            num_features: ds.num_features(),
            num_classes: ds.num_classes(),
            edges: ds.edges().map(|(i, j)| [i, j]).collect(),
            features: ds.features().triplets().collect(),
            labels: ds.labels().iter().map(|l| l.map_or(-1, |c| c as i64)).collect(),
            train_nodes: ds.train_nodes().to_vec(),
            val_nodes: ds.val_nodes().to_vec(),
            test_nodes: ds.test_nodes().to_vec(),
        }
    }

    pub fn into_dataset(self) -> Result<Dataset> {
        let mut canonical: Vec<(usize, usize)> = self.edges.iter().map(|&[a, b]| (a.min(b), a.max(b))).collect();
        canonical.sort_unstable();
        if let Some(w) = canonical.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::validation(format!("duplicate edge ({}, {})", w[0].0, w[0].1)));
        }
        if self.labels.len() != self.num_nodes {
            return Err(Error::validation(format!(
                "{} labels for {} nodes",
                self.labels.len(),
                self.num_nodes
            )));
        }
        let labels = self
            .labels
            .iter()
            .map(|&l| match l {
                -1 => Ok(None),
                l if l >= 0 => Ok(Some(l as usize)),
                l => Err(Error::validation(format!("invalid label {l}"))),
            })
            .collect::<Result<Vec<_>>>()?;

        let adjacency = super::adjacency_from_edges(self.num_nodes, &canonical)?;
        let features = SparseMatrix::from_triplets(self.num_nodes, self.num_features, self.features)?;
        Dataset::new(
            self.name,
            self.num_classes,
            adjacency,
            features,
            labels,
            self.train_nodes,
            self.val_nodes,
            self.test_nodes,
        )
    }
}

pub fn from_json_str(text: &str) -> Result<Dataset> {
    serde_json::from_str::<GdfDocument>(text)?.into_dataset()
}

pub fn to_json_string(ds: &Dataset) -> Result<String> {
    Ok(serde_json::to_string(&GdfDocument::from_dataset(ds))?)
}

/// Reads and validates a GDF file.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |message: String| Error::Parse {
        path: path.to_owned(),
        message,
    };
    let doc: GdfDocument = serde_json::from_reader(BufReader::new(file)).map_err(|e| parse_err(e.to_string()))?;
    doc.into_dataset().map_err(|e| parse_err(e.to_string()))
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer(&mut out, &GdfDocument::from_dataset(ds))?;
    out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, SbmConfig};

    const SMALL: &str = r#"{"name":"t","num_nodes":3,"num_features":2,"num_classes":2,
        "edges":[[1,0],[1,2]],"features":[[0,0,1.0],[2,1,0.5]],"labels":[0,1,-1],
        "train_nodes":[0],"val_nodes":[1],"test_nodes":[]}"#;

    #[test]
    fn reversed_edges_are_symmetrized() {
        let ds = from_json_str(SMALL).unwrap();
        assert_eq!(ds.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
        assert_eq!(ds.neighbors(0), &[1]);
        assert_eq!(ds.labels(), &[Some(0), Some(1), None]);
    }

    #[test]
    fn rejects_duplicates_and_bad_splits() {
        let dup_edge = SMALL.replace("[[1,0],[1,2]]", "[[1,0],[0,1]]");
        assert!(from_json_str(&dup_edge).is_err());
        let dup_triple = SMALL.replace("[2,1,0.5]", "[0,0,0.5]");
        assert!(from_json_str(&dup_triple).is_err());
        let unlabeled_split = SMALL.replace(r#""test_nodes":[]"#, r#""test_nodes":[2]"#);
        assert!(from_json_str(&unlabeled_split).is_err());
        let self_loop = SMALL.replace("[[1,0],[1,2]]", "[[1,1]]");
        assert!(from_json_str(&self_loop).is_err());
        assert!(from_json_str("{\"name\": 3}").is_err());
    }

    #[test]
    fn file_round_trip_is_identity() {
        let ds = generate_sbm(&SbmConfig {
            seed: 9,
            ..Default::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sbm.gdf.json");
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, ds);
        let first = std::fs::read(&path).unwrap();
        save_dataset(&back, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn malformed_file_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.json");
        std::fs::write(&path, "{ not json").unwrap();
        match load_dataset(&path) {
            Err(Error::Parse { path: p, .. }) => assert_eq!(p, path),
            other => panic!("unexpected {other:?}"),
        }
    }
}
