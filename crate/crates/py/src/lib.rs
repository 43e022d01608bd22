//! Python bindings: datasets, training, checkpoints and evaluation.

use graphat::eval::{evaluate_model, AttackSettings};
use graphat::gcn::{predict, Checkpoint, GcnParams};
use graphat::graph::{gdf, generate_sbm, normalize_adjacency, Dataset, SbmConfig};
use graphat::rng::{stream, Stream};
use graphat::trainer::{train, TrainConfig, TrainHistory};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: graphat::Error) -> PyErr {
    match e {
        graphat::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn py_to_json(py: Python<'_>, value: &Bound<'_, PyAny>) -> PyResult<String> {
    py.import("json")?.call_method1("dumps", (value,))?.extract()
}

#[pyclass(name = "Dataset", module = "pygraphat", frozen)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: gdf::load_dataset(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        gdf::save_dataset(&self.inner, path).map_err(py_err)
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_features(&self) -> usize {
        self.inner.num_features()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.num_edges()
    }

    #[getter]
    fn labels(&self) -> Vec<Option<usize>> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn train_nodes(&self) -> Vec<usize> {
        self.inner.train_nodes().to_vec()
    }

    #[getter]
    fn val_nodes(&self) -> Vec<usize> {
        self.inner.val_nodes().to_vec()
    }

    #[getter]
    fn test_nodes(&self) -> Vec<usize> {
        self.inner.test_nodes().to_vec()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().collect()
    }

    fn degrees(&self) -> Vec<usize> {
        graphat::graph::node_degrees(self.inner.adjacency())
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(name={:?}, nodes={}, edges={}, features={}, classes={})",
            self.inner.name(),
            self.inner.num_nodes(),
            self.inner.num_edges(),
            self.inner.num_features(),
            self.inner.num_classes()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (
    num_classes=2, nodes_per_class=100, p_in=0.05, p_out=0.005, feature_dim=16,
    noise_scale=2.0, seed=0, train_per_class=20, num_val=500, num_test=1000
))]
#[allow(clippy::too_many_arguments)]
fn generate_synthetic(
    num_classes: usize,
    nodes_per_class: usize,
    p_in: f64,
    p_out: f64,
    feature_dim: usize,
    noise_scale: f64,
    seed: u64,
    train_per_class: usize,
    num_val: usize,
    num_test: usize,
) -> PyResult<PyDataset> {
    let config = SbmConfig {
        num_classes,
        nodes_per_class,
        p_in,
        p_out,
        feature_dim,
        noise_scale,
        seed,
        train_per_class,
        num_val,
        num_test,
    };
    Ok(PyDataset {
        inner: generate_sbm(&config).map_err(py_err)?,
    })
}

/// A trained model: parameters plus the configuration that produced them.
#[pyclass(name = "Model", module = "pygraphat", frozen)]
struct PyModel {
    config: TrainConfig,
    params: GcnParams,
    history: Option<TrainHistory>,
    best_epoch: Option<usize>,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let ckpt = Checkpoint::load(path).map_err(py_err)?;
        Ok(Self {
            config: ckpt.config,
            params: ckpt.params,
            history: None,
            best_epoch: None,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        Checkpoint {
            config: self.config.clone(),
            params: self.params.clone(),
        }
        .save(path)
        .map_err(py_err)
    }

    #[getter]
    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let text = serde_json::to_string(&self.config).map_err(|e| PyValueError::new_err(e.to_string()))?;
        json_to_py(py, &text)
    }

    #[getter]
    fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    /// Per-epoch records as a list of dicts, or `None` for loaded checkpoints.
    #[getter]
    fn history<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyAny>>> {
        self.history
            .as_ref()
            .map(|h| {
                let text = serde_json::to_string(&h.records).map_err(|e| PyValueError::new_err(e.to_string()))?;
                json_to_py(py, &text)
            })
            .transpose()
    }

    /// Class probabilities for every node, one list per node.
    fn predict(&self, dataset: &PyDataset) -> PyResult<Vec<Vec<f64>>> {
        let adj = normalize_adjacency(dataset.inner.adjacency()).map_err(py_err)?;
        let probs = predict(&adj, &dataset.inner.normalized_features(), &self.params).map_err(py_err)?;
        Ok(probs.rows().map(<[f64]>::to_vec).collect())
    }

    /// Full evaluation report as a dict.
    #[pyo3(signature = (dataset, attack_epsilon=0.01, seed=None))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        dataset: &PyDataset,
        attack_epsilon: f64,
        seed: Option<u64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let settings = AttackSettings {
            epsilon: attack_epsilon,
            ..AttackSettings::default()
        };
        let mut rng = stream(seed.unwrap_or(self.config.seed), Stream::Attack);
        let report = evaluate_model(&dataset.inner, &self.params, settings, &mut rng).map_err(py_err)?;
        let text = serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
        json_to_py(py, &text)
    }
}

/// Trains a model. Keyword arguments are `TrainConfig` fields, for example
/// `mode="graphat", epsilon=0.05, seed=3`.
#[pyfunction]
#[pyo3(signature = (dataset, **config))]
fn train_model(py: Python<'_>, dataset: &PyDataset, config: Option<&Bound<'_, PyDict>>) -> PyResult<PyModel> {
    let config: TrainConfig = match config {
        Some(kwargs) => serde_json::from_str(&py_to_json(py, kwargs.as_any())?)
            .map_err(|e| PyValueError::new_err(format!("invalid config: {e}")))?,
        None => TrainConfig::default(),
    };
    let outcome = py.detach(|| train(&dataset.inner, &config)).map_err(py_err)?;
    Ok(PyModel {
        config,
        params: outcome.params,
        history: Some(outcome.history),
        best_epoch: Some(outcome.best_epoch),
    })
}

#[pymodule]
fn pygraphat(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(train_model, m)?)?;
    Ok(())
}
