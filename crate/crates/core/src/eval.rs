//! Accuracy, degree-group breakdowns, neighbor smoothness, and robustness to
//! graph-adversarial feature attacks.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversarial::{graph_adv_perturbation, sample_neighbors, SamplingStrategy};
use crate::diff::{kl_rows_value, DenseMatrix};
use crate::error::{Error, Result};
use crate::gcn::{predict, GcnParams};
use crate::graph::{node_degrees, normalize_adjacency, Dataset, NormalizedAdjacency, SparseMatrix};
use crate::rng::RunRng;

/// Fraction of `nodes` whose arg-max prediction equals the label.
pub fn accuracy(probs: &DenseMatrix, labels: &[Option<usize>], nodes: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::usage("accuracy over an empty node set"));
    }
    let mut correct = 0usize;
    for &i in nodes {
        let label = labels[i].ok_or_else(|| Error::usage(format!("node {i} is unlabeled")))?;
        if probs.argmax_row(i) == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / nodes.len() as f64)
}

/// Degree buckets `[1,2]`, `[3,5]`, `[6,∞)`.
pub const DEGREE_GROUPS: [(usize, usize); 3] = [(1, 2), (3, 5), (6, usize::MAX)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub min_degree: usize,
    /// `None` for the open-ended top group.
    pub max_degree: Option<usize>,
    pub population: usize,
    /// `None` when the group is empty.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeBreakdown {
    pub groups: Vec<GroupAccuracy>,
    /// Degree-0 nodes, reported apart from the three groups.
    pub isolated: GroupAccuracy,
}

pub fn degree_group_accuracy(
    probs: &DenseMatrix,
    labels: &[Option<usize>],
    degrees: &[usize],
    nodes: &[usize],
) -> Result<DegreeBreakdown> {
    let group = |lo: usize, hi: usize| -> Result<GroupAccuracy> {
        let members: Vec<usize> = nodes
            .iter()
            .copied()
            .filter(|&i| (lo..=hi).contains(&degrees[i]))
            .collect();
        Ok(GroupAccuracy {
            min_degree: lo,
            max_degree: (hi != usize::MAX).then_some(hi),
            population: members.len(),
            accuracy: if members.is_empty() {
                None
            } else {
                Some(accuracy(probs, labels, &members)?)
            },
        })
    };
    Ok(DegreeBreakdown {
        groups: DEGREE_GROUPS
            .iter()
            .map(|&(lo, hi)| group(lo, hi))
            .collect::<Result<_>>()?,
        isolated: group(0, 0)?,
    })
}

/// Mean of `KL(p_i ‖ p_j)` over ordered connected pairs with `i` in `nodes`.
pub fn neighbor_kl(probs: &DenseMatrix, adjacency: &SparseMatrix, nodes: &[usize]) -> Result<f64> {
    let mut sources = Vec::new();
    let mut neighbors = Vec::new();
    for &i in nodes {
        for &j in adjacency.row(i).0 {
            sources.push(i);
            neighbors.push(j);
        }
    }
    if sources.is_empty() {
        return Err(Error::usage("no edges incident to the node set"));
    }
    let p = crate::adversarial::gather(probs, &sources);
    let q = crate::adversarial::gather(probs, &neighbors);
    // kl_rows_value(a, b) = Σ b ln(b / a), so KL(p_i ‖ p_j) = kl_rows_value(q, p).
    Ok(kl_rows_value(&q, &p).sum() / sources.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Robustness {
    pub epsilon: f64,
    pub clean_accuracy: f64,
    pub attacked_accuracy: f64,
    /// `(attacked − clean) / clean`; negative when the attack hurts.
    pub relative_change: f64,
}

/// Test accuracy before and after adding graph-adversarial perturbations
/// generated against the frozen model.
#[allow(clippy::too_many_arguments)]
pub fn attack_eval(
    dataset: &Dataset,
    adj: &NormalizedAdjacency,
    params: &GcnParams,
    epsilon: f64,
    k: usize,
    strategy: SamplingStrategy,
    rng: &mut RunRng,
) -> Result<Robustness> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::usage(format!("attack epsilon must be >= 0, got {epsilon}")));
    }
    let x = dataset.normalized_features();
    let clean_probs = predict(adj, &x, params)?;
    let test = dataset.test_nodes();
    let clean_accuracy = accuracy(&clean_probs, dataset.labels(), test)?;
    let attacked_accuracy = if epsilon == 0.0 {
        clean_accuracy
    } else {
        let sample = sample_neighbors(dataset.adjacency(), k, strategy, rng)?;
        let attack = graph_adv_perturbation(adj, &x, params, &sample, epsilon)?;
        let attacked = predict(adj, &attack.perturbation.apply(&x), params)?;
        accuracy(&attacked, dataset.labels(), test)?
    };
    let relative_change = if clean_accuracy > 0.0 {
        (attacked_accuracy - clean_accuracy) / clean_accuracy
    } else {
        0.0
    };
    Ok(Robustness {
        epsilon,
        clean_accuracy,
        attacked_accuracy,
        relative_change,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSettings {
    pub epsilon: f64,
    pub k: usize,
    pub strategy: SamplingStrategy,
}

impl Default for AttackSettings {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            k: 1,
            strategy: SamplingStrategy::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub test_accuracy: f64,
    pub val_accuracy: f64,
    pub degree_groups: DegreeBreakdown,
    pub neighbor_kl_test: Option<f64>,
    pub neighbor_kl_all: Option<f64>,
    pub robustness: Robustness,
}

#[derive(Serialize)]
struct FlatRow<'a> {
    dataset: &'a str,
    test_acc: f64,
    val_acc: f64,
    acc_deg_1_2: Option<f64>,
    acc_deg_3_5: Option<f64>,
    acc_deg_6_plus: Option<f64>,
    pop_deg_1_2: usize,
    pop_deg_3_5: usize,
    pop_deg_6_plus: usize,
    pop_deg_0: usize,
    kl_test: Option<f64>,
    kl_all: Option<f64>,
    attack_epsilon: f64,
    clean_acc: f64,
    attacked_acc: f64,
    relative_change: f64,
}

impl EvalReport {
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }

    /// One flat CSV row (with header when `header` is set), for aggregating
    /// reports across seeds.
    pub fn write_csv_row<W: Write>(&self, out: W, header: bool) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(header).from_writer(out);
        let g = &self.degree_groups.groups;
        w.serialize(FlatRow {
            dataset: &self.dataset,
            test_acc: self.test_accuracy,
            val_acc: self.val_accuracy,
            acc_deg_1_2: g[0].accuracy,
            acc_deg_3_5: g[1].accuracy,
            acc_deg_6_plus: g[2].accuracy,
            pop_deg_1_2: g[0].population,
            pop_deg_3_5: g[1].population,
            pop_deg_6_plus: g[2].population,
            pop_deg_0: self.degree_groups.isolated.population,
            kl_test: self.neighbor_kl_test,
            kl_all: self.neighbor_kl_all,
            attack_epsilon: self.robustness.epsilon,
            clean_acc: self.robustness.clean_accuracy,
            attacked_acc: self.robustness.attacked_accuracy,
            relative_change: self.robustness.relative_change,
        })?;
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Full report for a trained model on `dataset`.
pub fn evaluate_model(
    dataset: &Dataset,
    params: &GcnParams,
    attack: AttackSettings,
    rng: &mut RunRng,
) -> Result<EvalReport> {
    let adj = normalize_adjacency(dataset.adjacency())?;
    let probs = predict(&adj, &dataset.normalized_features(), params)?;
    let labels = dataset.labels();
    let all: Vec<usize> = (0..dataset.num_nodes()).collect();
    let degrees = node_degrees(dataset.adjacency());
    Ok(EvalReport {
        dataset: dataset.name().to_owned(),
        test_accuracy: accuracy(&probs, labels, dataset.test_nodes())?,
        val_accuracy: accuracy(&probs, labels, dataset.val_nodes())?,
        degree_groups: degree_group_accuracy(&probs, labels, &degrees, dataset.test_nodes())?,
        neighbor_kl_test: neighbor_kl(&probs, dataset.adjacency(), dataset.test_nodes()).ok(),
        neighbor_kl_all: neighbor_kl(&probs, dataset.adjacency(), &all).ok(),
        robustness: attack_eval(dataset, &adj, params, attack.epsilon, attack.k, attack.strategy, rng)?,
    })
}
