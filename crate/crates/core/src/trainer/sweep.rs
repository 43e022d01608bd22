use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversarial::SamplingStrategy;
use crate::error::{Error, Result};
use crate::graph::Dataset;
use crate::trainer::{train, Mode, TrainConfig};

/// Axes of a hyperparameter grid; omitted axes keep the base value.
///
/// The grid is the cartesian product of all given axes, expanded in field
/// order with the last field varying fastest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub mode: Option<Vec<Mode>>,
    pub hidden: Option<Vec<usize>>,
    pub weight_decay: Option<Vec<f64>>,
    pub dropout: Option<Vec<f64>>,
    pub lr: Option<Vec<f64>>,
    pub epsilon: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub k: Option<Vec<usize>>,
    pub strategy: Option<Vec<SamplingStrategy>>,
    pub virtual_epsilon: Option<Vec<f64>>,
    pub alpha: Option<Vec<f64>>,
    pub xi: Option<Vec<f64>>,
    pub seed: Option<Vec<u64>>,
}

impl GridSpec {
    pub fn expand(&self, base: &TrainConfig) -> Result<Vec<TrainConfig>> {
        let mut configs = vec![base.clone()];
        macro_rules! axis {
            ($field:ident, $assign:expr) => {
                if let Some(values) = &self.$field {
                    if values.is_empty() {
                        return Err(Error::usage(concat!(
                            "grid axis `",
                            stringify!($field),
                            "` is empty"
                        )));
                    }
                    configs = configs
                        .iter()
                        .flat_map(|c| {
                            values.iter().map(move |v| {
                                let mut c = c.clone();
                                #[allow(clippy::redundant_closure_call)]
                                ($assign)(&mut c, v.clone());
                                c
                            })
                        })
                        .collect();
                }
            };
        }
        axis!(mode, |c: &mut TrainConfig, v| c.mode = v);
        axis!(hidden, |c: &mut TrainConfig, v| c.hidden = v);
        axis!(weight_decay, |c: &mut TrainConfig, v| c.weight_decay = v);
        axis!(dropout, |c: &mut TrainConfig, v| c.dropout = Some(v));
        axis!(lr, |c: &mut TrainConfig, v| c.lr = v);
        axis!(epsilon, |c: &mut TrainConfig, v| c.epsilon = v);
        axis!(beta, |c: &mut TrainConfig, v| c.beta = v);
        axis!(k, |c: &mut TrainConfig, v| c.k = v);
        axis!(strategy, |c: &mut TrainConfig, v| c.strategy = v);
        axis!(virtual_epsilon, |c: &mut TrainConfig, v| c.virtual_epsilon = v);
        axis!(alpha, |c: &mut TrainConfig, v| c.alpha = v);
        axis!(xi, |c: &mut TrainConfig, v| c.xi = v);
        axis!(seed, |c: &mut TrainConfig, v| c.seed = v);
        Ok(configs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub config: TrainConfig,
    pub best_epoch: usize,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    mode: Mode,
    hidden: usize,
    weight_decay: f64,
    dropout: f64,
    lr: f64,
    epsilon: f64,
    beta: f64,
    k: usize,
    strategy: &'a str,
    virtual_epsilon: f64,
    alpha: f64,
    xi: f64,
    seed: u64,
    best_epoch: usize,
    val_acc: f64,
    test_acc: f64,
}

/// Trains every grid point independently and returns rows sorted by
/// validation accuracy, best first; ties keep grid order. `jobs` bounds the
/// number of concurrent runs (0 means one per core).
pub fn sweep(dataset: &Dataset, base: &TrainConfig, grid: &GridSpec, jobs: usize) -> Result<Vec<SweepRow>> {
    let configs = grid.expand(base)?;
    for c in &configs {
        c.validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::usage(format!("thread pool: {e}")))?;
    let mut rows = pool.install(|| {
        configs
            .par_iter()
            .map(|config| {
                let outcome = train(dataset, config)?;
                let best = outcome.best_record();
                Ok(SweepRow {
                    config: config.clone(),
                    best_epoch: outcome.best_epoch,
                    val_accuracy: best.val_accuracy,
                    test_accuracy: best.test_accuracy,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    rows.sort_by(|a, b| b.val_accuracy.total_cmp(&a.val_accuracy));
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        let c = &r.config;
        w.serialize(CsvRow {
            mode: c.mode,
            hidden: c.hidden,
            weight_decay: c.weight_decay,
            dropout: c.effective_dropout(),
            lr: c.lr,
            epsilon: c.epsilon,
            beta: c.beta,
            k: c.k,
            strategy: c.strategy.as_str(),
            virtual_epsilon: c.virtual_epsilon,
            alpha: c.alpha,
            xi: c.xi,
            seed: c.seed,
            best_epoch: r.best_epoch,
            val_acc: r.val_accuracy,
            test_acc: r.test_accuracy,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
