use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adversarial::{graph_adv_on_tape, virtual_adv_from_targets, virtual_targets, NeighborSampler};
use crate::diff::{counters, DenseMatrix, Tape, PROB_FLOOR};
use crate::error::{Error, Result};
use crate::eval::accuracy;
use crate::gcn::{predict, Dropout, GcnParams, ParamVars};
use crate::graph::{normalize_adjacency, Dataset, NormalizedAdjacency};
use crate::rng::{stream, RunRng, Stream};
use crate::trainer::adam::{adam_step, AdamState};
use crate::trainer::objective::{objective_from_clean, GraphTerm, ObjectiveInputs, VirtualTerm};
use crate::trainer::TrainConfig;

/// Metrics of one completed epoch. Regularizer columns hold the weighted
/// contributions to `train_loss`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(rename = "sup_loss")]
    pub supervised_loss: f64,
    #[serde(rename = "graph_reg")]
    pub graph_adv_reg: f64,
    #[serde(rename = "virt_reg")]
    pub virtual_adv_reg: f64,
    #[serde(rename = "val_acc")]
    pub val_accuracy: f64,
    #[serde(rename = "test_acc")]
    pub test_accuracy: f64,
    #[serde(rename = "seconds")]
    pub wall_time: f64,
}

impl EpochRecord {
    /// Equality on every column except wall-clock time.
    pub fn same_trajectory(&self, other: &EpochRecord) -> bool {
        EpochRecord {
            wall_time: 0.0,
            ..self.clone()
        } == EpochRecord {
            wall_time: 0.0,
            ..other.clone()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,sup_loss,graph_reg,virt_reg,val_acc,test_acc,seconds";

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// First record with the highest validation accuracy.
    pub fn best(&self) -> Option<&EpochRecord> {
        self.records
            .iter()
            .fold(None, |best: Option<&EpochRecord>, r| match best {
                Some(b) if b.val_accuracy >= r.val_accuracy => Some(b),
                _ => Some(r),
            })
    }

    /// Equality on everything except wall-clock time.
    pub fn same_trajectory(&self, other: &TrainHistory) -> bool {
        self.len() == other.len()
            && self
                .records
                .iter()
                .zip(&other.records)
                .all(|(a, b)| a.same_trajectory(b))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        if self.records.is_empty() {
            w.write_record(Self::CSV_HEADER.split(','))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let records = r.deserialize().collect::<std::result::Result<Vec<EpochRecord>, _>>()?;
        Ok(Self { records })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation accuracy.
    pub params: GcnParams,
    pub history: TrainHistory,
    pub best_epoch: usize,
}

impl TrainOutcome {
    pub fn best_record(&self) -> &EpochRecord {
        &self.history.records[self.best_epoch - 1]
    }
}

/// Loss values of one optimization step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub total: f64,
    pub supervised: f64,
    pub graph: f64,
    pub virtual_term: f64,
}

/// Held-out metrics of the current parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    /// Mean cross-entropy on the validation nodes, used to break ties in
    /// validation accuracy.
    pub val_loss: f64,
}

impl Evaluation {
    fn improves_on(&self, best: &Evaluation) -> bool {
        self.val_accuracy > best.val_accuracy
            || (self.val_accuracy == best.val_accuracy && self.val_loss < best.val_loss)
    }
}

struct Streams {
    dropout: RunRng,
    adversarial_dropout: RunRng,
    sampling: RunRng,
    virtual_direction: RunRng,
}

/// Full-batch minimax trainer for one dataset and configuration.
pub struct Trainer<'a> {
    dataset: &'a Dataset,
    config: TrainConfig,
    adj: NormalizedAdjacency,
    x: DenseMatrix,
    train_targets: Vec<(usize, usize)>,
    params: GcnParams,
    adam: AdamState,
    sampler: Option<NeighborSampler>,
    streams: Streams,
}

impl<'a> Trainer<'a> {
    pub fn new(dataset: &'a Dataset, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        if dataset.train_nodes().is_empty() {
            return Err(Error::usage("dataset has no training nodes"));
        }
        let adj = normalize_adjacency(dataset.adjacency())?;
        let params = GcnParams::init(
            dataset.num_features(),
            config.hidden,
            dataset.num_classes(),
            config.seed,
        );
        let sampler = if config.mode.uses_graph_term() {
            Some(NeighborSampler::new(dataset.adjacency(), config.strategy)?)
        } else {
            None
        };
        let seed = config.seed;
        Ok(Self {
            dataset,
            adj,
            x: dataset.normalized_features(),
            train_targets: dataset.labeled(dataset.train_nodes()),
            adam: AdamState::new(&params),
            params,
            sampler,
            streams: Streams {
                dropout: stream(seed, Stream::Dropout),
                adversarial_dropout: stream(seed, Stream::AdversarialDropout),
                sampling: stream(seed, Stream::NeighborSampling),
                virtual_direction: stream(seed, Stream::VirtualDirection),
            },
            config: config.clone(),
        })
    }

    pub fn params(&self) -> &GcnParams {
        &self.params
    }

    pub fn adjacency(&self) -> &NormalizedAdjacency {
        &self.adj
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.x
    }

    /// One minimax step: sample neighbors, build perturbations at the current
    /// parameters, record the composite objective, and apply one update.
    ///
    /// Plain GCN costs one forward and one backward pass. The graph term adds
    /// one backward (for the perturbation, sharing the clean forward) and one
    /// forward (at the perturbed input); the virtual term adds two forwards (probe
    /// and perturbed input) and one backward.
    pub fn step(&mut self) -> Result<StepLosses> {
        let mode = self.config.mode;
        let dropout = self.config.effective_dropout();
        let mut tape = Tape::new();
        let x = tape.leaf(self.x.clone(), mode.uses_graph_term());
        let pv = self.params.register(&mut tape, true);
        let clean = crate::gcn::gcn_forward(
            &mut tape,
            &self.adj,
            x,
            &pv,
            Dropout::On {
                rate: dropout,
                rng: &mut self.streams.dropout,
            },
        )?;
        let clean_values = tape.value(clean).clone();

        let graph_parts = match &self.sampler {
            Some(sampler) => {
                let sample = sampler.sample(self.config.k, &mut self.streams.sampling)?;
                let r = graph_adv_on_tape(&mut tape, x, clean, &sample, self.config.epsilon)?;
                Some((sample, r))
            }
            None => None,
        };
        let virtual_parts = if mode.uses_virtual_term() {
            let targets = virtual_targets(&clean_values, &self.train_targets);
            let r = virtual_adv_from_targets(
                &self.adj,
                &self.x,
                &self.params,
                &targets,
                self.config.virtual_epsilon,
                self.config.xi,
                &mut self.streams.virtual_direction,
            )?;
            Some((targets, r))
        } else {
            None
        };

        let inputs = ObjectiveInputs {
            adj: &self.adj,
            train_targets: &self.train_targets,
            graph: graph_parts.as_ref().map(|(sample, r)| GraphTerm {
                perturbation: r,
                sample,
                neighbor_probs: &clean_values,
            }),
            virtual_term: virtual_parts.as_ref().map(|(targets, r)| VirtualTerm {
                perturbation: r,
                targets,
            }),
        };
        let terms = objective_from_clean(
            &mut tape,
            &inputs,
            x,
            &pv,
            clean,
            &self.config,
            Dropout::On {
                rate: dropout,
                rng: &mut self.streams.adversarial_dropout,
            },
        )?;
        let scalar = |v: Option<crate::diff::Var>| v.map_or(Ok(0.0), |v| tape.scalar(v));
        let losses = StepLosses {
            total: tape.scalar(terms.total)?,
            supervised: tape.scalar(terms.supervised)?,
            graph: scalar(terms.graph)?,
            virtual_term: scalar(terms.virtual_term)?,
        };
        if !losses.total.is_finite() {
            return Ok(losses);
        }
        let grads = ParamVars::collect(tape.backward(terms.total, &pv.as_array())?);
        adam_step(&mut self.params, &grads, &mut self.adam, self.config.lr);
        Ok(losses)
    }

    /// Validation and test metrics of the current parameters.
    pub fn evaluate(&self) -> Result<Evaluation> {
        let probs = predict(&self.adj, &self.x, &self.params)?;
        let labels = self.dataset.labels();
        let score = |nodes: &[usize]| {
            if nodes.is_empty() {
                Ok(0.0)
            } else {
                accuracy(&probs, labels, nodes)
            }
        };
        let val_nodes = self.dataset.val_nodes();
        let val_loss = if val_nodes.is_empty() {
            0.0
        } else {
            self.dataset
                .labeled(val_nodes)
                .iter()
                .map(|&(i, c)| -probs[(i, c)].max(PROB_FLOOR).ln())
                .sum::<f64>()
                / val_nodes.len() as f64
        };
        Ok(Evaluation {
            val_accuracy: score(val_nodes)?,
            test_accuracy: score(self.dataset.test_nodes())?,
            val_loss,
        })
    }

    /// Runs to `max_epochs` or until the validation metrics have not improved
    /// for `patience` epochs, returning the best parameters. Higher validation
    /// accuracy wins; equal accuracy is broken by lower validation loss.
    pub fn run(mut self) -> Result<TrainOutcome> {
        let start = Instant::now();
        let mut history = TrainHistory::default();
        let mut best: Option<(Evaluation, usize, GcnParams)> = None;
        let mut stale = 0;

        for epoch in 1..=self.config.max_epochs {
            let losses = self.step()?;
            let eval = self.evaluate()?;
            let record = EpochRecord {
                epoch,
                train_loss: losses.total,
                supervised_loss: losses.supervised,
                graph_adv_reg: losses.graph,
                virtual_adv_reg: losses.virtual_term,
                val_accuracy: eval.val_accuracy,
                test_accuracy: eval.test_accuracy,
                wall_time: start.elapsed().as_secs_f64(),
            };
            if !losses.total.is_finite() {
                return Err(Error::NonFiniteLoss { record });
            }
            history.records.push(record);

            match &best {
                Some((best_eval, _, _)) if !eval.improves_on(best_eval) => stale += 1,
                _ => {
                    best = Some((eval, epoch, self.params.clone()));
                    stale = 0;
                }
            }
            if stale >= self.config.patience.max(1) {
                break;
            }
        }
        let (_, best_epoch, params) = best.expect("max_epochs >= 1");
        Ok(TrainOutcome {
            params,
            history,
            best_epoch,
        })
    }
}

pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    Trainer::new(dataset, config)?.run()
}

/// Passes spent by one [`Trainer::step`] plus the per-epoch evaluation.
pub fn instrumented_epoch(trainer: &mut Trainer<'_>) -> Result<counters::PassCounts> {
    let before = counters::snapshot();
    trainer.step()?;
    trainer.evaluate()?;
    Ok(counters::snapshot() - before)
}
