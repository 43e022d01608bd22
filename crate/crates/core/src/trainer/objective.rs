use crate::adversarial::{NeighborSample, PerturbationSet};
use crate::diff::{DenseMatrix, Tape, Var};
use crate::error::{Error, Result};
use crate::gcn::{gcn_forward, gcn_objective, Dropout, ParamVars};
use crate::graph::NormalizedAdjacency;
use crate::trainer::TrainConfig;

/// Frozen inputs of the graph-adversarial term.
#[derive(Debug, Clone, Copy)]
pub struct GraphTerm<'a> {
    pub perturbation: &'a PerturbationSet,
    pub sample: &'a NeighborSample,
    /// Clean predictions supplying the constant neighbor distributions.
    pub neighbor_probs: &'a DenseMatrix,
}

/// Frozen inputs of the virtual-adversarial term.
#[derive(Debug, Clone, Copy)]
pub struct VirtualTerm<'a> {
    pub perturbation: &'a PerturbationSet,
    pub targets: &'a DenseMatrix,
}

#[derive(Debug, Clone, Copy)]
pub struct ObjectiveInputs<'a> {
    pub adj: &'a NormalizedAdjacency,
    pub train_targets: &'a [(usize, usize)],
    pub graph: Option<GraphTerm<'a>>,
    pub virtual_term: Option<VirtualTerm<'a>>,
}

/// Tape handles of the objective and its weighted parts.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveTerms {
    pub total: Var,
    pub supervised: Var,
    /// `β ·` mean divergence over sampled pairs.
    pub graph: Option<Var>,
    /// `α ·` mean divergence over nodes.
    pub virtual_term: Option<Var>,
    pub clean_probs: Var,
}

/// Records the clean forward pass and the full objective for `config.mode`.
pub fn composite_objective(
    tape: &mut Tape,
    inputs: &ObjectiveInputs<'_>,
    x: Var,
    params: &ParamVars,
    config: &TrainConfig,
    clean_dropout: Dropout<'_>,
    adversarial_dropout: Dropout<'_>,
) -> Result<ObjectiveTerms> {
    let clean_probs = gcn_forward(tape, inputs.adj, x, params, clean_dropout)?;
    objective_from_clean(tape, inputs, x, params, clean_probs, config, adversarial_dropout)
}

/// Objective on top of an already recorded clean forward pass:
///
/// `Γ + β · mean_{(i,j)} d(f(x_i + r^g_i), p_j) + α · mean_i d(f(x_i + r^v_i), ỹ_i)`
///
/// where `Γ` is mean cross-entropy on the training nodes plus weight decay and
/// `d(p, q) = Σ q (ln q − ln p)` with the second argument constant. Terms not
/// used by the mode are omitted.
pub fn objective_from_clean(
    tape: &mut Tape,
    inputs: &ObjectiveInputs<'_>,
    x: Var,
    params: &ParamVars,
    clean_probs: Var,
    config: &TrainConfig,
    mut adversarial_dropout: Dropout<'_>,
) -> Result<ObjectiveTerms> {
    let supervised = gcn_objective(tape, clean_probs, inputs.train_targets, params, config.weight_decay)?;
    let mut total = supervised;

    let graph = if config.mode.uses_graph_term() {
        let term = inputs
            .graph
            .ok_or_else(|| Error::usage(format!("mode {} needs graph perturbations", config.mode)))?;
        let weighted = graph_term(
            tape,
            inputs.adj,
            x,
            params,
            &term,
            config.beta,
            &mut adversarial_dropout,
        )?;
        total = tape.add(total, weighted)?;
        Some(weighted)
    } else {
        None
    };

    let virtual_term = if config.mode.uses_virtual_term() {
        let term = inputs
            .virtual_term
            .ok_or_else(|| Error::usage(format!("mode {} needs virtual perturbations", config.mode)))?;
        let weighted = virtual_term(
            tape,
            inputs.adj,
            x,
            params,
            &term,
            config.alpha,
            &mut adversarial_dropout,
        )?;
        total = tape.add(total, weighted)?;
        Some(weighted)
    } else {
        None
    };

    Ok(ObjectiveTerms {
        total,
        supervised,
        graph,
        virtual_term,
        clean_probs,
    })
}

fn perturbed_forward(
    tape: &mut Tape,
    adj: &NormalizedAdjacency,
    x: Var,
    params: &ParamVars,
    perturbation: &PerturbationSet,
    dropout: &mut Dropout<'_>,
) -> Result<Var> {
    let r = tape.constant(perturbation.r.clone());
    let shifted = tape.add(x, r)?;
    let dropout = match dropout {
        Dropout::Off => Dropout::Off,
        Dropout::On { rate, rng } => Dropout::On { rate: *rate, rng },
    };
    gcn_forward(tape, adj, shifted, params, dropout)
}

fn graph_term(
    tape: &mut Tape,
    adj: &NormalizedAdjacency,
    x: Var,
    params: &ParamVars,
    term: &GraphTerm<'_>,
    beta: f64,
    dropout: &mut Dropout<'_>,
) -> Result<Var> {
    let probs = perturbed_forward(tape, adj, x, params, term.perturbation, dropout)?;
    if term.sample.pairs.is_empty() {
        return Ok(tape.constant(DenseMatrix::scalar(0.0)));
    }
    let (sources, targets): (Vec<usize>, Vec<usize>) = term.sample.pairs.iter().copied().unzip();
    let neighbor = crate::adversarial::gather(term.neighbor_probs, &targets);
    let own = tape.gather_rows(probs, &sources)?;
    let kl = tape.kl_rows(own, neighbor)?;
    let mean = tape.mean(kl)?;
    Ok(tape.scale(mean, beta))
}

fn virtual_term(
    tape: &mut Tape,
    adj: &NormalizedAdjacency,
    x: Var,
    params: &ParamVars,
    term: &VirtualTerm<'_>,
    alpha: f64,
    dropout: &mut Dropout<'_>,
) -> Result<Var> {
    let probs = perturbed_forward(tape, adj, x, params, term.perturbation, dropout)?;
    let kl = tape.kl_rows(probs, term.targets.clone())?;
    let mean = tape.mean(kl)?;
    Ok(tape.scale(mean, alpha))
}
