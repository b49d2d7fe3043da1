//! Objective, gradients, Adam, and the early-stopped training loop.

mod adam;
mod backward;
mod dcor;
mod loss;

pub use adam::{adam_step, adam_update, AdamBuffers, AdamConfig, OptimizerState};
pub use backward::{backward, Gradients};
pub use dcor::{dcor, dcor_with_grad, DEGENERATE_DVAR};
pub use loss::{bpr_counterfactual, bpr_factual, independence_loss, total_loss, LossBreakdown};

use alloc::vec::Vec;
use core::fmt;

use crate::counterfactual::Scorer;
use crate::eval::validation_recall;
use crate::interactions::{sample_bpr_batch, DatasetSplit, InteractionError};
use crate::model::{init_params, ModelDims, ModelError, ModelParams};
use crate::propagation::{forward, PropagationGraphs};
use crate::rng;

/// Loss totals above this abort training.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub enum TrainError {
    DimensionTooSmall,
    NonFiniteGradient(&'static str),
    DivergedLoss { epoch: usize, total: f64 },
    Sampling(InteractionError),
    Model(ModelError),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::DimensionTooSmall => f.write_str("distance correlation needs at least 2 coordinates"),
            TrainError::NonFiniteGradient(t) => write!(f, "non-finite gradient in {t}"),
            TrainError::DivergedLoss { epoch, total } => write!(f, "loss diverged at epoch {epoch}: {total}"),
            TrainError::Sampling(e) => write!(f, "sampling: {e}"),
            TrainError::Model(e) => write!(f, "model: {e}"),
        }
    }
}

impl core::error::Error for TrainError {}

impl From<InteractionError> for TrainError {
    fn from(e: InteractionError) -> Self {
        TrainError::Sampling(e)
    }
}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        TrainError::Model(e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperParams {
    /// λ1, weight of both independence losses.
    pub lambda_ind: f64,
    /// λ2, L2 weight.
    pub lambda_reg: f64,
    /// α, weight of the counterfactual branch.
    pub alpha: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub patience: usize,
    pub max_epochs: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            lambda_ind: 1e-3,
            lambda_reg: 1e-3,
            alpha: 1.0,
            lr: 1e-3,
            batch_size: 1024,
            adam: AdamConfig::default(),
            patience: 10,
            max_epochs: 200,
        }
    }
}

/// One line of the training log. Loss fields are per-batch means.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub val_recall: f64,
    pub wall_secs: f64,
}

/// Hooks into the training loop. Only `validation_metric` is required.
pub trait TrainObserver {
    /// Higher is better; drives early stopping.
    fn validation_metric(&mut self, params: &ModelParams, graphs: &PropagationGraphs, split: &DatasetSplit) -> f64;

    fn on_epoch(&mut self, _record: &EpochRecord) {}

    /// Seconds since training started, for the log.
    fn elapsed_secs(&mut self) -> f64 {
        0.0
    }
}

/// Validation Recall@k under a given scorer.
#[derive(Clone, Copy, Debug)]
pub struct RecallValidator {
    pub scorer: Scorer,
    pub k: usize,
}

impl Default for RecallValidator {
    fn default() -> Self {
        RecallValidator { scorer: Scorer::Tie, k: 20 }
    }
}

impl TrainObserver for RecallValidator {
    fn validation_metric(&mut self, params: &ModelParams, graphs: &PropagationGraphs, split: &DatasetSplit) -> f64 {
        validation_recall(&forward(params, graphs), split, self.scorer, self.k)
    }
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    /// Parameters from the best validation epoch (initial ones if no epoch ran).
    pub params: ModelParams,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_metric: f64,
}

/// Epoch loop: sample, forward, backward, Adam; validate after every epoch
/// and stop after `patience` epochs without strict improvement.
pub fn fit(
    split: &DatasetSplit,
    graphs: &PropagationGraphs,
    dims: ModelDims,
    hp: &HyperParams,
    seed: u64,
    observer: &mut dyn TrainObserver,
) -> Result<FitOutcome, TrainError> {
    dims.validate()?;
    let mut params = init_params(dims, seed);
    let mut state = OptimizerState::new(&params, hp.adam);
    let mut outcome = FitOutcome { params: params.clone(), log: Vec::new(), best_epoch: 0, best_metric: f64::NEG_INFINITY };
    let batches = split.train.len().div_ceil(hp.batch_size.max(1)).max(1);
    let mut stale = 0;
    for epoch in 1..=hp.max_epochs {
        let mut sampler = rng::stream(seed, rng::SAMPLER_STREAM, epoch as u64);
        let mut sum = LossBreakdown::default();
        for _ in 0..batches {
            let batch = sample_bpr_batch(split, hp.batch_size, &mut sampler)?;
            let (loss, grads, _) = backward(&batch, &params, graphs, hp)?;
            if !(loss.total <= DIVERGENCE_THRESHOLD) {
                return Err(TrainError::DivergedLoss { epoch, total: loss.total });
            }
            accumulate(&mut sum, &loss);
            adam_step(&mut params, &grads, &mut state, hp.lr);
        }
        scale(&mut sum, 1.0 / batches as f64);
        let metric = observer.validation_metric(&params, graphs, split);
        let record = EpochRecord { epoch, loss: sum, val_recall: metric, wall_secs: observer.elapsed_secs() };
        observer.on_epoch(&record);
        outcome.log.push(record);
        if metric > outcome.best_metric {
            outcome.best_metric = metric;
            outcome.best_epoch = epoch;
            outcome.params = params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= hp.patience {
                break;
            }
        }
    }
    Ok(outcome)
}

fn accumulate(sum: &mut LossBreakdown, l: &LossBreakdown) {
    sum.l_f += l.l_f;
    sum.l_c += l.l_c;
    sum.l_ind_g += l.l_ind_g;
    sum.l_ind_f += l.l_ind_f;
    sum.l_reg += l.l_reg;
    sum.l_reg_g += l.l_reg_g;
    sum.total += l.total;
}

fn scale(sum: &mut LossBreakdown, s: f64) {
    for v in [
        &mut sum.l_f,
        &mut sum.l_c,
        &mut sum.l_ind_g,
        &mut sum.l_ind_f,
        &mut sum.l_reg,
        &mut sum.l_reg_g,
        &mut sum.total,
    ] {
        *v *= s;
    }
}
