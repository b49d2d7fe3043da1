//! Full-ranking evaluation: Recall@K, NDCG@K (binary relevance, log2
//! discount) and sampled-negative AUC.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::counterfactual::{CatalogScorer, Scorer};
use crate::interactions::{sample_negative, DatasetSplit, InteractionSet};
use crate::math;
use crate::propagation::FinalEmbeddings;
use crate::rng;

pub const DEFAULT_KS: [usize; 3] = [20, 40, 60];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalError {
    EmptyTestSet,
    NoNegatives,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::EmptyTestSet => f.write_str("user has no held-out positives"),
            EvalError::NoNegatives => f.write_str("no negatives to compare against"),
        }
    }
}

impl core::error::Error for EvalError {}

/// POIs not in any `exclude` list (each sorted ascending), ordered by score
/// descending with ties broken by ascending id.
pub fn rank_candidates(scores: &[f64], exclude: &[&[u32]]) -> Vec<u32> {
    let mut ranked: Vec<u32> = (0..scores.len() as u32)
        .filter(|p| exclude.iter().all(|ex| ex.binary_search(p).is_err()))
        .collect();
    ranked.sort_by(|&a, &b| scores[b as usize].total_cmp(&scores[a as usize]).then(a.cmp(&b)));
    ranked
}

fn hits_in_top<'a>(ranked: &'a [u32], positives: &[u32], k: usize) -> impl Iterator<Item = usize> + 'a {
    let mut sorted: Vec<u32> = positives.to_vec();
    sorted.sort_unstable();
    ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(move |(_, p)| sorted.binary_search(p).is_ok())
        .map(|(i, _)| i)
}

pub fn recall_at_k(ranked: &[u32], positives: &[u32], k: usize) -> Result<f64, EvalError> {
    if positives.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    Ok(hits_in_top(ranked, positives, k).count() as f64 / positives.len() as f64)
}

pub fn ndcg_at_k(ranked: &[u32], positives: &[u32], k: usize) -> Result<f64, EvalError> {
    if positives.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let dcg: f64 = hits_in_top(ranked, positives, k).map(|i| 1.0 / math::log2(i as f64 + 2.0)).sum();
    let idcg: f64 = (0..k.min(positives.len())).map(|i| 1.0 / math::log2(i as f64 + 2.0)).sum();
    Ok(dcg / idcg)
}

/// Fraction of (positive, negative) pairs ordered correctly, ties 0.5.
pub fn auc(positive_scores: &[f64], negative_scores: &[f64]) -> Result<f64, EvalError> {
    if positive_scores.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    if negative_scores.is_empty() {
        return Err(EvalError::NoNegatives);
    }
    let mut wins = 0.0;
    for &p in positive_scores {
        for &n in negative_scores {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (positive_scores.len() * negative_scores.len()) as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub scorer: &'static str,
    pub seed: u64,
    pub recall: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
    pub auc: f64,
    pub n_users_evaluated: usize,
}

impl MetricsReport {
    /// False when no user had held-out positives; metric values are then 0
    /// and meaningless.
    pub fn is_defined(&self) -> bool {
        self.n_users_evaluated > 0
    }
}

/// Scores every held-out user with `score_user`, ranks all POIs outside
/// `exclude`, and averages metrics over users with non-empty `heldout`.
/// AUC negatives: one per held-out positive, drawn uniformly outside `all`.
pub fn evaluate_with(
    score_user: impl Fn(usize) -> Vec<f64>,
    heldout: &InteractionSet,
    exclude: &[&InteractionSet],
    all: &InteractionSet,
    ks: &[usize],
    with_auc: bool,
    seed: u64,
) -> (BTreeMap<usize, f64>, BTreeMap<usize, f64>, f64, usize) {
    let mut recall: BTreeMap<usize, f64> = ks.iter().map(|&k| (k, 0.0)).collect();
    let mut ndcg = recall.clone();
    let (mut auc_sum, mut n_auc, mut n) = (0.0, 0usize, 0usize);
    for u in 0..heldout.n_users() {
        let positives = heldout.user_items(u);
        if positives.is_empty() {
            continue;
        }
        let scores = score_user(u);
        let excl: Vec<&[u32]> = exclude.iter().map(|s| s.user_items(u)).collect();
        let ranked = rank_candidates(&scores, &excl);
        for &k in ks {
            *recall.get_mut(&k).unwrap() += recall_at_k(&ranked, positives, k).unwrap();
            *ndcg.get_mut(&k).unwrap() += ndcg_at_k(&ranked, positives, k).unwrap();
        }
        if with_auc {
            let mut r = rng::stream(seed, rng::AUC_STREAM, u as u64);
            let negs: Vec<f64> = positives
                .iter()
                .filter_map(|_| sample_negative(all, u, &mut r).ok())
                .map(|p| scores[p as usize])
                .collect();
            let pos: Vec<f64> = positives.iter().map(|&p| scores[p as usize]).collect();
            if let Ok(a) = auc(&pos, &negs) {
                auc_sum += a;
                n_auc += 1;
            }
        }
        n += 1;
    }
    if n > 0 {
        recall.values_mut().chain(ndcg.values_mut()).for_each(|v| *v /= n as f64);
    }
    let auc_mean = if n_auc > 0 { auc_sum / n_auc as f64 } else { 0.0 };
    (recall, ndcg, auc_mean, n)
}

/// Test-set evaluation. Train and validation positives are excluded from
/// every ranking.
pub fn evaluate(finals: &FinalEmbeddings, split: &DatasetSplit, scorer: Scorer, seed: u64) -> MetricsReport {
    let cs = CatalogScorer::new(finals);
    let (recall, ndcg, auc, n) = evaluate_with(
        |u| cs.scores(u, scorer),
        &split.test,
        &[&split.train, &split.val],
        &split.all,
        &DEFAULT_KS,
        true,
        seed,
    );
    MetricsReport { scorer: scorer.name(), seed, recall, ndcg, auc, n_users_evaluated: n }
}

/// Validation Recall@k, ranking everything outside the training positives.
pub fn validation_recall(finals: &FinalEmbeddings, split: &DatasetSplit, scorer: Scorer, k: usize) -> f64 {
    let cs = CatalogScorer::new(finals);
    let (recall, _, _, _) =
        evaluate_with(|u| cs.scores(u, scorer), &split.val, &[&split.train], &split.all, &[k], false, 0);
    recall[&k]
}
