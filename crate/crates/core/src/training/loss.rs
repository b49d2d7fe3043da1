use crate::counterfactual::{score_geo, score_match};
use crate::interactions::BprTriple;
use crate::math;
use crate::model::{intent_embeddings, IntentSet, ModelParams};
use crate::propagation::FinalEmbeddings;

use super::dcor::dcor;
use super::HyperParams;

/// Each component of the objective plus the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub l_f: f64,
    pub l_c: f64,
    pub l_ind_g: f64,
    pub l_ind_f: f64,
    pub l_reg: f64,
    pub l_reg_g: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// `l_f + λ1 (l_ind_g + l_ind_f) + λ2 l_reg + α (l_c + λ2 l_reg_g)`
    pub fn assemble(
        l_f: f64,
        l_c: f64,
        l_ind_g: f64,
        l_ind_f: f64,
        l_reg: f64,
        l_reg_g: f64,
        hp: &HyperParams,
    ) -> Self {
        let total = l_f
            + hp.lambda_ind * (l_ind_g + l_ind_f)
            + hp.lambda_reg * l_reg
            + hp.alpha * (l_c + hp.lambda_reg * l_reg_g);
        LossBreakdown { l_f, l_c, l_ind_g, l_ind_f, l_reg, l_reg_g, total }
    }
}

/// Sum of `dcor(e_i, e_j)` over unordered intent pairs. Zero for a single
/// intent or `d < 2`.
pub fn independence_loss(intents: &IntentSet) -> f64 {
    let n = intents.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += dcor(intents.emb.row(i), intents.emb.row(j)).unwrap_or(0.0);
        }
    }
    total
}

/// `Σ -ln σ(Y(u,pos) - Y(u,neg))` over fused match scores.
pub fn bpr_factual(batch: &[BprTriple], finals: &FinalEmbeddings) -> f64 {
    batch
        .iter()
        .map(|t| {
            let u = finals.u.row(t.user as usize);
            let margin = score_match(u, finals.p.row(t.pos as usize)) - score_match(u, finals.p.row(t.neg as usize));
            math::softplus(-margin)
        })
        .sum()
}

/// Same form over geographical-chunk scores.
pub fn bpr_counterfactual(batch: &[BprTriple], finals: &FinalEmbeddings) -> f64 {
    batch
        .iter()
        .map(|t| {
            let u = finals.u_g.row(t.user as usize);
            let margin = score_geo(u, finals.p_g.row(t.pos as usize)) - score_geo(u, finals.p_g.row(t.neg as usize));
            math::softplus(-margin)
        })
        .sum()
}

/// Full objective for one batch given already-propagated `finals`.
pub fn total_loss(batch: &[BprTriple], params: &ModelParams, finals: &FinalEmbeddings, hp: &HyperParams) -> LossBreakdown {
    let ig = intent_embeddings(&params.geo.intent_scores, &params.geo.rel);
    let if_ = intent_embeddings(&params.func.intent_scores, &params.func.rel);
    LossBreakdown::assemble(
        bpr_factual(batch, finals),
        bpr_counterfactual(batch, finals),
        independence_loss(&ig),
        independence_loss(&if_),
        params.geo.squared_norm() + params.func.squared_norm(),
        params.geo.squared_norm(),
        hp,
    )
}
