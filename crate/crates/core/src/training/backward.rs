//! Reverse-mode gradients of the full objective, derived by hand through
//! propagation, both attention softmaxes, fusion and the BPR terms.

use alloc::vec;
use alloc::vec::Vec;

use crate::interactions::{BprTriple, InteractionSet};
use crate::math;
use crate::matrix::Matrix;
use crate::model::{ChannelParams, ModelParams, TENSOR_NAMES};
use crate::propagation::{forward_trace, neighbor_poi_sum, ChannelTrace, FinalEmbeddings, PropagationGraphs};
use crate::ukg::AdjacencyIndex;

use super::dcor::dcor_with_grad;
use super::loss::{total_loss, LossBreakdown};
use super::{HyperParams, TrainError};

/// Gradients share the parameter layout.
pub type Gradients = ModelParams;

/// Upstream gradients on the final per-channel user and POI embeddings.
struct FinalGrads {
    users: Matrix,
    pois: Matrix,
}

/// dL/d(intent embeddings) of `weight · Σ_{i<j} dcor(e_i, e_j)`.
fn independence_grad(intents: &Matrix, weight: f64, out: &mut Matrix) {
    if weight == 0.0 || intents.cols() < 2 {
        return;
    }
    for i in 0..intents.rows() {
        for j in i + 1..intents.rows() {
            let (_, gi, gj) = dcor_with_grad(intents.row(i), intents.row(j)).expect("d >= 2 checked above");
            for (o, g) in out.row_mut(i).iter_mut().zip(&gi) {
                *o += weight * g;
            }
            for (o, g) in out.row_mut(j).iter_mut().zip(&gj) {
                *o += weight * g;
            }
        }
    }
}

fn channel_backward(
    trace: &ChannelTrace,
    params: &ChannelParams,
    adj: &AdjacencyIndex,
    train: &InteractionSet,
    upstream: FinalGrads,
    independence_weight: f64,
) -> ChannelParams {
    let n_users = upstream.users.rows();
    let d = params.emb.cols();
    let n_layers = trace.layers.len() - 1;
    let n_intents = trace.intents.len();
    let gu = upstream.users;

    let mut g_rel = Matrix::zeros(params.rel.rows(), d);
    let mut g_gate = Matrix::zeros(n_users, d);
    let mut g_kg = Matrix::zeros(trace.layers[0].kg.rows(), d);
    for p in 0..upstream.pois.rows() {
        g_kg.row_mut(p).copy_from_slice(upstream.pois.row(p));
    }

    let mut sum = vec![0.0; d];
    for k in (1..=n_layers).rev() {
        let prev = &trace.layers[k - 1].kg;
        let mut g_prev = g_kg.clone();
        for node in 0..prev.rows() {
            let nbrs = adj.neighbors(node);
            if nbrs.is_empty() {
                continue;
            }
            let inv = 1.0 / nbrs.len() as f64;
            let gi = g_kg.row(node);
            for n in nbrs {
                let (r, j) = (n.relation as usize, n.node as usize);
                let rel = params.rel.row(r);
                let v = prev.row(j);
                let gr = g_rel.row_mut(r);
                for c in 0..d {
                    gr[c] += inv * gi[c] * v[c];
                }
                let gv = g_prev.row_mut(j);
                for c in 0..d {
                    gv[c] += inv * rel[c] * gi[c];
                }
            }
        }
        for u in 0..n_users {
            let items = train.user_items(u);
            if items.is_empty() {
                continue;
            }
            let c = 1.0 / (items.len() as f64 * n_intents as f64);
            neighbor_poi_sum(prev, train, u, &mut sum);
            let gu_row = gu.row(u);
            let w = trace.gates.row(u);
            for (gg, (g, s)) in g_gate.row_mut(u).iter_mut().zip(gu_row.iter().zip(&sum)) {
                *gg += c * g * s;
            }
            for &p in items {
                for (gp, (wc, g)) in g_prev.row_mut(p as usize).iter_mut().zip(w.iter().zip(gu_row)) {
                    *gp += c * wc * g;
                }
            }
        }
        g_kg = g_prev;
    }

    // gates w_u = Σ_j β_uj e_j, β_u = softmax_j(e_j · u0)
    let users0 = &trace.layers[0].users;
    let intents = &trace.intents.emb;
    let mut g_users0 = gu.clone();
    let mut g_int = Matrix::zeros(n_intents, d);
    for u in 0..n_users {
        let gg = g_gate.row(u);
        if gg.iter().all(|&x| x == 0.0) {
            continue;
        }
        let beta = trace.beta.row(u);
        let d_beta: Vec<f64> = (0..n_intents).map(|j| math::dot(intents.row(j), gg)).collect();
        let d_logit = math::softmax_backward(beta, &d_beta);
        let u0 = users0.row(u);
        for j in 0..n_intents {
            let (b, dl) = (beta[j], d_logit[j]);
            let ge = g_int.row_mut(j);
            for c in 0..d {
                ge[c] += b * gg[c] + dl * u0[c];
            }
        }
        let gu0 = g_users0.row_mut(u);
        for j in 0..n_intents {
            let dl = d_logit[j];
            for (x, e) in gu0.iter_mut().zip(intents.row(j)) {
                *x += dl * e;
            }
        }
    }
    independence_grad(intents, independence_weight, &mut g_int);

    // e = softmax(S) R
    let alpha = &trace.intents.alpha;
    let mut g_scores = Matrix::zeros(params.intent_scores.rows(), params.intent_scores.cols());
    for i in 0..n_intents {
        let ge = g_int.row(i);
        let d_alpha: Vec<f64> = (0..params.rel.rows()).map(|j| math::dot(ge, params.rel.row(j))).collect();
        g_scores.row_mut(i).copy_from_slice(&math::softmax_backward(alpha.row(i), &d_alpha));
        for j in 0..params.rel.rows() {
            let a = alpha.get(i, j);
            for (gr, g) in g_rel.row_mut(j).iter_mut().zip(ge) {
                *gr += a * g;
            }
        }
    }

    let mut g_emb = Matrix::zeros(params.emb.rows(), d);
    for u in 0..n_users {
        g_emb.row_mut(u).copy_from_slice(g_users0.row(u));
    }
    for node in 0..g_kg.rows() {
        g_emb.row_mut(n_users + node).copy_from_slice(g_kg.row(node));
    }
    ChannelParams { emb: g_emb, rel: g_rel, intent_scores: g_scores }
}

/// Loss and exact gradients for one batch. Runs its own forward pass.
pub fn backward(
    batch: &[BprTriple],
    params: &ModelParams,
    graphs: &PropagationGraphs,
    hp: &HyperParams,
) -> Result<(LossBreakdown, Gradients, FinalEmbeddings), TrainError> {
    let trace = forward_trace(params, graphs);
    let finals = trace.finals();
    let loss = total_loss(batch, params, &finals, hp);

    let (n, m, d) = (finals.n_users(), finals.n_pois(), params.dims.d);
    let mut gu = Matrix::zeros(n, d);
    let mut gp = Matrix::zeros(m, d);
    let mut gug = Matrix::zeros(n, d);
    let mut gpg = Matrix::zeros(m, d);
    for t in batch {
        let (u, pos, neg) = (t.user as usize, t.pos as usize, t.neg as usize);
        let uf = finals.u.row(u);
        let margin = math::dot(uf, finals.p.row(pos)) - math::dot(uf, finals.p.row(neg));
        // d softplus(-z)/dz = -σ(-z)
        let g = -math::sigmoid(-margin);
        for c in 0..d {
            gu.row_mut(u)[c] += g * (finals.p.get(pos, c) - finals.p.get(neg, c));
            gp.row_mut(pos)[c] += g * uf[c];
            gp.row_mut(neg)[c] -= g * uf[c];
        }
        if hp.alpha != 0.0 {
            let ug = finals.u_g.row(u);
            let margin = math::dot(ug, finals.p_g.row(pos)) - math::dot(ug, finals.p_g.row(neg));
            let g = -hp.alpha * math::sigmoid(-margin);
            for c in 0..d {
                gug.row_mut(u)[c] += g * (finals.p_g.get(pos, c) - finals.p_g.get(neg, c));
                gpg.row_mut(pos)[c] += g * ug[c];
                gpg.row_mut(neg)[c] -= g * ug[c];
            }
        }
    }
    // fused = ½ (geo + func)
    gug.add_scaled(&gu, 0.5);
    gpg.add_scaled(&gp, 0.5);
    gu.as_mut_slice().iter_mut().for_each(|x| *x *= 0.5);
    gp.as_mut_slice().iter_mut().for_each(|x| *x *= 0.5);

    let geo = channel_backward(
        &trace.geo,
        &params.geo,
        &graphs.geo.adj,
        &graphs.train,
        FinalGrads { users: gug, pois: gpg },
        hp.lambda_ind,
    );
    let func = channel_backward(
        &trace.func,
        &params.func,
        &graphs.func.adj,
        &graphs.train,
        FinalGrads { users: gu, pois: gp },
        hp.lambda_ind,
    );
    let mut grads = ModelParams { dims: params.dims, geo, func };

    // λ2 ||Θ||² + α λ2 ||Θ_g||²
    let reg_all = 2.0 * hp.lambda_reg;
    let reg_geo = 2.0 * hp.alpha * hp.lambda_reg;
    for (i, (g, p)) in grads.tensors_mut().into_iter().zip(params.tensors()).enumerate() {
        let coef = if i < 3 { reg_all + reg_geo } else { reg_all };
        if coef != 0.0 {
            g.add_scaled(p, coef);
        }
    }

    for (name, g) in TENSOR_NAMES.iter().zip(grads.tensors()) {
        if !g.is_finite() {
            return Err(TrainError::NonFiniteGradient(name));
        }
    }
    Ok((loss, grads, finals))
}
