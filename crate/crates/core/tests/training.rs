use poirec_core::gradcheck::tiny_instance;
use poirec_core::interactions::{split_dataset, BprTriple, DatasetSplit, SplitRatios};
use poirec_core::math::softplus;
use poirec_core::model::{init_params, ModelParams};
use poirec_core::propagation::{forward, PropagationGraphs};
use poirec_core::synthgen::{generate_city, CityConfig};
use poirec_core::training::*;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[test]
fn total_loss_matches_component_oracle() {
    let inst = tiny_instance(4);
    let finals = forward(&inst.params, &inst.graphs);
    let hp = inst.hp;
    let got = total_loss(&inst.batch, &inst.params, &finals, &hp);
    let mut l_f = 0.0;
    let mut l_c = 0.0;
    for t in &inst.batch {
        let (u, p, n) = (t.user as usize, t.pos as usize, t.neg as usize);
        l_f += -(1.0 / (1.0 + (-(dot(finals.u.row(u), finals.p.row(p)) - dot(finals.u.row(u), finals.p.row(n)))).exp())).ln();
        l_c += -(1.0 / (1.0 + (-(dot(finals.u_g.row(u), finals.p_g.row(p)) - dot(finals.u_g.row(u), finals.p_g.row(n)))).exp())).ln();
    }
    let sq = |p: &ModelParams, geo_only: bool| -> f64 {
        let t = p.tensors();
        let take = if geo_only { 3 } else { 6 };
        t.iter().take(take).flat_map(|m| m.as_slice()).map(|x| x * x).sum()
    };
    let l_reg = sq(&inst.params, false);
    let l_reg_g = sq(&inst.params, true);
    assert!((got.l_f - l_f).abs() < 1e-12);
    assert!((got.l_c - l_c).abs() < 1e-12);
    assert!((got.l_reg - l_reg).abs() < 1e-12);
    assert!((got.l_reg_g - l_reg_g).abs() < 1e-12);
    let total = l_f + hp.lambda_ind * (got.l_ind_g + got.l_ind_f) + hp.lambda_reg * l_reg + hp.alpha * (l_c + hp.lambda_reg * l_reg_g);
    assert!((got.total - total).abs() < 1e-12);
}

#[test]
fn zero_weights_leave_factual_loss_only() {
    let inst = tiny_instance(5);
    let finals = forward(&inst.params, &inst.graphs);
    let hp = HyperParams { lambda_ind: 0.0, lambda_reg: 0.0, alpha: 0.0, ..HyperParams::default() };
    let l = total_loss(&inst.batch, &inst.params, &finals, &hp);
    assert_eq!(l.total, l.l_f);
}

#[test]
fn duplicated_batch_doubles_bpr_terms() {
    let inst = tiny_instance(6);
    let finals = forward(&inst.params, &inst.graphs);
    let doubled: Vec<BprTriple> = inst.batch.iter().chain(&inst.batch).copied().collect();
    assert!((bpr_factual(&doubled, &finals) - 2.0 * bpr_factual(&inst.batch, &finals)).abs() < 1e-12);
    assert!((bpr_counterfactual(&doubled, &finals) - 2.0 * bpr_counterfactual(&inst.batch, &finals)).abs() < 1e-12);
}

#[test]
fn regularizer_gradient_is_two_lambda_x() {
    let inst = tiny_instance(7);
    let base = HyperParams { lambda_ind: 0.0, lambda_reg: 0.0, alpha: 0.0, ..HyperParams::default() };
    let with_reg = HyperParams { lambda_reg: 0.05, ..base };
    let (_, g0, _) = backward(&inst.batch, &inst.params, &inst.graphs, &base).unwrap();
    let (_, g1, _) = backward(&inst.batch, &inst.params, &inst.graphs, &with_reg).unwrap();
    for ((a, b), x) in g0.tensors().iter().zip(g1.tensors()).zip(inst.params.tensors()) {
        for i in 0..x.as_slice().len() {
            let diff = b.as_slice()[i] - a.as_slice()[i];
            assert!((diff - 2.0 * 0.05 * x.as_slice()[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn saturated_margins_give_vanishing_gradients() {
    let mut inst = tiny_instance(8);
    inst.params.dims.n_layers = 0;
    let hp = HyperParams { lambda_ind: 0.0, lambda_reg: 0.0, alpha: 0.0, ..HyperParams::default() };
    // Make every positive beat every negative by a margin of at least 50.
    let n_users = inst.params.dims.n_users;
    let d = inst.params.dims.d;
    for ch in [&mut inst.params.geo, &mut inst.params.func] {
        ch.emb.fill(0.0);
        for u in 0..n_users {
            ch.emb.row_mut(u).fill(1.0);
        }
    }
    inst.batch = (0..n_users as u32).map(|u| BprTriple { user: u, pos: 0, neg: 1 + u % 2 }).collect();
    for ch in [&mut inst.params.geo, &mut inst.params.func] {
        ch.emb.row_mut(n_users).fill(100.0 / d as f64);
    }
    let (loss, grads, _) = backward(&inst.batch, &inst.params, &inst.graphs, &hp).unwrap();
    assert!(loss.l_f < softplus(-50.0) * inst.batch.len() as f64 * 1.0001);
    for t in grads.tensors() {
        assert!(t.as_slice().iter().all(|g| g.abs() < 1e-8));
    }
}

struct Constant;

impl TrainObserver for Constant {
    fn validation_metric(&mut self, _: &ModelParams, _: &PropagationGraphs, _: &DatasetSplit) -> f64 {
        0.25
    }
}

fn small_setup() -> (DatasetSplit, PropagationGraphs) {
    let cfg = CityConfig { n_users: 30, n_pois: 60, n_brands: 10, interactions_per_user: 6, ..CityConfig::default() };
    let city = generate_city(&cfg).unwrap();
    let split = split_dataset(&city.interactions, SplitRatios::default(), 0).unwrap();
    let graphs = PropagationGraphs::split(&city.kg, split.train.clone());
    (split, graphs)
}

#[test]
fn constant_validation_stops_after_patience() {
    let (split, graphs) = small_setup();
    let hp = HyperParams { patience: 10, max_epochs: 100, batch_size: 64, ..HyperParams::default() };
    let out = fit(&split, &graphs, graphs.dims(8, 2, 2), &hp, 1, &mut Constant).unwrap();
    // epoch 1 sets the best; ten stale epochs follow
    assert_eq!(out.log.len(), 11);
    assert_eq!(out.best_epoch, 1);
}

#[test]
fn zero_epochs_returns_initialization() {
    let (split, graphs) = small_setup();
    let dims = graphs.dims(8, 2, 2);
    let hp = HyperParams { max_epochs: 0, ..HyperParams::default() };
    let out = fit(&split, &graphs, dims, &hp, 3, &mut Constant).unwrap();
    assert!(out.log.is_empty());
    assert_eq!(out.params, init_params(dims, 3));
}

#[test]
fn loss_falls_over_first_epochs() {
    let (split, graphs) = small_setup();
    let hp = HyperParams { max_epochs: 5, patience: 100, batch_size: 64, lr: 1e-2, ..HyperParams::default() };
    let out = fit(&split, &graphs, graphs.dims(8, 2, 2), &hp, 2, &mut RecallValidator::default()).unwrap();
    assert_eq!(out.log.len(), 5);
    assert!(out.log[4].loss.total < out.log[0].loss.total);
}

#[test]
fn training_is_deterministic() {
    let (split, graphs) = small_setup();
    let hp = HyperParams { max_epochs: 3, batch_size: 64, ..HyperParams::default() };
    let a = fit(&split, &graphs, graphs.dims(8, 2, 2), &hp, 5, &mut RecallValidator::default()).unwrap();
    let b = fit(&split, &graphs, graphs.dims(8, 2, 2), &hp, 5, &mut RecallValidator::default()).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.log.iter().map(|r| r.loss).collect::<Vec<_>>(), b.log.iter().map(|r| r.loss).collect::<Vec<_>>());
}
