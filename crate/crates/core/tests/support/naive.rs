//! Naive per-triplet propagation used as an oracle for the batched forward pass.

use poirec_core::interactions::InteractionSet;
use poirec_core::matrix::Matrix;
use poirec_core::model::{init_params, Channel, ModelParams};
use poirec_core::propagation::{forward_trace, PropagationGraphs};
use poirec_core::rng;
use poirec_core::ukg::{EntityClass, EntityRef, GraphKind, Relation, Triplet, UrbanKG};
use rand::Rng;
use std::collections::BTreeSet;

pub struct Case {
    pub kg: UrbanKG,
    pub train: InteractionSet,
    pub pops: [usize; 7],
}

pub fn random_case(seed: u64) -> Case {
    let mut r = rng::stream(seed, 100, 0);
    // at most 20 KG nodes: POIs 1..=6, every other class 1..=2
    let mut pops = [0usize; 7];
    pops[0] = r.random_range(1..=6);
    for p in pops.iter_mut().skip(1) {
        *p = r.random_range(1..=2);
    }
    let n_triplets = r.random_range(0..=30);
    let mut seen = BTreeSet::new();
    for _ in 0..n_triplets {
        let rel = Relation::ALL[r.random_range(0..16)];
        let (hc, tc) = (rel.head_class(), rel.tail_class());
        let h = EntityRef::new(hc, r.random_range(0..pops[hc.index()]) as u32);
        let t = EntityRef::new(tc, r.random_range(0..pops[tc.index()]) as u32);
        seen.insert(Triplet::new(h, rel, t));
    }
    let kg = UrbanKG::new(seen.into_iter().collect(), Some(pops)).unwrap();
    let n_users = r.random_range(1..=5);
    let pairs: Vec<(u32, u32)> = (0..r.random_range(0..12))
        .map(|_| (r.random_range(0..n_users) as u32, r.random_range(0..pops[0]) as u32))
        .collect();
    let train = InteractionSet::from_pairs(n_users, pops[0], pairs).unwrap();
    Case { kg, train, pops }
}

fn classes(kind: GraphKind) -> Vec<EntityClass> {
    EntityClass::ALL[1..].iter().copied().filter(|&c| kind.admits_class(c)).collect()
}

pub fn relations(kind: GraphKind) -> Vec<Relation> {
    Relation::ALL.iter().copied().filter(|&r| kind.admits(r)).collect()
}

fn node_of(e: EntityRef, kind: GraphKind, pops: &[usize; 7]) -> usize {
    if e.class == EntityClass::Poi {
        return e.index as usize;
    }
    let mut offset = pops[0];
    for c in classes(kind) {
        if c == e.class {
            return offset + e.index as usize;
        }
        offset += pops[c.index()];
    }
    unreachable!()
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Returns `(users, kg)` per layer, layer 0 included.
fn oracle(case: &Case, params: &ModelParams, channel: Channel, kind: GraphKind) -> Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let ch = params.channel(channel);
    let d = params.dims.d;
    let n_users = case.train.n_users();
    let rels = relations(kind);
    let rows = |m: &Matrix, from: usize, to: usize| -> Vec<Vec<f64>> { (from..to).map(|i| m.row(i).to_vec()).collect() };
    let n_kg = ch.emb.rows() - n_users;
    let mut users = rows(&ch.emb, 0, n_users);
    let mut kg = rows(&ch.emb, n_users, n_users + n_kg);

    let n_int = ch.intent_scores.rows();
    let mut e = vec![vec![0.0; d]; n_int];
    for j in 0..n_int {
        let alpha = softmax(ch.intent_scores.row(j));
        for (k, a) in alpha.iter().enumerate() {
            for c in 0..d {
                e[j][c] += a * ch.rel.get(k, c);
            }
        }
    }
    let gates: Vec<Vec<f64>> = users
        .iter()
        .map(|u0| {
            let logits: Vec<f64> = e.iter().map(|ej| ej.iter().zip(u0).map(|(a, b)| a * b).sum()).collect();
            let beta = softmax(&logits);
            let mut w = vec![0.0; d];
            for j in 0..n_int {
                for c in 0..d {
                    w[c] += beta[j] * e[j][c];
                }
            }
            w
        })
        .collect();

    let mut out = vec![(users.clone(), kg.clone())];
    for _ in 0..params.dims.n_layers {
        let mut sums = vec![vec![0.0; d]; n_kg];
        let mut counts = vec![0usize; n_kg];
        for t in case.kg.triplets().iter().filter(|t| kind.admits(t.relation)) {
            let ri = rels.iter().position(|&r| r == t.relation).unwrap();
            let h = node_of(t.head, kind, &case.pops);
            let tl = node_of(t.tail, kind, &case.pops);
            for (dst, src) in [(h, tl), (tl, h)] {
                for c in 0..d {
                    sums[dst][c] += ch.rel.get(ri, c) * kg[src][c];
                }
                counts[dst] += 1;
            }
        }
        let mut next_users = users.clone();
        for (u, row) in next_users.iter_mut().enumerate() {
            let items = case.train.user_items(u);
            if items.is_empty() {
                continue;
            }
            let scale = 1.0 / (items.len() as f64 * n_int as f64);
            for c in 0..d {
                let s: f64 = items.iter().map(|&p| kg[p as usize][c]).sum();
                row[c] += scale * gates[u][c] * s;
            }
        }
        for v in 0..n_kg {
            if counts[v] > 0 {
                for c in 0..d {
                    kg[v][c] += sums[v][c] / counts[v] as f64;
                }
            }
        }
        users = next_users;
        out.push((users.clone(), kg.clone()));
    }
    out
}

pub fn assert_close(batched: &Matrix, naive: &[Vec<f64>], what: &str) {
    assert_eq!(batched.rows(), naive.len(), "{what} rows");
    for (i, row) in naive.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let diff = (batched.get(i, c) - v).abs();
            assert!(diff < 1e-10, "{what}[{i}][{c}] batched {} naive {v}", batched.get(i, c));
        }
    }
}

pub fn check(case: &Case, unsplit: bool, seed: u64) {
    let graphs = if unsplit {
        PropagationGraphs::unsplit(&case.kg, case.train.clone())
    } else {
        PropagationGraphs::split(&case.kg, case.train.clone())
    };
    let n_intents = 1 + (seed % 3) as usize;
    let layers = 1 + (seed % 3) as usize;
    let params = init_params(graphs.dims(3 + (seed % 4) as usize, n_intents, layers), seed);
    let trace = forward_trace(&params, &graphs);
    for (channel, split_kind) in [(Channel::Geo, GraphKind::Geographical), (Channel::Func, GraphKind::Functional)] {
        let kind = if unsplit { GraphKind::Unsplit } else { split_kind };
        let naive = oracle(case, &params, channel, kind);
        let layers = &trace.channel(channel).layers;
        assert_eq!(layers.len(), naive.len());
        for (l, (state, (nu, nk))) in layers.iter().zip(&naive).enumerate() {
            assert_close(&state.users, nu, &format!("seed {seed} {channel:?} layer {l} users"));
            assert_close(&state.kg, nk, &format!("seed {seed} {channel:?} layer {l} kg"));
        }
    }
}
