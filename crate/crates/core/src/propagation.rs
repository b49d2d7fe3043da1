//! Layered message passing over the two knowledge subgraphs and the
//! user-POI interaction graph.
//!
//! Per channel and layer:
//! - every KG node (POI or entity) adds the mean of `r ⊙ v` over its
//!   neighbors `(r, v)`, forward and inverse;
//! - every user adds `1/(|N_u|·|I|) · Σ_j β_j e_j ⊙ Σ_{p ∈ N_u} p`, reading
//!   previous-layer POIs. `β` is computed once from the layer-0 user row.
//!
//! Nodes without neighbors pass through unchanged.

use alloc::vec::Vec;

use crate::interactions::InteractionSet;
use crate::matrix::Matrix;
use crate::model::{intent_embeddings, user_intent_attention, Channel, ChannelDims, ChannelParams, IntentSet, ModelDims, ModelParams};
use crate::ukg::{build_adjacency, AdjacencyIndex, GraphKind, SubGraph, UrbanKG};

/// Adjacency of one channel plus bookkeeping for logs.
#[derive(Clone, Debug)]
pub struct ChannelGraph {
    pub kind: GraphKind,
    pub adj: AdjacencyIndex,
    pub n_triplets: usize,
}

impl ChannelGraph {
    pub fn new(sub: &SubGraph) -> Self {
        ChannelGraph { kind: sub.kind(), adj: build_adjacency(sub), n_triplets: sub.triplets().len() }
    }
}

/// Everything propagation reads besides the parameters. `train` supplies
/// the user neighborhoods; only training positives are used.
#[derive(Clone, Debug)]
pub struct PropagationGraphs {
    pub geo: ChannelGraph,
    pub func: ChannelGraph,
    pub train: InteractionSet,
}

impl PropagationGraphs {
    /// Disentangled setup: geographical relations feed the geo channel,
    /// functional relations the functional one.
    pub fn split(kg: &UrbanKG, train: InteractionSet) -> Self {
        PropagationGraphs {
            geo: ChannelGraph::new(&SubGraph::from_kg(kg, GraphKind::Geographical)),
            func: ChannelGraph::new(&SubGraph::from_kg(kg, GraphKind::Functional)),
            train,
        }
    }

    /// Both channels propagate over the whole graph.
    pub fn unsplit(kg: &UrbanKG, train: InteractionSet) -> Self {
        let g = ChannelGraph::new(&SubGraph::from_kg(kg, GraphKind::Unsplit));
        PropagationGraphs { geo: g.clone(), func: g, train }
    }

    /// Model shape matching these graphs. POI count comes from `train`.
    pub fn dims(&self, d: usize, n_intents: usize, n_layers: usize) -> ModelDims {
        let n_pois = self.train.n_pois();
        ModelDims {
            d,
            n_users: self.train.n_users(),
            n_pois,
            n_geo_entities: self.geo.adj.n_nodes() - n_pois,
            n_func_entities: self.func.adj.n_nodes() - n_pois,
            n_geo_relations: self.geo.adj.n_relations(),
            n_func_relations: self.func.adj.n_relations(),
            n_intents_geo: n_intents,
            n_intents_func: n_intents,
            n_layers,
        }
    }

    pub fn channel(&self, channel: Channel) -> &ChannelGraph {
        match channel {
            Channel::Geo => &self.geo,
            Channel::Func => &self.func,
        }
    }
}

/// Embeddings of one channel at one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerState {
    pub layer_index: usize,
    /// `N x d`
    pub users: Matrix,
    /// `(M + entities) x d`, POIs first.
    pub kg: Matrix,
    pub n_pois: usize,
}

impl LayerState {
    pub fn initial(params: &ChannelParams, dims: ChannelDims) -> Self {
        LayerState {
            layer_index: 0,
            users: params.emb.slice_rows(0, dims.n_users),
            kg: params.emb.slice_rows(dims.n_users, dims.kg_nodes()),
            n_pois: dims.n_pois,
        }
    }

    pub fn pois(&self) -> Matrix {
        self.kg.slice_rows(0, self.n_pois)
    }
}

/// One KG layer: POIs and entities aggregate relation-modulated neighbors.
pub fn propagate_kg_layer(prev: &Matrix, adj: &AdjacencyIndex, relations: &Matrix) -> Matrix {
    let mut next = prev.clone();
    let d = prev.cols();
    let mut acc = alloc::vec![0.0; d];
    for node in 0..prev.rows() {
        let nbrs = adj.neighbors(node);
        if nbrs.is_empty() {
            continue;
        }
        acc.iter_mut().for_each(|a| *a = 0.0);
        for n in nbrs {
            let r = relations.row(n.relation as usize);
            let v = prev.row(n.node as usize);
            for k in 0..d {
                acc[k] += r[k] * v[k];
            }
        }
        let inv = 1.0 / nbrs.len() as f64;
        for (x, a) in next.row_mut(node).iter_mut().zip(&acc) {
            *x += inv * a;
        }
    }
    next
}

/// `N x |I|` attention of each user over intents, from layer-0 users.
pub fn user_attention(users0: &Matrix, intents: &IntentSet) -> Matrix {
    let mut beta = Matrix::zeros(users0.rows(), intents.len());
    for u in 0..users0.rows() {
        beta.row_mut(u).copy_from_slice(&user_intent_attention(users0.row(u), intents));
    }
    beta
}

/// `w_u = Σ_j β(u,j) e_j`, the intent-mixed gate each user applies to its
/// aggregated POIs.
pub fn user_gates(beta: &Matrix, intents: &IntentSet) -> Matrix {
    let mut gates = Matrix::zeros(beta.rows(), intents.emb.cols());
    for u in 0..beta.rows() {
        let g = gates.row_mut(u);
        for j in 0..intents.len() {
            let b = beta.get(u, j);
            for (x, e) in g.iter_mut().zip(intents.emb.row(j)) {
                *x += b * e;
            }
        }
    }
    gates
}

/// Sum of previous-layer POI rows over each user's training positives.
pub(crate) fn neighbor_poi_sum(prev_kg: &Matrix, train: &InteractionSet, user: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for &p in train.user_items(user) {
        for (o, v) in out.iter_mut().zip(prev_kg.row(p as usize)) {
            *o += v;
        }
    }
}

/// One user layer. `prev_kg` holds previous-layer POIs in its first rows.
pub fn propagate_user_layer(
    prev_users: &Matrix,
    prev_kg: &Matrix,
    train: &InteractionSet,
    intents: &IntentSet,
    beta: &Matrix,
) -> Matrix {
    let gates = user_gates(beta, intents);
    let mut next = prev_users.clone();
    let mut sum = alloc::vec![0.0; prev_users.cols()];
    for u in 0..prev_users.rows() {
        let deg = train.user_items(u).len();
        if deg == 0 {
            continue;
        }
        neighbor_poi_sum(prev_kg, train, u, &mut sum);
        let scale = 1.0 / (deg as f64 * intents.len() as f64);
        for ((x, w), s) in next.row_mut(u).iter_mut().zip(gates.row(u)).zip(&sum) {
            *x += scale * w * s;
        }
    }
    next
}

/// All layers of one channel, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ChannelTrace {
    pub layers: Vec<LayerState>,
    pub intents: IntentSet,
    pub beta: Matrix,
    pub gates: Matrix,
}

impl ChannelTrace {
    pub fn last(&self) -> &LayerState {
        self.layers.last().expect("layer 0 always present")
    }
}

pub fn forward_channel(
    params: &ChannelParams,
    dims: ChannelDims,
    adj: &AdjacencyIndex,
    train: &InteractionSet,
    n_layers: usize,
) -> ChannelTrace {
    let intents = intent_embeddings(&params.intent_scores, &params.rel);
    let initial = LayerState::initial(params, dims);
    let beta = user_attention(&initial.users, &intents);
    let gates = user_gates(&beta, &intents);
    let mut layers = Vec::with_capacity(n_layers + 1);
    layers.push(initial);
    for l in 1..=n_layers {
        let prev = &layers[l - 1];
        let kg = propagate_kg_layer(&prev.kg, adj, &params.rel);
        let users = propagate_user_layer(&prev.users, &prev.kg, train, &intents, &beta);
        layers.push(LayerState { layer_index: l, users, kg, n_pois: dims.n_pois });
    }
    ChannelTrace { layers, intents, beta, gates }
}

/// Final per-channel embeddings and their arithmetic-mean fusion.
#[derive(Clone, Debug, PartialEq)]
pub struct FinalEmbeddings {
    pub u_g: Matrix,
    pub u_f: Matrix,
    pub p_g: Matrix,
    pub p_f: Matrix,
    pub u: Matrix,
    pub p: Matrix,
}

fn mean_of(a: &Matrix, b: &Matrix) -> Matrix {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| 0.5 * (x + y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data)
}

impl FinalEmbeddings {
    pub fn from_chunks(u_g: Matrix, u_f: Matrix, p_g: Matrix, p_f: Matrix) -> Self {
        let u = mean_of(&u_g, &u_f);
        let p = mean_of(&p_g, &p_f);
        FinalEmbeddings { u_g, u_f, p_g, p_f, u, p }
    }

    pub fn n_users(&self) -> usize {
        self.u.rows()
    }

    pub fn n_pois(&self) -> usize {
        self.p.rows()
    }
}

#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub geo: ChannelTrace,
    pub func: ChannelTrace,
}

impl ForwardTrace {
    pub fn channel(&self, channel: Channel) -> &ChannelTrace {
        match channel {
            Channel::Geo => &self.geo,
            Channel::Func => &self.func,
        }
    }

    pub fn finals(&self) -> FinalEmbeddings {
        let (g, f) = (self.geo.last(), self.func.last());
        FinalEmbeddings::from_chunks(g.users.clone(), f.users.clone(), g.pois(), f.pois())
    }
}

pub fn forward_trace(params: &ModelParams, graphs: &PropagationGraphs) -> ForwardTrace {
    let dims = params.dims;
    let run = |c: Channel| {
        forward_channel(params.channel(c), dims.channel(c), &graphs.channel(c).adj, &graphs.train, dims.n_layers)
    };
    ForwardTrace { geo: run(Channel::Geo), func: run(Channel::Func) }
}

pub fn forward(params: &ModelParams, graphs: &PropagationGraphs) -> FinalEmbeddings {
    forward_trace(params, graphs).finals()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelDims};
    use crate::ukg::parse_triplets;
    use alloc::vec;

    fn graphs() -> (UrbanKG, PropagationGraphs) {
        let kg = parse_triplets(
            "POI:0\tLocateAt\tRegion:0\nPOI:1\tLocateAt\tRegion:1\nRegion:0\tNearBy\tRegion:1\n\
             POI:1\tBrandOf\tBrand:0\nPOI:2\tBrandOf\tBrand:0\n#counts POI=4 Region=2 Brand=1",
        )
        .unwrap();
        let train = InteractionSet::from_pairs(3, 4, vec![(0, 0), (0, 1), (1, 2)]).unwrap();
        let g = PropagationGraphs::split(&kg, train);
        (kg, g)
    }

    fn dims_for(kg: &UrbanKG, layers: usize) -> ModelDims {
        let (geo, func) = crate::ukg::split_subgraphs(kg);
        ModelDims::for_graphs(3, &geo, &func, 4, 2, layers)
    }

    #[test]
    fn isolated_poi_passes_through() {
        let (kg, g) = graphs();
        let p = init_params(dims_for(&kg, 1), 1);
        let t = forward_trace(&p, &g);
        // POI 3 has no edges at all
        assert_eq!(t.geo.layers[1].kg.row(3), t.geo.layers[0].kg.row(3));
        assert_eq!(t.func.layers[1].kg.row(3), t.func.layers[0].kg.row(3));
        // user 2 has no positives
        assert_eq!(t.geo.layers[1].users.row(2), t.geo.layers[0].users.row(2));
    }

    #[test]
    fn identity_relation_adds_neighbor() {
        let kg = parse_triplets("POI:0\tLocateAt\tRegion:0").unwrap();
        let sub = SubGraph::from_kg(&kg, GraphKind::Geographical);
        let adj = build_adjacency(&sub);
        let prev = Matrix::from_rows(&[&[1.0, 2.0], &[0.5, -3.0]]);
        let mut rel = Matrix::zeros(5, 2);
        rel.row_mut(sub.relation_id(crate::ukg::Relation::LocateAt).unwrap()).fill(1.0);
        let next = propagate_kg_layer(&prev, &adj, &rel);
        assert_eq!(next.row(0), &[1.5, -1.0]);
    }

    #[test]
    fn single_intent_single_positive_collapse() {
        let train = InteractionSet::from_pairs(1, 1, vec![(0, 0)]).unwrap();
        let intents = IntentSet { alpha: Matrix::from_rows(&[&[1.0]]), emb: Matrix::from_rows(&[&[1.0, 1.0]]) };
        let users = Matrix::from_rows(&[&[0.1, 0.2]]);
        let kg = Matrix::from_rows(&[&[3.0, -1.0]]);
        let beta = user_attention(&users, &intents);
        let next = propagate_user_layer(&users, &kg, &train, &intents, &beta);
        assert_eq!(next.row(0), &[3.1, -0.8]);
    }

    #[test]
    fn zero_layers_is_identity() {
        let (kg, g) = graphs();
        let p = init_params(dims_for(&kg, 0), 2);
        let f = forward(&p, &g);
        assert_eq!(f.u_g, p.geo.emb.slice_rows(0, 3));
        assert_eq!(f.p_f, p.func.emb.slice_rows(3, 4));
        for i in 0..f.u.as_slice().len() {
            assert_eq!(f.u.as_slice()[i], 0.5 * (f.u_g.as_slice()[i] + f.u_f.as_slice()[i]));
        }
    }

    #[test]
    fn zero_relations_freeze_kg_nodes() {
        let (kg, g) = graphs();
        let mut p = init_params(dims_for(&kg, 3), 3);
        p.geo.rel.fill(0.0);
        p.func.rel.fill(0.0);
        let t = forward_trace(&p, &g);
        for l in &t.geo.layers {
            assert_eq!(l.kg, t.geo.layers[0].kg);
        }
        // intents are mixtures of zero relations, so users freeze too
        assert_eq!(t.func.last().users, t.func.layers[0].users);
    }
}
