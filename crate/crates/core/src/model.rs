//! Trainable parameters and the intent/attention computations built on them.
//!
//! Each channel (geographical, functional) owns one embedding table laid out
//! as `[users; POIs; non-POI entities]`, a relation table, and an
//! intent-by-relation score matrix.

use alloc::vec::Vec;
use core::fmt;

use rand::Rng as _;

use crate::math;
use crate::matrix::Matrix;
use crate::rng;
use crate::ukg::SubGraph;

pub const DEFAULT_DIM: usize = 32;
pub const DEFAULT_LAYERS: usize = 3;
pub const DEFAULT_INTENTS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    Geo,
    Func,
}

impl Channel {
    pub const BOTH: [Channel; 2] = [Channel::Geo, Channel::Func];
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelError {
    InvalidDims(&'static str),
    DimsMismatch { expected: ModelDims, found: ModelDims },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::InvalidDims(what) => write!(f, "invalid model dims: {what} must be at least 1"),
            ModelError::DimsMismatch { expected, found } => {
                write!(f, "dims mismatch: expected {expected}, found {found}")
            }
        }
    }
}

impl core::error::Error for ModelError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub d: usize,
    pub n_users: usize,
    pub n_pois: usize,
    pub n_geo_entities: usize,
    pub n_func_entities: usize,
    pub n_geo_relations: usize,
    pub n_func_relations: usize,
    pub n_intents_geo: usize,
    pub n_intents_func: usize,
    pub n_layers: usize,
}

impl fmt::Display for ModelDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "d={} users={} pois={} geo_entities={} func_entities={} geo_relations={} func_relations={} \
             geo_intents={} func_intents={} layers={}",
            self.d,
            self.n_users,
            self.n_pois,
            self.n_geo_entities,
            self.n_func_entities,
            self.n_geo_relations,
            self.n_func_relations,
            self.n_intents_geo,
            self.n_intents_func,
            self.n_layers
        )
    }
}

/// Shape of one channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChannelDims {
    pub d: usize,
    pub n_users: usize,
    pub n_pois: usize,
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_intents: usize,
}

impl ChannelDims {
    pub fn rows(&self) -> usize {
        self.n_users + self.n_pois + self.n_entities
    }

    /// POIs plus non-POI entities.
    pub fn kg_nodes(&self) -> usize {
        self.n_pois + self.n_entities
    }
}

impl ModelDims {
    /// Dims matching a pair of propagation graphs.
    pub fn for_graphs(
        n_users: usize,
        geo: &SubGraph,
        func: &SubGraph,
        d: usize,
        n_intents: usize,
        n_layers: usize,
    ) -> Self {
        ModelDims {
            d,
            n_users,
            n_pois: geo.n_pois(),
            n_geo_entities: geo.entity_count(),
            n_func_entities: func.entity_count(),
            n_geo_relations: geo.relations().len(),
            n_func_relations: func.relations().len(),
            n_intents_geo: n_intents,
            n_intents_func: n_intents,
            n_layers,
        }
    }

    /// Entity counts may be zero (a side of the graph can be empty) and
    /// `n_layers == 0` is a legal degenerate config.
    pub fn validate(&self) -> Result<(), ModelError> {
        let checks = [
            (self.d, "d"),
            (self.n_users, "n_users"),
            (self.n_pois, "n_pois"),
            (self.n_geo_relations, "n_geo_relations"),
            (self.n_func_relations, "n_func_relations"),
            (self.n_intents_geo, "n_intents_geo"),
            (self.n_intents_func, "n_intents_func"),
        ];
        for (v, name) in checks {
            if v == 0 {
                return Err(ModelError::InvalidDims(name));
            }
        }
        Ok(())
    }

    pub fn channel(&self, channel: Channel) -> ChannelDims {
        let (n_entities, n_relations, n_intents) = match channel {
            Channel::Geo => (self.n_geo_entities, self.n_geo_relations, self.n_intents_geo),
            Channel::Func => (self.n_func_entities, self.n_func_relations, self.n_intents_func),
        };
        ChannelDims { d: self.d, n_users: self.n_users, n_pois: self.n_pois, n_entities, n_relations, n_intents }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelParams {
    /// `[users; POIs; entities] x d`
    pub emb: Matrix,
    /// `relations x d`
    pub rel: Matrix,
    /// `intents x relations`
    pub intent_scores: Matrix,
}

impl ChannelParams {
    pub fn zeros(dims: ChannelDims) -> Self {
        ChannelParams {
            emb: Matrix::zeros(dims.rows(), dims.d),
            rel: Matrix::zeros(dims.n_relations, dims.d),
            intent_scores: Matrix::zeros(dims.n_intents, dims.n_relations),
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.emb.squared_norm() + self.rel.squared_norm() + self.intent_scores.squared_norm()
    }
}

/// All six trainable tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub geo: ChannelParams,
    pub func: ChannelParams,
}

pub const TENSOR_NAMES: [&str; 6] = ["E_g", "R_g", "S_g", "E_f", "R_f", "S_f"];

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        ModelParams {
            dims,
            geo: ChannelParams::zeros(dims.channel(Channel::Geo)),
            func: ChannelParams::zeros(dims.channel(Channel::Func)),
        }
    }

    pub fn channel(&self, channel: Channel) -> &ChannelParams {
        match channel {
            Channel::Geo => &self.geo,
            Channel::Func => &self.func,
        }
    }

    pub fn channel_mut(&mut self, channel: Channel) -> &mut ChannelParams {
        match channel {
            Channel::Geo => &mut self.geo,
            Channel::Func => &mut self.func,
        }
    }

    /// Tensors in `TENSOR_NAMES` order.
    pub fn tensors(&self) -> [&Matrix; 6] {
        [
            &self.geo.emb,
            &self.geo.rel,
            &self.geo.intent_scores,
            &self.func.emb,
            &self.func.rel,
            &self.func.intent_scores,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix; 6] {
        [
            &mut self.geo.emb,
            &mut self.geo.rel,
            &mut self.geo.intent_scores,
            &mut self.func.emb,
            &mut self.func.rel,
            &mut self.func.intent_scores,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn check_dims(&self, expected: &ModelDims) -> Result<(), ModelError> {
        if &self.dims != expected {
            return Err(ModelError::DimsMismatch { expected: *expected, found: self.dims });
        }
        Ok(())
    }
}

fn xavier_uniform(rows: usize, cols: usize, rng: &mut rng::Rng) -> Matrix {
    let bound = math::sqrt(6.0 / (rows + cols) as f64);
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
    Matrix::from_vec(rows, cols, data)
}

/// Xavier-uniform initialization of every tensor, fans taken as the tensor's
/// (rows, cols). Deterministic per seed.
pub fn init_params(dims: ModelDims, seed: u64) -> ModelParams {
    let channel = |c: Channel, stream_index: u64| {
        let cd = dims.channel(c);
        let mut r = rng::stream(seed, rng::INIT_STREAM, stream_index);
        ChannelParams {
            emb: xavier_uniform(cd.rows(), cd.d, &mut r),
            rel: xavier_uniform(cd.n_relations, cd.d, &mut r),
            intent_scores: xavier_uniform(cd.n_intents, cd.n_relations, &mut r),
        }
    };
    let geo = channel(Channel::Geo, 0);
    let func = channel(Channel::Func, 1);
    ModelParams { dims, geo, func }
}

/// Intent embeddings `e_i = Σ_j α(i,j) r_j` with `α` the row softmax of the
/// intent scores.
#[derive(Clone, Debug, PartialEq)]
pub struct IntentSet {
    /// `intents x relations`
    pub alpha: Matrix,
    /// `intents x d`
    pub emb: Matrix,
}

impl IntentSet {
    pub fn len(&self) -> usize {
        self.emb.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.emb.rows() == 0
    }
}

pub fn intent_embeddings(scores: &Matrix, relations: &Matrix) -> IntentSet {
    assert_eq!(scores.cols(), relations.rows(), "intent scores must have one column per relation");
    let (n_int, d) = (scores.rows(), relations.cols());
    let mut alpha = Matrix::zeros(n_int, scores.cols());
    let mut emb = Matrix::zeros(n_int, d);
    for i in 0..n_int {
        math::softmax_into(scores.row(i), alpha.row_mut(i));
        let e = emb.row_mut(i);
        for j in 0..relations.rows() {
            let a = alpha.get(i, j);
            for (x, r) in e.iter_mut().zip(relations.row(j)) {
                *x += a * r;
            }
        }
    }
    IntentSet { alpha, emb }
}

/// Attention of one user over intents: softmax of `e_j · u0`.
pub fn user_intent_attention(u0: &[f64], intents: &IntentSet) -> Vec<f64> {
    let logits: Vec<f64> = (0..intents.len()).map(|j| math::dot(intents.emb.row(j), u0)).collect();
    math::softmax(&logits)
}
