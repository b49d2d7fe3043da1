//! Factual, counterfactual and debiased interaction scores.
//!
//! With `f(a, g) = a · tanh(g)`:
//! - factual `Y(u,p,g) = f(y_up, y_ug)`
//! - counterfactual `Y(u,p*,g) = f(y_up_ref, y_ug)` where `y_up_ref` is the
//!   user's mean match score over the whole catalog
//! - the all-reference score `Y(u,p*,g*)` is realized as `f(y_up_ref, 0) = 0`
//!
//! so `TIE = TE - NDE = (y_up - y_up_ref) · tanh(y_ug)`.

use alloc::vec::Vec;

use crate::math;
use crate::matrix::Matrix;
use crate::propagation::FinalEmbeddings;

#[inline]
pub fn score_match(u: &[f64], p: &[f64]) -> f64 {
    math::dot(u, p)
}

#[inline]
pub fn score_geo(u_g: &[f64], p_g: &[f64]) -> f64 {
    math::dot(u_g, p_g)
}

/// Mean of `u · p_t` over every POI in the catalog.
pub fn reference_score(u: &[f64], pois: &Matrix) -> f64 {
    assert!(pois.rows() > 0, "reference score needs at least one POI");
    let total: f64 = (0..pois.rows()).map(|t| math::dot(u, pois.row(t))).sum();
    total / pois.rows() as f64
}

#[inline]
pub fn fuse(y_up: f64, y_ug: f64) -> f64 {
    y_up * math::tanh(y_ug)
}

/// Every intermediate score for one (user, POI) pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreBundle {
    pub y_up: f64,
    pub y_ug: f64,
    pub y_up_ref: f64,
    /// `Y(u,p,g)`
    pub y_fused: f64,
    /// `Y(u,p*,g)`
    pub y_counterfactual: f64,
    pub te: f64,
    pub nde: f64,
    pub tie: f64,
}

impl ScoreBundle {
    pub fn from_components(y_up: f64, y_ug: f64, y_up_ref: f64) -> Self {
        let y_fused = fuse(y_up, y_ug);
        let y_counterfactual = fuse(y_up_ref, y_ug);
        let y_reference = fuse(y_up_ref, 0.0);
        let te = y_fused - y_reference;
        let nde = y_counterfactual - y_reference;
        ScoreBundle { y_up, y_ug, y_up_ref, y_fused, y_counterfactual, te, nde, tie: te - nde }
    }
}

/// Debiased score of `poi` for `user`. `y_up_ref` comes from
/// [`reference_score`] for the same user.
pub fn tie_score(user: usize, poi: usize, finals: &FinalEmbeddings, y_up_ref: f64) -> ScoreBundle {
    let y_up = score_match(finals.u.row(user), finals.p.row(poi));
    let y_ug = score_geo(finals.u_g.row(user), finals.p_g.row(poi));
    ScoreBundle::from_components(y_up, y_ug, y_up_ref)
}

/// Total effect without the counterfactual correction. Ranks exactly like
/// `y_fused` since the subtracted term is constant per user.
pub fn te_score(user: usize, poi: usize, finals: &FinalEmbeddings) -> f64 {
    let y_up = score_match(finals.u.row(user), finals.p.row(poi));
    let y_ug = score_geo(finals.u_g.row(user), finals.p_g.row(poi));
    fuse(y_up, y_ug) - fuse(reference_score(finals.u.row(user), &finals.p), 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scorer {
    /// `TE - NDE`, the debiased score.
    Tie,
    /// Total effect only.
    Te,
    /// Plain fused inner product `u · p`.
    Match,
}

impl Scorer {
    pub const ALL: [Scorer; 3] = [Scorer::Tie, Scorer::Te, Scorer::Match];

    pub fn name(self) -> &'static str {
        match self {
            Scorer::Tie => "tie",
            Scorer::Te => "te",
            Scorer::Match => "y_up",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Scorer::ALL.into_iter().find(|s| s.name().eq_ignore_ascii_case(name))
    }
}

/// Scores whole catalogs per user; the mean POI is computed once.
pub struct CatalogScorer<'a> {
    finals: &'a FinalEmbeddings,
    mean_poi: Vec<f64>,
}

impl<'a> CatalogScorer<'a> {
    pub fn new(finals: &'a FinalEmbeddings) -> Self {
        CatalogScorer { finals, mean_poi: finals.p.column_mean() }
    }

    pub fn reference(&self, user: usize) -> f64 {
        math::dot(self.finals.u.row(user), &self.mean_poi)
    }

    pub fn bundle(&self, user: usize, poi: usize) -> ScoreBundle {
        tie_score(user, poi, self.finals, self.reference(user))
    }

    pub fn scores(&self, user: usize, scorer: Scorer) -> Vec<f64> {
        let f = self.finals;
        let u = f.u.row(user);
        let u_g = f.u_g.row(user);
        let y_ref = self.reference(user);
        (0..f.n_pois())
            .map(|p| {
                let y_up = score_match(u, f.p.row(p));
                match scorer {
                    Scorer::Match => y_up,
                    Scorer::Te | Scorer::Tie => {
                        let b = ScoreBundle::from_components(y_up, score_geo(u_g, f.p_g.row(p)), y_ref);
                        if scorer == Scorer::Tie {
                            b.tie
                        } else {
                            b.te
                        }
                    }
                }
            })
            .collect()
    }
}
