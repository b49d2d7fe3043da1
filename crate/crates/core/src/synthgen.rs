//! Synthetic cities with a planted geographical confounder.
//!
//! Regions sit on a `side x side` grid. Each user has a home region and a
//! functional taste vector; each POI has a region and a functional vector
//! built from its brand and fine category. A user interacts with a POI
//! independently with probability
//!
//! ```text
//! σ(b_u + taste_u · func_p + γ · exp(-manhattan(home_u, region_p)))
//! ```
//!
//! where the per-user intercept `b_u` is solved so the expected number of
//! interactions equals `interactions_per_user`. `γ` is the confounder dial.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::eval::ndcg_at_k;
use crate::interactions::InteractionSet;
use crate::math;
use crate::matrix::Matrix;
use crate::rng;
use crate::ukg::{EntityClass, EntityRef, Relation, RelationKind, Triplet, UrbanKG};

#[derive(Clone, Debug, PartialEq)]
pub struct CityConfig {
    pub n_users: usize,
    pub n_pois: usize,
    pub n_regions: usize,
    pub n_business_areas: usize,
    pub n_brands: usize,
    pub n_cate1: usize,
    pub n_cate2: usize,
    pub n_cate3: usize,
    pub latent_dim: usize,
    /// Scale of user taste vectors, i.e. spread of functional log-odds.
    pub taste_scale: f64,
    /// γ ≥ 0, weight of home-region proximity in the interaction log-odds.
    pub geo_strength: f64,
    pub interactions_per_user: usize,
    pub seed: u64,
}

impl Default for CityConfig {
    fn default() -> Self {
        CityConfig {
            n_users: 500,
            n_pois: 2000,
            n_regions: 25,
            n_business_areas: 10,
            n_brands: 100,
            n_cate1: 8,
            n_cate2: 24,
            n_cate3: 64,
            latent_dim: 8,
            taste_scale: 2.0,
            geo_strength: 1.0,
            interactions_per_user: 20,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SynthError {
    InvalidConfig(&'static str),
    /// More interactions requested than user-POI pairs exist.
    InfeasibleConfig,
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthError::InvalidConfig(what) => write!(f, "invalid city config: {what}"),
            SynthError::InfeasibleConfig => f.write_str("interactions_per_user exceeds the number of POIs"),
        }
    }
}

impl core::error::Error for SynthError {}

impl CityConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let counts = [
            (self.n_users, "n_users must be at least 1"),
            (self.n_pois, "n_pois must be at least 1"),
            (self.n_regions, "n_regions must be at least 1"),
            (self.n_business_areas, "n_business_areas must be at least 1"),
            (self.n_brands, "n_brands must be at least 1"),
            (self.n_cate1, "n_cate1 must be at least 1"),
            (self.n_cate2, "n_cate2 must be at least 1"),
            (self.n_cate3, "n_cate3 must be at least 1"),
            (self.latent_dim, "latent_dim must be at least 1"),
            (self.interactions_per_user, "interactions_per_user must be at least 1"),
        ];
        for (v, msg) in counts {
            if v == 0 {
                return Err(SynthError::InvalidConfig(msg));
            }
        }
        if !(self.geo_strength >= 0.0) || !self.geo_strength.is_finite() {
            return Err(SynthError::InvalidConfig("geo_strength must be finite and >= 0"));
        }
        if !(self.taste_scale >= 0.0) || !self.taste_scale.is_finite() {
            return Err(SynthError::InvalidConfig("taste_scale must be finite and >= 0"));
        }
        if self.interactions_per_user > self.n_pois {
            return Err(SynthError::InfeasibleConfig);
        }
        Ok(())
    }

    pub fn grid_side(&self) -> usize {
        let mut side = 1;
        while side * side < self.n_regions {
            side += 1;
        }
        side
    }
}

/// Latent truth behind a generated city.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub grid_side: usize,
    /// `N x latent_dim`
    pub user_taste: Matrix,
    /// `M x latent_dim`
    pub poi_func: Matrix,
    pub user_home: Vec<u32>,
    pub poi_region: Vec<u32>,
}

impl GroundTruth {
    /// True functional affinity, ignoring geography.
    pub fn affinity(&self, user: usize, poi: usize) -> f64 {
        math::dot(self.user_taste.row(user), self.poi_func.row(poi))
    }

    pub fn region_distance(&self, a: u32, b: u32) -> usize {
        let s = self.grid_side as u32;
        ((a % s).abs_diff(b % s) + (a / s).abs_diff(b / s)) as usize
    }

    pub fn proximity(&self, user: usize, poi: usize) -> f64 {
        math::exp(-(self.region_distance(self.user_home[user], self.poi_region[poi]) as f64))
    }

    /// All POIs ordered by true affinity, best first, ties by id.
    pub fn functional_ranking(&self, user: usize) -> Vec<u32> {
        let aff: Vec<f64> = (0..self.poi_func.rows()).map(|p| self.affinity(user, p)).collect();
        let mut order: Vec<u32> = (0..aff.len() as u32).collect();
        order.sort_by(|&a, &b| aff[b as usize].total_cmp(&aff[a as usize]).then(a.cmp(&b)));
        order
    }
}

/// Triplet counts the generator emitted, per relation kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub geographical: usize,
    pub functional: usize,
}

#[derive(Clone, Debug)]
pub struct City {
    pub kg: UrbanKG,
    pub interactions: InteractionSet,
    pub truth: GroundTruth,
    pub tally: Tally,
}

struct KgBuilder {
    triplets: Vec<Triplet>,
    tally: Tally,
}

impl KgBuilder {
    fn push(&mut self, head: EntityRef, relation: Relation, tail: EntityRef) {
        match relation.kind() {
            RelationKind::Geographical => self.tally.geographical += 1,
            RelationKind::Functional => self.tally.functional += 1,
        }
        self.triplets.push(Triplet::new(head, relation, tail));
    }
}

fn gaussian_rows(rows: usize, cols: usize, scale: f64, r: &mut rng::Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(r);
            scale * z
        })
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// Intercept `b` with `Σ σ(b + logit_i) = target`, by bisection.
fn calibrate_intercept(logits: &[f64], target: f64) -> f64 {
    let expected = |b: f64| logits.iter().map(|&z| math::sigmoid(b + z)).sum::<f64>();
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn generate_city(config: &CityConfig) -> Result<City, SynthError> {
    config.validate()?;
    use EntityClass::*;
    let e = EntityRef::new;
    let side = config.grid_side();
    let mut r = rng::stream(config.seed, rng::CITY_STREAM, 0);
    let mut kg = KgBuilder { triplets: Vec::new(), tally: Tally::default() };

    // region grid
    let dist = |a: usize, b: usize| (a % side).abs_diff(b % side) + (a / side).abs_diff(b / side);
    for a in 0..config.n_regions {
        for b in a + 1..config.n_regions {
            let (dx, dy) = ((a % side).abs_diff(b % side), (a / side).abs_diff(b / side));
            if dx + dy == 1 {
                kg.push(e(Region, a as u32), Relation::BorderBy, e(Region, b as u32));
            } else if dx == 1 && dy == 1 {
                kg.push(e(Region, a as u32), Relation::NearBy, e(Region, b as u32));
            }
        }
    }

    // business areas serve the regions nearest to their centers
    let centers: Vec<usize> = (0..config.n_business_areas).map(|_| r.random_range(0..config.n_regions)).collect();
    let serving: Vec<u32> = (0..config.n_regions)
        .map(|reg| {
            (0..centers.len()).min_by_key(|&ba| (dist(reg, centers[ba]), ba)).expect("at least one business area")
                as u32
        })
        .collect();
    for (reg, &ba) in serving.iter().enumerate() {
        kg.push(e(BusinessArea, ba), Relation::BaServe, e(Region, reg as u32));
    }

    // category tree
    let parent2: Vec<u32> = (0..config.n_cate2).map(|_| r.random_range(0..config.n_cate1) as u32).collect();
    let parent3: Vec<u32> = (0..config.n_cate3).map(|_| r.random_range(0..config.n_cate2) as u32).collect();
    for (c2, &p) in parent2.iter().enumerate() {
        kg.push(e(Cate2, c2 as u32), Relation::SubCate2to1, e(Cate1, p));
    }
    for (c3, &p) in parent3.iter().enumerate() {
        kg.push(e(Cate3, c3 as u32), Relation::SubCate3to2, e(Cate2, p));
        kg.push(e(Cate3, c3 as u32), Relation::SubCate3to1, e(Cate1, parent2[p as usize]));
    }

    // brands, each anchored to one fine category
    let brand_cate: Vec<u32> = (0..config.n_brands).map(|_| r.random_range(0..config.n_cate3) as u32).collect();
    for (b, &c3) in brand_cate.iter().enumerate() {
        let c2 = parent3[c3 as usize];
        let b = b as u32;
        kg.push(e(Brand, b), Relation::Brand2Cate1, e(Cate1, parent2[c2 as usize]));
        kg.push(e(Brand, b), Relation::Brand2Cate2, e(Cate2, c2));
        kg.push(e(Brand, b), Relation::Brand2Cate3, e(Cate3, c3));
    }
    for b in 0..config.n_brands {
        if let Some(next) = (b + 1..config.n_brands).find(|&o| brand_cate[o] == brand_cate[b]) {
            kg.push(e(Brand, b as u32), Relation::RelatedBrand, e(Brand, next as u32));
        }
    }

    // POIs: six mandatory triplets each
    let mut poi_region = Vec::with_capacity(config.n_pois);
    let mut poi_brand = Vec::with_capacity(config.n_pois);
    for p in 0..config.n_pois as u32 {
        let reg = r.random_range(0..config.n_regions) as u32;
        let brand = r.random_range(0..config.n_brands) as u32;
        let c3 = brand_cate[brand as usize];
        let c2 = parent3[c3 as usize];
        kg.push(e(Poi, p), Relation::LocateAt, e(Region, reg));
        kg.push(e(Poi, p), Relation::BelongTo, e(BusinessArea, serving[reg as usize]));
        kg.push(e(Poi, p), Relation::BrandOf, e(Brand, brand));
        kg.push(e(Poi, p), Relation::Cate1Of, e(Cate1, parent2[c2 as usize]));
        kg.push(e(Poi, p), Relation::Cate2Of, e(Cate2, c2));
        kg.push(e(Poi, p), Relation::Cate3Of, e(Cate3, c3));
        poi_region.push(reg);
        poi_brand.push(brand);
    }

    // functional vectors from brand and fine category
    let dim = config.latent_dim;
    let brand_vec = gaussian_rows(config.n_brands, dim, 1.0, &mut r);
    let cate_vec = gaussian_rows(config.n_cate3, dim, 1.0, &mut r);
    let noise = gaussian_rows(config.n_pois, dim, 0.25, &mut r);
    let mut poi_func = Matrix::zeros(config.n_pois, dim);
    let inv_sqrt2 = 1.0 / math::sqrt(2.0);
    for p in 0..config.n_pois {
        let b = poi_brand[p] as usize;
        let c = brand_cate[b] as usize;
        for (k, x) in poi_func.row_mut(p).iter_mut().enumerate() {
            *x = inv_sqrt2 * (brand_vec.get(b, k) + cate_vec.get(c, k)) + noise.get(p, k);
        }
    }
    let user_taste = gaussian_rows(config.n_users, dim, config.taste_scale / math::sqrt(dim as f64), &mut r);
    let user_home: Vec<u32> = (0..config.n_users).map(|_| r.random_range(0..config.n_regions) as u32).collect();

    let populations = [
        config.n_pois,
        config.n_business_areas,
        config.n_regions,
        config.n_brands,
        config.n_cate1,
        config.n_cate2,
        config.n_cate3,
    ];
    let urban = UrbanKG::new(kg.triplets, Some(populations)).expect("generator emits schema-valid triplets");
    let truth = GroundTruth { grid_side: side, user_taste, poi_func, user_home, poi_region };

    let target = config.interactions_per_user as f64;
    let mut pairs = Vec::with_capacity(config.n_users * config.interactions_per_user);
    let mut logits = alloc::vec![0.0; config.n_pois];
    for u in 0..config.n_users {
        for (p, z) in logits.iter_mut().enumerate() {
            *z = truth.affinity(u, p) + config.geo_strength * truth.proximity(u, p);
        }
        let b = calibrate_intercept(&logits, target);
        let mut ur = rng::stream(config.seed, rng::CITY_USER_STREAM, u as u64);
        let before = pairs.len();
        for (p, &z) in logits.iter().enumerate() {
            if ur.random::<f64>() < math::sigmoid(b + z) {
                pairs.push((u as u32, p as u32));
            }
        }
        if pairs.len() == before {
            let best = (0..config.n_pois).max_by(|&a, &c| logits[a].total_cmp(&logits[c]).then(c.cmp(&a)));
            pairs.push((u as u32, best.expect("n_pois >= 1") as u32));
        }
    }
    let interactions = InteractionSet::from_pairs(config.n_users, config.n_pois, pairs).expect("ids in range");
    Ok(City { kg: urban, interactions, truth, tally: kg.tally })
}

/// Share of a user set's interactions that fall inside the user's home region.
pub fn same_region_rate(interactions: &InteractionSet, truth: &GroundTruth) -> f64 {
    let same = interactions.pairs().filter(|&(u, p)| truth.user_home[u as usize] == truth.poi_region[p as usize]).count();
    same as f64 / interactions.len().max(1) as f64
}

/// Fraction of the catalog counted as functionally relevant per user.
pub const FUNCTIONAL_TOP_FRACTION: f64 = 0.05;

/// Graded gains for one user: the top `ceil(top_fraction · M)` POIs by true
/// affinity get `(T - rank) / T`, everything else 0.
pub fn functional_gains(truth: &GroundTruth, user: usize, top_fraction: f64) -> Vec<f64> {
    let m = truth.poi_func.rows();
    let top = (libm::ceil(top_fraction * m as f64) as usize).clamp(1, m);
    let mut gains = alloc::vec![0.0; m];
    for (rank, &p) in truth.functional_ranking(user).iter().take(top).enumerate() {
        gains[p as usize] = (top - rank) as f64 / top as f64;
    }
    gains
}

/// Graded NDCG@k of one ranked list under `gains`; the ideal ordering is
/// taken over the same candidates. `None` when no candidate is relevant.
pub fn graded_ndcg(ranked: &[u32], gains: &[f64], k: usize) -> Option<f64> {
    let discount = |i: usize| 1.0 / math::log2(i as f64 + 2.0);
    let dcg: f64 = ranked.iter().take(k).enumerate().map(|(i, &p)| gains[p as usize] * discount(i)).sum();
    let mut ideal: Vec<f64> = ranked.iter().map(|&p| gains[p as usize]).filter(|&g| g > 0.0).collect();
    if ideal.is_empty() {
        return None;
    }
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg: f64 = ideal.iter().take(k).enumerate().map(|(i, g)| g * discount(i)).sum();
    Some(dcg / idcg)
}

/// Mean graded NDCG@k of per-user ranked lists (indexed by user) against
/// true functional affinity. Users with empty lists or no relevant
/// candidate are skipped.
pub fn functional_ndcg(ranked_lists: &[Vec<u32>], truth: &GroundTruth, k: usize) -> f64 {
    functional_ndcg_with(ranked_lists, truth, k, FUNCTIONAL_TOP_FRACTION)
}

pub fn functional_ndcg_with(ranked_lists: &[Vec<u32>], truth: &GroundTruth, k: usize, top_fraction: f64) -> f64 {
    let (mut total, mut n) = (0.0, 0usize);
    for (u, ranked) in ranked_lists.iter().enumerate() {
        if ranked.is_empty() {
            continue;
        }
        if let Some(v) = graded_ndcg(ranked, &functional_gains(truth, u, top_fraction), k) {
            total += v;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// Binary-relevance view for callers that only need hit/miss.
pub fn functional_hits_ndcg(ranked: &[u32], truth: &GroundTruth, user: usize, k: usize) -> f64 {
    let top = (libm::ceil(FUNCTIONAL_TOP_FRACTION * truth.poi_func.rows() as f64) as usize).max(1);
    let relevant: Vec<u32> = truth.functional_ranking(user).into_iter().take(top).collect();
    ndcg_at_k(ranked, &relevant, k).unwrap_or(0.0)
}

/// Text dump of the ground truth:
///
/// ```text
/// #ground-truth users=<N> pois=<M> latent=<L> grid_side=<S>
/// user<TAB><id><TAB><home region><TAB><L space-separated floats>
/// poi<TAB><id><TAB><region><TAB><L space-separated floats>
/// ```
pub fn serialize_ground_truth(truth: &GroundTruth) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "#ground-truth users={} pois={} latent={} grid_side={}",
        truth.user_taste.rows(),
        truth.poi_func.rows(),
        truth.user_taste.cols(),
        truth.grid_side
    );
    let mut rows = |tag: &str, m: &Matrix, loc: &[u32]| {
        for i in 0..m.rows() {
            let _ = write!(out, "{tag}\t{i}\t{}\t", loc[i]);
            for (k, v) in m.row(i).iter().enumerate() {
                let _ = write!(out, "{}{v}", if k == 0 { "" } else { " " });
            }
            out.push('\n');
        }
    };
    rows("user", &truth.user_taste, &truth.user_home);
    rows("poi", &truth.poi_func, &truth.poi_region);
    out
}

pub fn parse_ground_truth(text: &str) -> Option<GroundTruth> {
    let mut lines = text.lines();
    let header = lines.next()?.strip_prefix("#ground-truth")?;
    let field = |name: &str| -> Option<usize> {
        header.split_whitespace().find_map(|kv| kv.strip_prefix(name)?.strip_prefix('=')?.parse().ok())
    };
    let (n, m, l, side) = (field("users")?, field("pois")?, field("latent")?, field("grid_side")?);
    let mut truth = GroundTruth {
        grid_side: side,
        user_taste: Matrix::zeros(n, l),
        poi_func: Matrix::zeros(m, l),
        user_home: alloc::vec![0; n],
        poi_region: alloc::vec![0; m],
    };
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let mut f = line.split('\t');
        let (tag, id, loc, vals) = (f.next()?, f.next()?.parse::<usize>().ok()?, f.next()?.parse().ok()?, f.next()?);
        let (mat, locs) = match tag {
            "user" => (&mut truth.user_taste, &mut truth.user_home),
            "poi" => (&mut truth.poi_func, &mut truth.poi_region),
            _ => return None,
        };
        if id >= mat.rows() {
            return None;
        }
        locs[id] = loc;
        let row = mat.row_mut(id);
        let mut count = 0;
        for (slot, v) in row.iter_mut().zip(vals.split(' ')) {
            *slot = v.parse().ok()?;
            count += 1;
        }
        if count != l {
            return None;
        }
    }
    Some(truth)
}
