//! User-POI check-ins, per-user stratified splits, and BPR triple sampling.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::rng::{self, Rng};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InteractionError {
    MalformedLine { line: usize },
    EmptyDataset,
    BadRatios,
    IdOutOfRange { user: u32, poi: u32 },
    /// The user's positives cover every POI, so no negative exists.
    SaturatedUser(u32),
}

impl fmt::Display for InteractionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InteractionError::MalformedLine { line } => write!(f, "line {line}: expected `user<TAB>poi`"),
            InteractionError::EmptyDataset => f.write_str("no interactions"),
            InteractionError::BadRatios => f.write_str("split ratios must be positive and sum to 1"),
            InteractionError::IdOutOfRange { user, poi } => write!(f, "pair ({user}, {poi}) out of range"),
            InteractionError::SaturatedUser(u) => write!(f, "user {u} has interacted with every POI"),
        }
    }
}

impl core::error::Error for InteractionError {}

/// Deduplicated user-POI pairs, stored per user with POIs sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionSet {
    n_users: usize,
    n_pois: usize,
    offsets: Vec<usize>,
    items: Vec<u32>,
}

impl InteractionSet {
    pub fn from_pairs(
        n_users: usize,
        n_pois: usize,
        pairs: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self, InteractionError> {
        let mut pairs: Vec<(u32, u32)> = pairs.into_iter().collect();
        for &(user, poi) in &pairs {
            if user as usize >= n_users || poi as usize >= n_pois {
                return Err(InteractionError::IdOutOfRange { user, poi });
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let mut offsets = Vec::with_capacity(n_users + 1);
        let mut items = Vec::with_capacity(pairs.len());
        offsets.push(0);
        let mut cursor = pairs.iter().peekable();
        for u in 0..n_users as u32 {
            while let Some(&&(pu, p)) = cursor.peek() {
                if pu != u {
                    break;
                }
                items.push(p);
                cursor.next();
            }
            offsets.push(items.len());
        }
        Ok(InteractionSet { n_users, n_pois, offsets, items })
    }

    pub fn empty(n_users: usize, n_pois: usize) -> Self {
        InteractionSet { n_users, n_pois, offsets: alloc::vec![0; n_users + 1], items: Vec::new() }
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_pois(&self) -> usize {
        self.n_pois
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn user_items(&self, user: usize) -> &[u32] {
        &self.items[self.offsets[user]..self.offsets[user + 1]]
    }

    pub fn contains(&self, user: usize, poi: u32) -> bool {
        self.user_items(user).binary_search(&poi).is_ok()
    }

    /// The `idx`-th pair in (user, poi) order.
    pub fn pair(&self, idx: usize) -> (u32, u32) {
        let user = self.offsets.partition_point(|&o| o <= idx) - 1;
        (user as u32, self.items[idx])
    }

    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.n_users).flat_map(move |u| self.user_items(u).iter().map(move |&p| (u as u32, p)))
    }

    /// Same pairs over a catalog of at least `n_pois` POIs.
    pub fn with_n_pois(mut self, n_pois: usize) -> Self {
        self.n_pois = self.n_pois.max(n_pois);
        self
    }
}

/// Parses `user<TAB>poi` lines; counts are `max id + 1`.
pub fn parse_checkins(text: &str) -> Result<InteractionSet, InteractionError> {
    let mut pairs = Vec::new();
    let (mut n_users, mut n_pois) = (0usize, 0usize);
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = InteractionError::MalformedLine { line: i + 1 };
        let (u, p) = line.split_once('\t').ok_or(malformed.clone())?;
        let u: u32 = u.trim().parse().map_err(|_| malformed.clone())?;
        let p: u32 = p.trim().parse().map_err(|_| malformed)?;
        n_users = n_users.max(u as usize + 1);
        n_pois = n_pois.max(p as usize + 1);
        pairs.push((u, p));
    }
    if pairs.is_empty() {
        return Err(InteractionError::EmptyDataset);
    }
    InteractionSet::from_pairs(n_users, n_pois, pairs)
}

pub fn serialize_checkins(set: &InteractionSet) -> String {
    let mut out = String::new();
    for (u, p) in set.pairs() {
        let _ = writeln!(out, "{u}\t{p}");
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { train: 0.8, val: 0.1, test: 0.1 }
    }
}

/// Disjoint train/val/test views over one interaction set. `all` keeps the
/// full positive set for negative filtering.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: InteractionSet,
    pub val: InteractionSet,
    pub test: InteractionSet,
    pub all: InteractionSet,
}

impl DatasetSplit {
    pub fn n_users(&self) -> usize {
        self.all.n_users()
    }

    pub fn n_pois(&self) -> usize {
        self.all.n_pois()
    }
}

/// Per-user stratified shuffle. Users with fewer than three pairs keep all
/// of them in train; everyone else gets at least one val and one test pair.
pub fn split_dataset(set: &InteractionSet, ratios: SplitRatios, seed: u64) -> Result<DatasetSplit, InteractionError> {
    let SplitRatios { train, val, test } = ratios;
    if !(train > 0.0 && val > 0.0 && test > 0.0) || libm::fabs(train + val + test - 1.0) > 1e-9 {
        return Err(InteractionError::BadRatios);
    }
    let (mut tr, mut va, mut te) = (Vec::new(), Vec::new(), Vec::new());
    for u in 0..set.n_users() {
        let mut items: Vec<u32> = set.user_items(u).to_vec();
        let n = items.len();
        let uid = u as u32;
        if n < 3 {
            tr.extend(items.into_iter().map(|p| (uid, p)));
            continue;
        }
        let mut rng = rng::stream(seed, rng::SPLIT_STREAM, u as u64);
        items.shuffle(&mut rng);
        let mut n_val = (libm::round(n as f64 * val) as usize).max(1);
        let mut n_test = (libm::round(n as f64 * test) as usize).max(1);
        while n_val + n_test >= n {
            if n_val >= n_test && n_val > 1 {
                n_val -= 1;
            } else {
                n_test -= 1;
            }
        }
        let n_train = n - n_val - n_test;
        tr.extend(items[..n_train].iter().map(|&p| (uid, p)));
        va.extend(items[n_train..n_train + n_val].iter().map(|&p| (uid, p)));
        te.extend(items[n_train + n_val..].iter().map(|&p| (uid, p)));
    }
    let (nu, np) = (set.n_users(), set.n_pois());
    Ok(DatasetSplit {
        train: InteractionSet::from_pairs(nu, np, tr)?,
        val: InteractionSet::from_pairs(nu, np, va)?,
        test: InteractionSet::from_pairs(nu, np, te)?,
        all: set.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BprTriple {
    pub user: u32,
    pub pos: u32,
    pub neg: u32,
}

/// Draws a uniform negative for `user`, rejecting anything in `positives`.
pub fn sample_negative(positives: &InteractionSet, user: usize, rng: &mut Rng) -> Result<u32, InteractionError> {
    let m = positives.n_pois();
    if positives.user_items(user).len() >= m {
        return Err(InteractionError::SaturatedUser(user as u32));
    }
    loop {
        let cand = rng.random_range(0..m as u32);
        if !positives.contains(user, cand) {
            return Ok(cand);
        }
    }
}

/// `batch_size` triples: positives uniform over train pairs, negatives
/// uniform over POIs outside the user's full positive set.
pub fn sample_bpr_batch(split: &DatasetSplit, batch_size: usize, rng: &mut Rng) -> Result<Vec<BprTriple>, InteractionError> {
    if split.train.is_empty() {
        return Err(InteractionError::EmptyDataset);
    }
    let mut out = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let (user, pos) = split.train.pair(rng.random_range(0..split.train.len()));
        let neg = sample_negative(&split.all, user as usize, rng)?;
        out.push(BprTriple { user, pos, neg });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn dedup_on_parse() {
        let set = parse_checkins("0\t0\n0\t0").unwrap();
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn counts_inferred() {
        let set = parse_checkins("0\t1\n1\t0").unwrap();
        assert_eq!((set.n_users(), set.n_pois(), set.len()), (2, 2, 2));
    }

    #[test]
    fn parse_errors() {
        assert_eq!(parse_checkins(""), Err(InteractionError::EmptyDataset));
        assert_eq!(parse_checkins("0\t1\n0 1"), Err(InteractionError::MalformedLine { line: 2 }));
        assert_eq!(parse_checkins("0\t-1"), Err(InteractionError::MalformedLine { line: 1 }));
    }

    #[test]
    fn pair_lookup_matches_iteration() {
        let set = InteractionSet::from_pairs(4, 5, vec![(0, 1), (0, 3), (2, 0), (3, 4), (3, 2)]).unwrap();
        let listed: Vec<_> = set.pairs().collect();
        let indexed: Vec<_> = (0..set.len()).map(|i| set.pair(i)).collect();
        assert_eq!(listed, indexed);
        assert_eq!(set.user_items(1), &[] as &[u32]);
    }

    #[test]
    fn ten_pairs_split_eight_one_one() {
        let set = InteractionSet::from_pairs(1, 20, (0..10).map(|p| (0, p))).unwrap();
        let s = split_dataset(&set, SplitRatios::default(), 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn degenerate_user_goes_to_train() {
        let set = InteractionSet::from_pairs(2, 20, vec![(0, 4), (1, 1), (1, 2), (1, 3)]).unwrap();
        let s = split_dataset(&set, SplitRatios::default(), 3).unwrap();
        assert_eq!(s.train.user_items(0), &[4]);
        assert_eq!(s.train.user_items(1).len(), 1);
        assert_eq!(s.val.user_items(1).len(), 1);
        assert_eq!(s.test.user_items(1).len(), 1);
    }

    #[test]
    fn split_is_deterministic() {
        let set = InteractionSet::from_pairs(3, 40, (0..90).map(|i| (i % 3, i / 3))).unwrap();
        let a = split_dataset(&set, SplitRatios::default(), 11).unwrap();
        let b = split_dataset(&set, SplitRatios::default(), 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_ratios() {
        let set = InteractionSet::from_pairs(1, 2, vec![(0, 0)]).unwrap();
        let r = SplitRatios { train: 0.8, val: 0.2, test: 0.0 };
        assert_eq!(split_dataset(&set, r, 0), Err(InteractionError::BadRatios));
        let r = SplitRatios { train: 0.8, val: 0.2, test: 0.2 };
        assert_eq!(split_dataset(&set, r, 0), Err(InteractionError::BadRatios));
    }

    #[test]
    fn forced_negative() {
        let set = InteractionSet::from_pairs(1, 2, vec![(0, 0)]).unwrap();
        let s = split_dataset(&set, SplitRatios::default(), 0).unwrap();
        let mut rng = rng::stream(0, rng::SAMPLER_STREAM, 0);
        let batch = sample_bpr_batch(&s, 50, &mut rng).unwrap();
        assert!(batch.iter().all(|t| t.pos == 0 && t.neg == 1));
    }

    #[test]
    fn saturated_user() {
        let set = InteractionSet::from_pairs(1, 2, vec![(0, 0), (0, 1)]).unwrap();
        let s = split_dataset(&set, SplitRatios::default(), 0).unwrap();
        let mut rng = rng::stream(0, rng::SAMPLER_STREAM, 0);
        assert_eq!(sample_bpr_batch(&s, 1, &mut rng), Err(InteractionError::SaturatedUser(0)));
    }

    #[test]
    fn sampler_reproducible() {
        let set = InteractionSet::from_pairs(3, 30, (0..30).map(|i| (i % 3, i))).unwrap();
        let s = split_dataset(&set, SplitRatios::default(), 1).unwrap();
        let a = sample_bpr_batch(&s, 64, &mut rng::stream(5, rng::SAMPLER_STREAM, 0)).unwrap();
        let b = sample_bpr_batch(&s, 64, &mut rng::stream(5, rng::SAMPLER_STREAM, 0)).unwrap();
        assert_eq!(a, b);
    }
}
