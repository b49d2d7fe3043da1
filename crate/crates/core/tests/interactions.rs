use poirec_core::interactions::*;
use poirec_core::rng;
use poirec_core::synthgen::{generate_city, CityConfig};

#[test]
fn negative_sampler_is_uniform_over_non_positives() {
    let positives = InteractionSet::from_pairs(1, 100, (0..50).map(|p| (0, p))).unwrap();
    let mut r = rng::stream(11, rng::SAMPLER_STREAM, 0);
    let mut counts = [0usize; 100];
    let n = 100_000;
    for _ in 0..n {
        counts[sample_negative(&positives, 0, &mut r).unwrap() as usize] += 1;
    }
    assert!(counts[..50].iter().all(|&c| c == 0));
    for (p, &c) in counts.iter().enumerate().skip(50) {
        let f = c as f64 / n as f64;
        assert!((f - 0.02).abs() <= 0.005, "poi {p}: {f}");
    }
}

#[test]
fn batches_never_pair_a_user_with_a_known_positive() {
    let city = generate_city(&CityConfig { n_users: 50, n_pois: 80, n_brands: 10, interactions_per_user: 8, ..CityConfig::default() }).unwrap();
    let split = split_dataset(&city.interactions, SplitRatios::default(), 4).unwrap();
    let mut r = rng::stream(4, rng::SAMPLER_STREAM, 1);
    for _ in 0..20 {
        for t in sample_bpr_batch(&split, 256, &mut r).unwrap() {
            assert!(split.train.contains(t.user as usize, t.pos));
            assert!(!split.all.contains(t.user as usize, t.neg));
        }
    }
}

#[test]
fn split_parts_are_disjoint_and_cover_everything() {
    let city = generate_city(&CityConfig { n_users: 60, n_pois: 100, n_brands: 10, interactions_per_user: 7, ..CityConfig::default() }).unwrap();
    let split = split_dataset(&city.interactions, SplitRatios::default(), 9).unwrap();
    assert_eq!(split.train.len() + split.val.len() + split.test.len(), city.interactions.len());
    for (u, p) in city.interactions.pairs() {
        let u = u as usize;
        let hits = [&split.train, &split.val, &split.test].iter().filter(|s| s.contains(u, p)).count();
        assert_eq!(hits, 1);
    }
    for u in 0..60 {
        let n = city.interactions.user_items(u).len();
        assert!(!split.train.user_items(u).is_empty());
        if n >= 3 {
            assert!(!split.val.user_items(u).is_empty() && !split.test.user_items(u).is_empty());
        }
    }
}

#[test]
fn ten_thousand_user_dump_round_trips() {
    let cfg = CityConfig { n_users: 10_000, n_pois: 120, n_brands: 20, interactions_per_user: 4, ..CityConfig::default() };
    let city = generate_city(&cfg).unwrap();
    let parsed = parse_checkins(&serialize_checkins(&city.interactions)).unwrap();
    assert_eq!(parsed.n_users(), 10_000);
    assert_eq!(parsed, city.interactions);
}

#[test]
fn malformed_lines_report_their_number() {
    assert_eq!(parse_checkins("0\t1\nx\t2\n"), Err(InteractionError::MalformedLine { line: 2 }));
    assert_eq!(parse_checkins("# only a comment\n"), Err(InteractionError::EmptyDataset));
}
