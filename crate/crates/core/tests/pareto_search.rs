#[path = "common/landscapes.rs"]
mod landscapes;

use kvtier::pareto_search::{
    adaptive_search, auto_reference, dominates, grid_search, hypervolume, pareto_filter, Config, Outcome,
    ParetoPoint, SearchError,
};
use landscapes::{diminishing_return, flat, grid, search_config, ttl_cliff};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

fn points(objs: &[[f64; 3]]) -> Vec<ParetoPoint> {
    objs.iter()
        .enumerate()
        .map(|(i, &o)| ParetoPoint {
            config: Config { medium: "m".into(), dram_gb: i as u64, ttl_s: 0 },
            outcome: o.into(),
            evaluated_round: 1,
        })
        .collect()
}

fn random_set(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 3]> {
    // coarse values so exact ties and duplicates occur
    let mut v: Vec<[f64; 3]> = (0..n)
        .map(|_| [0, 1, 2].map(|_| rng.random_range(0..40) as f64 / 4.0))
        .collect();
    for _ in 0..n / 10 {
        let i = rng.random_range(0..v.len());
        v.push(v[i]);
    }
    v
}

/// Keeps i when nothing dominates it and no earlier index has the same
/// objectives.
fn pairwise_oracle(objs: &[[f64; 3]]) -> BTreeSet<usize> {
    (0..objs.len())
        .filter(|&i| {
            (0..objs.len()).all(|j| !dominates(&objs[j], &objs[i]) && !(j < i && objs[j] == objs[i]))
        })
        .collect()
}

#[test]
fn filter_matches_pairwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..200 {
        let n = rng.random_range(1..=500);
        let objs = random_set(&mut rng, n);
        let got: BTreeSet<usize> = pareto_filter(&points(&objs)).iter().map(|p| p.config.dram_gb as usize).collect();
        assert_eq!(got, pairwise_oracle(&objs));
    }
}

/// Fraction of uniform samples in the box [lower, reference] dominated by
/// the set, times the box volume.
fn monte_carlo(objs: &[Vec<f64>], reference: &[f64], samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let lower: Vec<f64> = (0..3).map(|k| objs.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min)).collect();
    let mut hits = 0usize;
    for _ in 0..samples {
        let z: Vec<f64> = (0..3).map(|k| rng.random_range(lower[k]..reference[k])).collect();
        if objs.iter().any(|p| p.iter().zip(&z).all(|(a, b)| a <= b)) {
            hits += 1;
        }
    }
    let volume: f64 = (0..3).map(|k| reference[k] - lower[k]).product();
    volume * hits as f64 / samples as f64
}

#[test]
fn hypervolume_agrees_with_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..10 {
        let objs: Vec<Vec<f64>> = (0..50).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let front: Vec<Vec<f64>> = pareto_filter(&points(&objs.iter().map(|p| [p[0], p[1], p[2]]).collect::<Vec<_>>()))
            .iter()
            .map(|p| p.objectives().to_vec())
            .collect();
        let reference = vec![1.1; 3];
        let exact = hypervolume(&objs, &reference).unwrap();
        let estimate = monte_carlo(&front, &reference, 1_000_000, &mut rng);
        assert!((exact - estimate).abs() <= 0.01 * exact, "{exact} vs {estimate}");
    }
}

#[test]
fn reference_must_be_strictly_worse() {
    let err = hypervolume(&[vec![1.0, 1.0], vec![2.0, 3.0]], &[3.0, 3.0]).unwrap_err();
    assert!(matches!(err, SearchError::ReferenceNotDominated { index: 1, .. }));
}

proptest! {
    #[test]
    fn filter_is_idempotent(raw in prop::collection::vec([0u8..20, 0u8..20, 0u8..20], 1..80)) {
        let objs: Vec<[f64; 3]> = raw.iter().map(|p| p.map(f64::from)).collect();
        let once = pareto_filter(&points(&objs));
        prop_assert_eq!(pareto_filter(&once), once);
    }

    #[test]
    fn hypervolume_never_shrinks(
        raw in prop::collection::vec([0u8..20, 0u8..20, 0u8..20], 1..40),
        extra in [0u8..20, 0u8..20, 0u8..20],
    ) {
        let objs: Vec<Vec<f64>> = raw.iter().map(|p| p.iter().map(|&x| x as f64).collect()).collect();
        let reference = vec![20.0; 3];
        let before = hypervolume(&objs, &reference).unwrap();
        let e: Vec<f64> = extra.iter().map(|&x| x as f64).collect();
        let dominated = objs.iter().any(|p| p.iter().zip(&e).all(|(a, b)| a <= b));
        let mut more = objs.clone();
        more.push(e);
        let after = hypervolume(&more, &reference).unwrap();
        prop_assert!(after >= before - 1e-9);
        if dominated {
            prop_assert!((after - before).abs() < 1e-9);
        }
    }
}

fn visited(points: &[ParetoPoint], round: usize) -> BTreeSet<(u64, u64)> {
    points
        .iter()
        .filter(|p| p.evaluated_round == round)
        .map(|p| (p.config.dram_gb, p.config.ttl_s))
        .collect()
}

fn cells(dram: &[u64], ttl: &[u64]) -> BTreeSet<(u64, u64)> {
    dram.iter().flat_map(|&d| ttl.iter().map(move |&t| (d, t))).collect()
}

#[test]
fn flat_landscape_evaluates_only_the_seed_grid() {
    let r = adaptive_search(&search_config(grid((0, 256, 128), (0, 600, 300)), 1000), flat, 1).unwrap();
    assert_eq!(r.rounds, 1);
    assert_eq!(visited(&r.evaluations, 1), cells(&[0, 128, 256], &[0, 300, 600]));
    assert_eq!(r.evaluation_count(), 9);
    assert!(!r.truncated);
}

#[test]
fn cliff_is_bisected_along_ttl() {
    // Latency flips between ttl 4 and 5. Each round halves the bracketing
    // TTL pair in both DRAM columns until the midpoint snaps onto an end.
    let r = adaptive_search(&search_config(grid((0, 100, 100), (0, 10, 10)), 1000), ttl_cliff, 1).unwrap();
    let expected = [
        cells(&[0, 100], &[0, 10]),
        cells(&[0, 100], &[5]),
        cells(&[0, 100], &[2]),
        cells(&[0, 100], &[3]),
        cells(&[0, 100], &[4]),
    ];
    assert_eq!(r.rounds, expected.len());
    for (k, set) in expected.iter().enumerate() {
        assert_eq!(&visited(&r.evaluations, k + 1), set, "round {}", k + 1);
    }
}

#[test]
fn dram_axis_expands_until_gain_fades() {
    let r = adaptive_search(&search_config(grid((0, 512, 256), (0, 600, 300)), 1000), diminishing_return, 1).unwrap();
    let ttl = [0, 300, 600];
    let expected = [
        cells(&[0, 256, 512], &ttl),
        // midpoints of both coarse DRAM gaps, plus the first expansion column
        cells(&[128, 384, 768], &ttl),
        cells(&[64, 192, 320, 448, 640, 1024], &ttl),
        // 448–512 and 512–640 no longer change latency by 5%
        cells(&[32, 96, 160, 224, 288, 352, 416], &ttl),
    ];
    assert_eq!(r.rounds, expected.len());
    for (k, set) in expected.iter().enumerate() {
        assert_eq!(&visited(&r.evaluations, k + 1), set, "round {}", k + 1);
    }
}

#[test]
fn adaptive_beats_fine_grid_on_diminishing_returns() {
    let adaptive = adaptive_search(&search_config(grid((0, 512, 256), (0, 600, 300)), 1000), diminishing_return, 1).unwrap();
    let fine = grid_search(&grid((0, 1024, 64), (0, 600, 75)), diminishing_return, 1).unwrap();
    assert!(adaptive.evaluation_count() as f64 <= 0.6 * fine.evaluation_count() as f64);
    let all: Vec<Vec<f64>> = fine.evaluations.iter().chain(&adaptive.evaluations).map(|p| p.objectives().to_vec()).collect();
    let reference = auto_reference(&all).unwrap();
    let hv = |f: &[ParetoPoint]| hypervolume(&f.iter().map(|p| p.objectives().to_vec()).collect::<Vec<_>>(), &reference).unwrap();
    assert!(hv(&adaptive.frontier) >= 0.95 * hv(&fine.frontier));
}

#[test]
fn frontier_is_consistent_with_evaluations() {
    for f in [flat, ttl_cliff, diminishing_return] {
        let r = adaptive_search(&search_config(grid((0, 512, 256), (0, 600, 300)), 1000), f, 2).unwrap();
        assert_eq!(r.frontier, pareto_filter(&r.evaluations));
        let configs: BTreeSet<&Config> = r.evaluations.iter().map(|p| &p.config).collect();
        assert_eq!(configs.len(), r.evaluation_count(), "no configuration is evaluated twice");
    }
}

#[test]
fn budget_truncates() {
    let r = adaptive_search(&search_config(grid((0, 512, 256), (0, 600, 300)), 12), diminishing_return, 1).unwrap();
    assert!(r.truncated);
    assert_eq!(r.evaluation_count(), 12);
}

#[test]
fn parallel_and_serial_agree() {
    let cfg = search_config(grid((0, 512, 256), (0, 600, 300)), 1000);
    assert_eq!(
        adaptive_search(&cfg, diminishing_return, 1).unwrap(),
        adaptive_search(&cfg, diminishing_return, 3).unwrap()
    );
}

#[test]
fn simulate_failure_names_the_config() {
    let failing = |c: &Config| -> Result<Outcome, String> {
        if c.dram_gb == 256 { Err("boom".into()) } else { flat(c) }
    };
    let err = grid_search(&grid((0, 256, 256), (0, 0, 1)), failing, 1).unwrap_err();
    match err {
        SearchError::Simulate { config, message } => {
            assert_eq!(config.dram_gb, 256);
            assert_eq!(message, "boom");
        }
        other => panic!("unexpected {other:?}"),
    }
}
