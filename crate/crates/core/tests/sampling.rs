mod common;

use equigrid::env::sample_demands;
use equigrid::{GridState, Money};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn moments(draws: &[f64]) -> (f64, f64) {
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[test]
fn demand_moments_match_distribution() {
    let mut c = common::city("Atlanta", true);
    (c.baseline_demand, c.demand_stddev) = (580.0, 1.0);
    let state = GridState { budget: Money::ZERO, cities: vec![c] };
    for seed in [1, 2, 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<f64> = (0..100_000).map(|_| sample_demands(&state, &mut rng)[0]).collect();
        let (mean, std) = moments(&draws);
        assert!((mean - 580.0).abs() <= 0.02, "mean {mean}");
        assert!((std - 1.0).abs() <= 0.02, "std {std}");
    }
}

#[test]
fn demand_is_clamped_at_zero() {
    let mut c = common::city("Tiny", false);
    (c.baseline_demand, c.demand_stddev) = (0.5, 1.0);
    let state = GridState { budget: Money::ZERO, cities: vec![c] };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let draws: Vec<f64> = (0..10_000).map(|_| sample_demands(&state, &mut rng)[0]).collect();
    assert!(draws.iter().all(|&d| d >= 0.0));
    assert!(draws.contains(&0.0));
}

#[test]
fn one_draw_per_city_in_order() {
    let cities: Vec<_> = (0..3)
        .map(|i| {
            let mut c = common::city(&format!("c{i}"), false);
            (c.baseline_demand, c.demand_stddev) = (1000.0 * (i + 1) as f64, 0.0);
            c
        })
        .collect();
    let state = GridState { budget: Money::ZERO, cities };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(sample_demands(&state, &mut rng), vec![1000.0, 2000.0, 3000.0]);
}
