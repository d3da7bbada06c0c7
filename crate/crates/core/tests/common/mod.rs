#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rankedcucb::{ProblemInstance, RewardModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Row-stochastic `G × N` densities with strictly positive row sums.
pub fn random_densities(rng: &mut impl Rng, groups: usize, locations: usize) -> Vec<Vec<f64>> {
    (0..groups)
        .map(|_| {
            let raw: Vec<f64> = (0..locations)
                .map(|_| rng.random_range(0.01..1.0))
                .collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect()
        })
        .collect()
}

/// Monotone curves on levels `0..J` with values in `[0, 1]`.
pub fn random_model(rng: &mut impl Rng, locations: usize, levels: usize) -> RewardModel {
    let rows = (0..locations)
        .map(|_| {
            let mut v: Vec<f64> = (0..levels).map(|_| rng.random_range(0.0..=1.0)).collect();
            v.sort_by(f64::total_cmp);
            v
        })
        .collect();
    RewardModel::new(rows).unwrap()
}

/// Random instance on the integer grid `0..J` with a feasible budget.
pub fn random_instance(
    rng: &mut impl Rng,
    groups: usize,
    locations: usize,
    levels: usize,
    lambda: f64,
) -> ProblemInstance {
    let top = (levels - 1) as f64;
    let budget = rng.random_range(top as usize..=(locations * (levels - 1)).max(1)) as f64;
    ProblemInstance::new(
        random_densities(rng, groups, locations),
        budget.max(top),
        (0..levels).map(|j| j as f64).collect(),
        1.0,
        lambda,
        100,
    )
    .unwrap()
}

/// Random `N × J` weight table with entries in `[-1, 1]`.
pub fn random_weights(rng: &mut impl Rng, locations: usize, levels: usize) -> Vec<Vec<f64>> {
    (0..locations)
        .map(|_| (0..levels).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect()
}

/// Every assignment of levels `0..J` to `N` locations.
pub fn all_assignments(locations: usize, levels: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..locations {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..levels).map(move |j| {
                    let mut next = prefix.clone();
                    next.push(j);
                    next
                })
            })
            .collect();
    }
    out
}
