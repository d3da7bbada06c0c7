mod common;

use common::{all_assignments, rng};
use proptest::prelude::*;
use rand::Rng;
use rankedcucb::model::{gamma, rank_coefficients};
use rankedcucb::policy::{confidence_radius, lipschitz_ucb, random_action, self_ucb};
use rankedcucb::sim::{generate_instance, sample_observations};
use rankedcucb::{
    ArmStats, EffortVector, GenParams, PolicyKind, PolicyState, ProblemInstance, RewardModel,
};

fn single_location(levels: usize, lambda: f64) -> ProblemInstance {
    let grid: Vec<f64> = (0..levels).map(|j| j as f64).collect();
    let top = grid[levels - 1].max(1.0);
    ProblemInstance::new(vec![vec![1.0], vec![1.0]], top, grid, 1.0, lambda, 10).unwrap()
}

#[test]
fn lipschitz_bound_is_minimum_over_levels() {
    let mut r = rng(21);
    let levels = [0.0, 1.0, 2.0];
    for _ in 0..100 {
        let s: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
        let g = r.random_range(-1.0..1.0);
        let lip = r.random_range(0.0..2.0);
        let ucb = lipschitz_ucb(std::slice::from_ref(&s), &levels, lip, &[g]);
        for j in 0..3 {
            let candidates = (0..3).map(|k| {
                let dist = if g >= 0.0 {
                    levels[j] - levels[k]
                } else {
                    levels[k] - levels[j]
                };
                s[k] + g.abs() * lip * dist.max(0.0)
            });
            let expected = candidates.fold(f64::INFINITY, f64::min);
            assert!((ucb[0][j] - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn lipschitz_bound_degenerate_cases() {
    let grid = [0.0, 1.0, 2.0];
    let rising = vec![vec![0.1, 0.3, 0.7]];
    assert_eq!(lipschitz_ucb(&rising, &grid, f64::INFINITY, &[0.5]), rising);
    // a higher level still caps the levels below it
    let dipping = vec![vec![0.3, 0.1, 0.7]];
    assert_eq!(
        lipschitz_ucb(&dipping, &grid, f64::INFINITY, &[0.5]),
        vec![vec![0.1, 0.1, 0.7]]
    );
    let single = vec![vec![0.4]];
    assert_eq!(lipschitz_ucb(&single, &[0.0], 0.1, &[0.5]), single);
}

#[test]
fn self_ucb_hand_calculation() {
    let mut stats = ArmStats::new(1, 2);
    for k in 0..10 {
        stats.record(0, 1, if k < 4 { 1.0 } else { 0.0 });
    }
    let u = self_ucb(&stats, &[0.5], 100);
    let raw = 0.5 * 0.4 + (3.0 * 0.25 * 100f64.ln() / 20.0).sqrt();
    assert_eq!(u[0][0], 0.5);
    assert!((u[0][1] - raw.min(0.5)).abs() < 1e-12);
}

#[test]
fn optimism_holds_whenever_radii_cover_the_truth() {
    let params = GenParams {
        locations: 6,
        levels: 4,
        seed: 3,
        ..GenParams::default()
    };
    let (inst, model) = generate_instance(&params).unwrap();
    let mut checked = 0;
    for seed in 0..5 {
        let mut policy = PolicyState::new(PolicyKind::RankedCucb, &inst, seed);
        let mut env = rng(seed + 100);
        for _ in 0..300 {
            let t = policy.timestep();
            let g = policy.current_gamma(&inst);
            let stats = policy.stats();
            let covered = (0..inst.n_locations()).all(|i| {
                (0..inst.n_levels()).all(|j| match stats.mean(i, j) {
                    None => true,
                    Some(m) => {
                        (g[i] * m - g[i] * model.mean(i, j)).abs()
                            <= confidence_radius(g[i], t, stats.count(i, j))
                    }
                })
            });
            if covered {
                checked += 1;
                let ucb = policy.weights(&inst).unwrap();
                for (i, row) in ucb.iter().enumerate() {
                    for (j, u) in row.iter().enumerate() {
                        assert!(*u >= g[i] * model.mean(i, j) - 1e-12);
                    }
                }
            }
            let beta = policy.select_action(&inst, None).unwrap();
            let obs = sample_observations(&model, &beta, &mut env);
            policy.update(&beta, &obs).unwrap();
        }
    }
    assert!(checked > 1000);
}

proptest! {
    #[test]
    fn more_pulls_never_loosen_the_bound(
        means in prop::collection::vec(0.0f64..=1.0, 3),
        counts in prop::collection::vec(1u64..20, 3),
        arm in 0usize..3,
        extra in 1u64..20,
        g in -1.0f64..1.0,
        lip in 0.0f64..1.0,
    ) {
        let build = |bump: u64| {
            let mut stats = ArmStats::new(1, 3);
            for k in 0..3 {
                let n = counts[k] + if k == arm { bump } else { 0 };
                for _ in 0..n {
                    stats.record(0, k, means[k]);
                }
            }
            lipschitz_ucb(&self_ucb(&stats, &[g], 50), &[0.0, 1.0, 2.0], lip, &[g])
        };
        let before = build(0);
        let after = build(extra);
        for j in 0..3 {
            prop_assert!(after[0][j] <= before[0][j] + 1e-12);
        }
    }
}

#[test]
fn identical_seeds_give_identical_actions() {
    let params = GenParams {
        locations: 6,
        seed: 9,
        ..GenParams::default()
    };
    let (inst, model) = generate_instance(&params).unwrap();
    for kind in PolicyKind::ALL {
        let trace = || {
            let mut policy = PolicyState::new(kind, &inst, 42);
            let mut env = rng(42);
            (0..200)
                .map(|_| {
                    let beta = policy.select_action(&inst, Some(&model)).unwrap();
                    let obs = sample_observations(&model, &beta, &mut env);
                    policy.update(&beta, &obs).unwrap();
                    beta
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(trace(), trace(), "{kind}");
    }
}

#[test]
fn first_round_sees_flat_weights_and_plays_nothing() {
    let inst = ProblemInstance::new(
        vec![vec![0.7, 0.3], vec![0.2, 0.8]],
        2.0,
        vec![0.0, 1.0, 2.0],
        0.5,
        0.6,
        10,
    )
    .unwrap();
    let mut policy = PolicyState::new(PolicyKind::RankedCucb, &inst, 0);
    let w = policy.weights(&inst).unwrap();
    assert!(w.iter().flatten().all(|&x| (x - 0.6).abs() < 1e-12));
    let beta = policy.select_action(&inst, None).unwrap();
    assert_eq!(beta.level_indices(), &[0, 0]);
}

#[test]
fn optimal_favours_the_vulnerable_location_when_lambda_is_small() {
    let inst = ProblemInstance::new(
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        2.0,
        vec![0.0, 1.0, 2.0],
        1.0,
        0.1,
        10,
    )
    .unwrap();
    let model = RewardModel::new(vec![vec![0.0, 0.3, 0.5], vec![0.0, 0.6, 0.9]]).unwrap();
    let objective = |b: &[usize]| {
        let (m0, m1) = (model.mean(0, b[0]), model.mean(1, b[1]));
        0.1 * (m0 + m1) + 0.9 * (m0 - m1)
    };
    let best = all_assignments(2, 3)
        .into_iter()
        .filter(|b| b[0] + b[1] <= 2)
        .max_by(|a, b| objective(a).total_cmp(&objective(b)))
        .unwrap();
    let mut policy = PolicyState::new(PolicyKind::Optimal, &inst, 0);
    let beta = policy.select_action(&inst, Some(&model)).unwrap();
    assert_eq!(beta.level_indices(), &best[..]);
    assert_eq!(beta.level_indices(), &[2, 0]);
}

#[test]
fn random_covers_every_level_when_budget_is_ample() {
    let inst = ProblemInstance::new(
        vec![vec![0.5, 0.25, 0.25], vec![0.2, 0.3, 0.5]],
        9.0,
        vec![0.0, 1.0, 2.0, 3.0],
        1.0,
        0.5,
        10,
    )
    .unwrap();
    let mut r = rng(5);
    let mut hits = vec![vec![0usize; 4]; 3];
    for _ in 0..10_000 {
        let beta = random_action(&inst, &mut r);
        beta.check(&inst).unwrap();
        for (i, &j) in beta.level_indices().iter().enumerate() {
            hits[i][j] += 1;
        }
    }
    for row in &hits {
        for &h in row {
            assert!((h as f64 / 10_000.0 - 0.25).abs() < 0.03, "{hits:?}");
        }
    }
}

#[test]
fn empirical_mean_converges_for_bernoulli_observations() {
    let inst = single_location(2, 0.5);
    let mut policy = PolicyState::new(PolicyKind::Lizard, &inst, 0);
    let mut r = rng(17);
    let beta = EffortVector::new(vec![1]);
    for _ in 0..10_000 {
        let x = if r.random::<f64>() < 0.3 { 1.0 } else { 0.0 };
        policy.update(&beta, &[x]).unwrap();
    }
    assert_eq!(policy.stats().count(0, 1), 10_000);
    assert!((policy.stats().mean(0, 1).unwrap() - 0.3).abs() < 0.02);
}

#[test]
fn reward_only_lambda_makes_rankedcucb_and_lizard_agree() {
    let params = GenParams {
        locations: 8,
        lambda: 1.0,
        seed: 4,
        ..GenParams::default()
    };
    let (inst, model) = generate_instance(&params).unwrap();
    let q = rank_coefficients(&inst);
    assert_eq!(gamma(&inst, &q, 0.3), inst.reward_weights());
    let mut a = PolicyState::new(PolicyKind::RankedCucb, &inst, 1);
    let mut b = PolicyState::new(PolicyKind::Lizard, &inst, 1);
    let mut env = rng(1);
    for _ in 0..300 {
        let x = a.select_action(&inst, None).unwrap();
        let y = b.select_action(&inst, None).unwrap();
        assert_eq!(x, y);
        let obs = sample_observations(&model, &x, &mut env);
        a.update(&x, &obs).unwrap();
        b.update(&y, &obs).unwrap();
    }
}
