mod common;

use common::{random_densities, random_model, rng};
use proptest::prelude::*;
use rankedcucb::model::DENSITY_TOLERANCE;
use rankedcucb::sim::{generate_instance, load_instance, sample_observations, save_instance};
use rankedcucb::{EffortVector, GenParams, ProblemInstance, RewardModel, Scenario};

#[test]
fn generated_models_satisfy_curve_invariants() {
    for seed in 0..100u64 {
        let params = GenParams {
            locations: 3 + (seed % 20) as usize,
            groups: 2 + (seed % 4) as usize,
            levels: 2 + (seed % 4) as usize,
            lipschitz: [0.1, 0.3, 0.8, 2.0][(seed % 4) as usize],
            scenario: if seed % 2 == 0 {
                Scenario::Adversarial
            } else {
                Scenario::Uniform
            },
            seed,
            ..GenParams::default()
        };
        let (inst, model) = generate_instance(&params).unwrap();
        let violations = model.violations(inst.levels(), inst.lipschitz());
        assert!(violations.is_empty(), "seed {seed}: {violations:?}");
        for row in inst.densities() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < DENSITY_TOLERANCE);
        }
    }
}

#[test]
fn sampler_mean_matches_probability() {
    let model = RewardModel::new(vec![vec![0.0, 0.25, 1.0]]).unwrap();
    let mut r = rng(8);
    let draws = 10_000;
    let mut sum = [0.0; 3];
    for _ in 0..draws {
        for (j, s) in sum.iter_mut().enumerate() {
            *s += sample_observations(&model, &EffortVector::new(vec![j]), &mut r)[0];
        }
    }
    assert_eq!(sum[0], 0.0);
    assert_eq!(sum[2], draws as f64);
    assert!((sum[1] / draws as f64 - 0.25).abs() < 0.02);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn save_then_load_round_trips(seed in 0u64..1000, groups in 2usize..5, locations in 1usize..8, levels in 1usize..5) {
        let mut r = rng(seed);
        let inst = ProblemInstance::new(
            random_densities(&mut r, groups, locations),
            (locations * levels) as f64,
            (0..levels).map(|j| j as f64).collect(),
            1.0,
            0.7,
            123,
        )
        .unwrap();
        let model = random_model(&mut r, locations, levels);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("instance.csv");
        save_instance(&inst, Some(&model), &path).unwrap();
        let (back, back_model) = load_instance(&path).unwrap();
        let back_model = back_model.unwrap();
        prop_assert_eq!(back.levels(), inst.levels());
        prop_assert_eq!(back.budget(), inst.budget());
        prop_assert_eq!(back.lambda(), inst.lambda());
        prop_assert_eq!(back.horizon(), inst.horizon());
        for (a, b) in back.densities().iter().flatten().zip(inst.densities().iter().flatten()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in back_model.rows().iter().flatten().zip(model.rows().iter().flatten()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
