//! Ground-truth environment: reward curves, instance generation and
//! observation sampling.

mod io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EffortVector, ProblemInstance};

pub use io::{load_instance, save_instance, write_instance};

/// Slack allowed when checking the Lipschitz and range assumptions on
/// floating-point curves.
pub const CURVE_TOLERANCE: f64 = 1e-12;

/// Adversarial instances require the most vulnerable group's density to have at
/// most this rank correlation with the full-effort reward.
pub const ADVERSARIAL_MAX_CORRELATION: f64 = -0.5;

const MAX_GENERATION_ATTEMPTS: usize = 200;
/// Spread of the per-location scale around the shared adversarial profile.
const ADVERSARIAL_JITTER: f64 = 0.04;
/// How sharply groups lean toward low- or high-reward locations.
const ADVERSARIAL_CONCENTRATION: f64 = 24.0;
/// Largest total rise of the shared adversarial profile.
const ADVERSARIAL_MAX_RISE: f64 = 0.85;

/// True expected reward `μ_i(ψ_j)` on the effort grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    mu: Vec<Vec<f64>>,
}

/// A broken reward-curve assumption at location `location`.
#[derive(Clone, Debug, PartialEq)]
pub enum CurveViolation {
    Range {
        location: usize,
        level: usize,
        value: f64,
    },
    Monotone {
        location: usize,
        level: usize,
    },
    Lipschitz {
        location: usize,
        from: usize,
        to: usize,
    },
}

impl RewardModel {
    /// Wraps a table `mu[i][j]`; every row must have the same length.
    pub fn new(mu: Vec<Vec<f64>>) -> Result<Self> {
        let j = mu.first().map_or(0, Vec::len);
        if mu.is_empty() || j == 0 || mu.iter().any(|row| row.len() != j) {
            return Err(Error::InvalidInstance(
                "reward table must be a non-empty rectangle".into(),
            ));
        }
        Ok(Self { mu })
    }

    pub fn mean(&self, location: usize, level: usize) -> f64 {
        self.mu[location][level]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.mu
    }

    pub fn n_locations(&self) -> usize {
        self.mu.len()
    }

    pub fn n_levels(&self) -> usize {
        self.mu[0].len()
    }

    /// Every violation of range, monotonicity and the Lipschitz bound, checked
    /// over all pairs of grid points.
    pub fn violations(&self, levels: &[f64], lipschitz: f64) -> Vec<CurveViolation> {
        let mut out = Vec::new();
        for (i, row) in self.mu.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !(-CURVE_TOLERANCE..=1.0 + CURVE_TOLERANCE).contains(&v) {
                    out.push(CurveViolation::Range {
                        location: i,
                        level: j,
                        value: v,
                    });
                }
                if j > 0 && v < row[j - 1] {
                    out.push(CurveViolation::Monotone {
                        location: i,
                        level: j,
                    });
                }
            }
            for j in 0..row.len() {
                for k in (j + 1)..row.len() {
                    let bound = lipschitz * (levels[k] - levels[j]).abs();
                    if (row[k] - row[j]).abs() > bound + CURVE_TOLERANCE {
                        out.push(CurveViolation::Lipschitz {
                            location: i,
                            from: j,
                            to: k,
                        });
                    }
                }
            }
        }
        out
    }

    /// Fails with the first violation, if any.
    pub fn check(&self, instance: &ProblemInstance) -> Result<()> {
        if self.n_locations() != instance.n_locations() || self.n_levels() != instance.n_levels() {
            return Err(Error::InvalidInstance(format!(
                "reward table is {}x{} but the instance has {} locations and {} levels",
                self.n_locations(),
                self.n_levels(),
                instance.n_locations(),
                instance.n_levels()
            )));
        }
        match self
            .violations(instance.levels(), instance.lipschitz())
            .first()
        {
            None => Ok(()),
            Some(v) => Err(Error::InvalidInstance(format!(
                "reward curve violation: {v:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Group densities drawn independently of the reward curves.
    Uniform,
    /// The most vulnerable group concentrates where full-effort reward is low
    /// and the least vulnerable group where it is high.
    Adversarial,
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Self::Uniform),
            "adversarial" => Ok(Self::Adversarial),
            other => Err(Error::Config(format!(
                "unknown scenario `{other}` (expected uniform or adversarial)"
            ))),
        }
    }
}

/// Parameters for [`generate_instance`]. Effort levels are `0, 1, …, J − 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenParams {
    pub locations: usize,
    pub groups: usize,
    pub levels: usize,
    /// Defaults to `N · ψ_J / 2`.
    pub budget: Option<f64>,
    pub lipschitz: f64,
    pub lambda: f64,
    pub horizon: usize,
    pub seed: u64,
    pub scenario: Scenario,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            locations: 25,
            groups: 4,
            levels: 4,
            budget: None,
            lipschitz: 0.8,
            lambda: 0.8,
            horizon: 1000,
            seed: 0,
            scenario: Scenario::Adversarial,
        }
    }
}

/// Draws a reproducible instance and its hidden reward curves.
pub fn generate_instance(params: &GenParams) -> Result<(ProblemInstance, RewardModel)> {
    let fail = |reason: String| Error::Generation {
        attempts: 0,
        reason,
    };
    if params.locations == 0 || params.groups < 2 || params.levels == 0 {
        return Err(fail(format!(
            "need locations > 0, groups >= 2, levels > 0 (got {}, {}, {})",
            params.locations, params.groups, params.levels
        )));
    }
    if !(params.lipschitz.is_finite() && params.lipschitz >= 0.0) {
        return Err(fail(format!(
            "Lipschitz constant {} is invalid",
            params.lipschitz
        )));
    }
    let levels: Vec<f64> = (0..params.levels).map(|j| j as f64).collect();
    let top = levels[levels.len() - 1];
    let budget = params
        .budget
        .unwrap_or_else(|| (params.locations as f64 * top / 2.0).floor().max(top));

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let curves = match params.scenario {
        Scenario::Uniform => (0..params.locations)
            .map(|_| independent_curve(&mut rng, &levels, params.lipschitz))
            .collect(),
        Scenario::Adversarial => {
            let profile = shared_profile(&mut rng, &levels, params.lipschitz);
            (0..params.locations)
                .map(|_| profiled_curve(&mut rng, &profile))
                .collect()
        }
    };
    let model = RewardModel::new(curves)?;
    let full: Vec<f64> = model.rows().iter().map(|r| r[r.len() - 1]).collect();

    let mut attempts = 0;
    let counts = loop {
        attempts += 1;
        let counts = match params.scenario {
            Scenario::Uniform => uniform_counts(&mut rng, params.groups, params.locations),
            Scenario::Adversarial => adversarial_counts(&mut rng, params.groups, &full),
        };
        let accept = params.scenario == Scenario::Uniform
            || params.locations < 2
            || rank_correlation(&counts[0], &full) <= ADVERSARIAL_MAX_CORRELATION;
        if accept {
            break counts;
        }
        if attempts >= MAX_GENERATION_ATTEMPTS {
            return Err(Error::Generation {
                attempts,
                reason: "could not anti-correlate the most vulnerable group with reward".into(),
            });
        }
    };

    let instance = ProblemInstance::from_counts(
        counts,
        budget,
        levels,
        params.lipschitz,
        params.lambda,
        params.horizon,
    )?;
    model.check(&instance)?;
    Ok((instance, model))
}

/// Independent monotone curve: each increment is a random fraction of
/// `L·Δψ`, capped at 1.
fn independent_curve(rng: &mut ChaCha8Rng, levels: &[f64], lipschitz: f64) -> Vec<f64> {
    let steepness = rng.random_range(0.4..1.0);
    let mut curve = Vec::with_capacity(levels.len());
    curve.push(rng.random_range(0.0..0.1));
    for w in levels.windows(2) {
        let step = lipschitz * (w[1] - w[0]) * steepness * rng.random_range(0.5..=1.0);
        let prev = curve[curve.len() - 1];
        curve.push(f64::min(1.0, prev + step));
    }
    curve
}

/// Shared profile with a knee: steps stay close to `L·Δψ` for the first two
/// thirds of the grid, then drop sharply. Total rise is at most
/// `ADVERSARIAL_MAX_RISE`.
fn shared_profile(rng: &mut ChaCha8Rng, levels: &[f64], lipschitz: f64) -> Vec<f64> {
    let gaps = levels.len().saturating_sub(1);
    let knee = (2 * gaps).div_ceil(3);
    let mut factor = rng.random_range(0.8..=1.0);
    let mut steps = Vec::with_capacity(gaps);
    for (k, w) in levels.windows(2).enumerate() {
        if k > 0 {
            factor *= if k < knee {
                rng.random_range(0.85..=1.0)
            } else {
                rng.random_range(0.1..=0.2)
            };
        }
        steps.push(lipschitz * (w[1] - w[0]) * factor);
    }
    let rise: f64 = steps.iter().sum();
    if rise > ADVERSARIAL_MAX_RISE {
        steps
            .iter_mut()
            .for_each(|s| *s *= ADVERSARIAL_MAX_RISE / rise);
    }
    steps
}

/// Curve following `profile`, scaled by a per-location factor close to 1.
fn profiled_curve(rng: &mut ChaCha8Rng, profile: &[f64]) -> Vec<f64> {
    let scale = rng.random_range(1.0 - ADVERSARIAL_JITTER..=1.0);
    let mut curve = Vec::with_capacity(profile.len() + 1);
    curve.push(rng.random_range(0.0..0.1));
    for step in profile {
        let prev = curve[curve.len() - 1];
        curve.push(f64::min(1.0, prev + step * scale));
    }
    curve
}

fn uniform_counts(rng: &mut ChaCha8Rng, groups: usize, locations: usize) -> Vec<Vec<f64>> {
    (0..groups)
        .map(|_| {
            let mut row: Vec<f64> = (0..locations)
                .map(|_| rng.random_range(0..=100u32) as f64)
                .collect();
            if row.iter().all(|&c| c == 0.0) {
                row[rng.random_range(0..locations)] = 1.0;
            }
            row
        })
        .collect()
}

/// Group `g` leans toward locations whose full-effort reward rank is low
/// (`g = 0`) or high (`g = G − 1`), with multiplicative noise.
fn adversarial_counts(rng: &mut ChaCha8Rng, groups: usize, full_reward: &[f64]) -> Vec<Vec<f64>> {
    let n = full_reward.len();
    let ranks = normalized_ranks(full_reward);
    (0..groups)
        .map(|g| {
            let lean = 2.0 * g as f64 / (groups - 1) as f64 - 1.0;
            (0..n)
                .map(|i| {
                    let weight = (ADVERSARIAL_CONCENTRATION * lean * (ranks[i] - 0.5)).exp();
                    (100.0 * weight * rng.random_range(0.25..1.75))
                        .round()
                        .max(1.0)
                })
                .collect()
        })
        .collect()
}

/// Ranks scaled to `[0, 1]`; ties get their average rank.
fn normalized_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return vec![0.5; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end + 1 < n && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + end) as f64 / 2.0;
        for &idx in &order[start..=end] {
            ranks[idx] = avg / (n - 1) as f64;
        }
        start = end + 1;
    }
    ranks
}

/// Kendall tau-a between two equally long samples; tied pairs score zero.
pub fn rank_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    assert_eq!(n, b.len());
    if n < 2 {
        return 0.0;
    }
    let mut score = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let s = (a[i] - a[j]).signum() * (b[i] - b[j]).signum();
            if a[i] != a[j] && b[i] != b[j] {
                score += s as i64;
            }
        }
    }
    score as f64 / (n * (n - 1) / 2) as f64
}

/// Independent Bernoulli observations `X_i ~ Bernoulli(μ_i(β_i))`.
pub fn sample_observations<R: Rng + ?Sized>(
    model: &RewardModel,
    beta: &EffortVector,
    rng: &mut R,
) -> Vec<f64> {
    beta.level_indices()
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let p = model.mean(i, j);
            if rng.random::<f64>() < p {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_curves_when_lipschitz_is_zero() {
        let params = GenParams {
            lipschitz: 0.0,
            scenario: Scenario::Uniform,
            ..GenParams::default()
        };
        let (inst, model) = generate_instance(&params).unwrap();
        for row in model.rows() {
            assert!(row.iter().all(|&v| v == row[0]));
        }
        assert!(model.violations(inst.levels(), 0.0).is_empty());
    }

    #[test]
    fn generation_is_deterministic() {
        let params = GenParams::default();
        assert_eq!(
            generate_instance(&params).unwrap(),
            generate_instance(&params).unwrap()
        );
        let other = GenParams {
            seed: 1,
            ..params.clone()
        };
        assert_ne!(
            generate_instance(&params).unwrap(),
            generate_instance(&other).unwrap()
        );
    }

    #[test]
    fn adversarial_density_anti_correlates() {
        for seed in 0..10 {
            let params = GenParams {
                seed,
                ..GenParams::default()
            };
            let (inst, model) = generate_instance(&params).unwrap();
            let full: Vec<f64> = model.rows().iter().map(|r| *r.last().unwrap()).collect();
            assert!(rank_correlation(&inst.densities()[0], &full) <= ADVERSARIAL_MAX_CORRELATION);
        }
    }

    #[test]
    fn default_budget_is_half_of_full_effort() {
        let (inst, _) = generate_instance(&GenParams::default()).unwrap();
        assert_eq!(inst.budget(), 37.0);
        assert_eq!(inst.levels(), &[0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn rejects_degenerate_parameters() {
        let params = GenParams {
            groups: 1,
            ..GenParams::default()
        };
        assert!(matches!(
            generate_instance(&params),
            Err(Error::Generation { .. })
        ));
    }

    #[test]
    fn violations_are_reported() {
        let model = RewardModel::new(vec![vec![0.2, 0.1, 0.9], vec![0.0, 0.5, 1.2]]).unwrap();
        let v = model.violations(&[0.0, 1.0, 2.0], 0.5);
        assert!(v.contains(&CurveViolation::Monotone {
            location: 0,
            level: 1
        }));
        assert!(v.contains(&CurveViolation::Lipschitz {
            location: 0,
            from: 1,
            to: 2
        }));
        assert!(v.iter().any(|x| matches!(
            x,
            CurveViolation::Range {
                location: 1,
                level: 2,
                ..
            }
        )));
    }

    #[test]
    fn degenerate_observations() {
        let model = RewardModel::new(vec![vec![0.0, 1.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(
                sample_observations(&model, &EffortVector::new(vec![0]), &mut rng),
                vec![0.0]
            );
            assert_eq!(
                sample_observations(&model, &EffortVector::new(vec![1]), &mut rng),
                vec![1.0]
            );
        }
    }

    #[test]
    fn rank_correlation_extremes() {
        assert_eq!(rank_correlation(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]), 1.0);
        assert_eq!(rank_correlation(&[1.0, 2.0, 3.0], &[6.0, 5.0, 4.0]), -1.0);
    }
}
