//! RankedCUCB and the comparison policies.
//!
//! Every learning policy keeps per-arm statistics, where an arm is a
//! `(location, effort level)` pair. Each round it builds an optimistic value
//! for every arm and asks the knapsack oracle for the best effort vector.
//!
//! For RankedCUCB the arm values live in Γ-weighted units: the empirical mean
//! is scaled by `Γ_i(ε_t)` and widened by the confidence radius, then tightened
//! across levels of the same location using monotonicity and the Lipschitz
//! bound on the reward curves. The rank term is phased in through
//! `ε_t = t^{-1/3}`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{gamma, rank_coefficients, EffortVector, ProblemInstance};
use crate::oracle::{solve_dp, OracleWeights};
use crate::sim::RewardModel;

/// Pull counts and cumulative rewards per `(location, level)` arm.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmStats {
    counts: Vec<Vec<u64>>,
    reward_sums: Vec<Vec<f64>>,
}

impl ArmStats {
    pub fn new(n_locations: usize, n_levels: usize) -> Self {
        Self {
            counts: vec![vec![0; n_levels]; n_locations],
            reward_sums: vec![vec![0.0; n_levels]; n_locations],
        }
    }

    pub fn count(&self, location: usize, level: usize) -> u64 {
        self.counts[location][level]
    }

    pub fn reward_sum(&self, location: usize, level: usize) -> f64 {
        self.reward_sums[location][level]
    }

    /// Empirical mean, `None` for an unvisited arm.
    pub fn mean(&self, location: usize, level: usize) -> Option<f64> {
        match self.counts[location][level] {
            0 => None,
            n => Some(self.reward_sums[location][level] / n as f64),
        }
    }

    pub fn n_locations(&self) -> usize {
        self.counts.len()
    }

    pub fn n_levels(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    /// Adds one pull with observation `reward ∈ [0, 1]`.
    pub fn record(&mut self, location: usize, level: usize, reward: f64) {
        self.counts[location][level] += 1;
        self.reward_sums[location][level] += reward;
    }
}

/// Half-width `sqrt(3 Γ² ln t / (2 n))` of the confidence interval around a
/// Γ-weighted empirical mean after `n` pulls at round `t`.
pub fn confidence_radius(gamma_i: f64, t: u64, n: u64) -> f64 {
    debug_assert!(n >= 1 && t >= 1);
    (3.0 * gamma_i * gamma_i * (t as f64).ln() / (2.0 * n as f64)).sqrt()
}

/// `ε_t = t^{-1/3}`.
pub fn epsilon_schedule(t: u64) -> f64 {
    (t as f64).powf(-1.0 / 3.0)
}

/// Optimistic value of each arm from its own observations.
///
/// Unvisited arms get `max(0, Γ_i)`; visited arms get `Γ_i μ̂ + r`, clipped to
/// the interval between 0 and `Γ_i` that contains every attainable value.
pub fn self_ucb(stats: &ArmStats, gamma: &[f64], t: u64) -> Vec<Vec<f64>> {
    (0..stats.n_locations())
        .map(|i| {
            let g = gamma[i];
            let (lo, hi) = (g.min(0.0), g.max(0.0));
            (0..stats.n_levels())
                .map(|j| match stats.mean(i, j) {
                    None => hi,
                    Some(m) => {
                        let r = confidence_radius(g, t, stats.count(i, j));
                        (g * m + r).clamp(lo, hi)
                    }
                })
                .collect()
        })
        .collect()
}

/// Tightens self-UCBs across effort levels of the same location:
/// `ucb(i, j) = min_k { s(i, k) + |Γ_i| L dist(j, k) }`.
///
/// For `Γ_i ≥ 0`, `dist = max(0, ψ_j − ψ_k)`; a nondecreasing curve cannot be
/// lower at a higher effort. For negative `Γ_i` the weighted curve is
/// nonincreasing and the distance is mirrored.
pub fn lipschitz_ucb(
    self_ucbs: &[Vec<f64>],
    levels: &[f64],
    lipschitz: f64,
    gamma: &[f64],
) -> Vec<Vec<f64>> {
    self_ucbs
        .iter()
        .zip(gamma)
        .map(|(row, &g)| {
            let slope = g.abs() * lipschitz;
            (0..row.len())
                .map(|j| {
                    row.iter()
                        .enumerate()
                        .map(|(k, &s)| {
                            let gap = if g >= 0.0 {
                                levels[j] - levels[k]
                            } else {
                                levels[k] - levels[j]
                            };
                            // 0·∞ guard: an infinite slope only matters when the gap is positive
                            if gap > 0.0 {
                                s + slope * gap
                            } else {
                                s
                            }
                        })
                        .fold(f64::INFINITY, f64::min)
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    RankedCucb,
    Lizard,
    NaiveRank,
    Random,
    Optimal,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::RankedCucb,
        PolicyKind::Lizard,
        PolicyKind::NaiveRank,
        PolicyKind::Random,
        PolicyKind::Optimal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::RankedCucb => "rankedcucb",
            PolicyKind::Lizard => "lizard",
            PolicyKind::NaiveRank => "naiverank",
            PolicyKind::Random => "random",
            PolicyKind::Optimal => "optimal",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown policy `{s}`")))
    }
}

/// Best effort vector for weights `w[i][j]` under the instance budget.
pub fn oracle_action(instance: &ProblemInstance, weights: Vec<Vec<f64>>) -> Result<EffortVector> {
    let weights = OracleWeights::new(weights)?;
    Ok(solve_dp(&weights, instance.budget_units(), &instance.level_units())?.beta)
}

/// Hindsight-optimal action for the undiscounted objective.
pub fn optimal_action(instance: &ProblemInstance, model: &RewardModel) -> Result<EffortVector> {
    let g0 = gamma(instance, &rank_coefficients(instance), 0.0);
    let weights = model
        .rows()
        .iter()
        .zip(&g0)
        .map(|(row, g)| row.iter().map(|m| g * m).collect())
        .collect();
    oracle_action(instance, weights)
}

/// Uniformly random feasible action: locations are visited in random order and
/// each takes a level drawn uniformly from those the remaining budget allows.
pub fn random_action<R: Rng + ?Sized>(instance: &ProblemInstance, rng: &mut R) -> EffortVector {
    let units = instance.level_units();
    let mut remaining = instance.budget_units();
    let mut order: Vec<usize> = (0..instance.n_locations()).collect();
    order.shuffle(rng);
    let mut levels = vec![0; instance.n_locations()];
    for i in order {
        let fits = units.iter().take_while(|&&u| u <= remaining).count();
        let j = rng.random_range(0..fits);
        levels[i] = j;
        remaining -= units[j];
    }
    EffortVector::new(levels)
}

/// Learner state for one run of one policy.
#[derive(Clone, Debug)]
pub struct PolicyState {
    kind: PolicyKind,
    stats: ArmStats,
    t: u64,
    rng: ChaCha8Rng,
    rank_coefficients: Vec<f64>,
    optimal: Option<EffortVector>,
}

impl PolicyState {
    pub fn new(kind: PolicyKind, instance: &ProblemInstance, seed: u64) -> Self {
        Self {
            kind,
            stats: ArmStats::new(instance.n_locations(), instance.n_levels()),
            t: 1,
            rng: ChaCha8Rng::seed_from_u64(seed),
            rank_coefficients: rank_coefficients(instance),
            optimal: None,
        }
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn stats(&self) -> &ArmStats {
        &self.stats
    }

    /// Round about to be played, starting at 1.
    pub fn timestep(&self) -> u64 {
        self.t
    }

    /// Γ used by RankedCUCB at the current round.
    pub fn current_gamma(&self, instance: &ProblemInstance) -> Vec<f64> {
        gamma(instance, &self.rank_coefficients, epsilon_schedule(self.t))
    }

    fn ucb_table(&self, instance: &ProblemInstance, gamma: &[f64]) -> Vec<Vec<f64>> {
        let own = self_ucb(&self.stats, gamma, self.t);
        lipschitz_ucb(&own, instance.levels(), instance.lipschitz(), gamma)
    }

    /// Oracle weights the policy would hand to the knapsack solver this round.
    /// `None` for policies that do not use UCB weights.
    pub fn weights(&self, instance: &ProblemInstance) -> Option<Vec<Vec<f64>>> {
        match self.kind {
            PolicyKind::RankedCucb => Some(self.ucb_table(instance, &self.current_gamma(instance))),
            PolicyKind::Lizard => Some(self.ucb_table(instance, instance.reward_weights())),
            PolicyKind::NaiveRank => {
                let ones = vec![1.0; instance.n_locations()];
                let ucb = self.ucb_table(instance, &ones);
                Some(
                    ucb.into_iter()
                        .zip(&self.rank_coefficients)
                        .map(|(row, q)| row.into_iter().map(|u| q * u).collect())
                        .collect(),
                )
            }
            PolicyKind::Random | PolicyKind::Optimal => None,
        }
    }

    /// Chooses this round's effort vector. Only [`PolicyKind::Optimal`] reads
    /// `truth`, and it requires it.
    pub fn select_action(
        &mut self,
        instance: &ProblemInstance,
        truth: Option<&RewardModel>,
    ) -> Result<EffortVector> {
        match self.kind {
            PolicyKind::Random => Ok(random_action(instance, &mut self.rng)),
            PolicyKind::Optimal => {
                if let Some(beta) = &self.optimal {
                    return Ok(beta.clone());
                }
                let model = truth.ok_or_else(|| {
                    Error::Config("the optimal policy needs the true reward model".into())
                })?;
                let beta = optimal_action(instance, model)?;
                self.optimal = Some(beta.clone());
                Ok(beta)
            }
            _ => {
                let weights = self.weights(instance).expect("learning policy");
                oracle_action(instance, weights)
            }
        }
    }

    /// Records observations `X_i ∈ [0, 1]` for the played action and advances
    /// the round counter.
    pub fn update(&mut self, beta: &EffortVector, observations: &[f64]) -> Result<()> {
        let levels = beta.level_indices();
        if levels.len() != self.stats.n_locations() || observations.len() != levels.len() {
            return Err(Error::Contract(format!(
                "expected {} levels and observations, got {} and {}",
                self.stats.n_locations(),
                levels.len(),
                observations.len()
            )));
        }
        if let Some(i) = levels.iter().position(|&j| j >= self.stats.n_levels()) {
            return Err(Error::Contract(format!(
                "location {i} played level index {} outside the effort grid",
                levels[i]
            )));
        }
        if let Some(i) = observations.iter().position(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::Contract(format!(
                "observation {} at location {i} is outside [0, 1]",
                observations[i]
            )));
        }
        for (i, (&j, &x)) in levels.iter().zip(observations).enumerate() {
            self.stats.record(i, j, x);
        }
        self.t += 1;
        Ok(())
    }
}
