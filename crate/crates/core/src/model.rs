//! Problem data and the objective shared by every policy.
//!
//! A [`ProblemInstance`] describes `N` locations, `G` groups with a known
//! vulnerability order, a discretized effort grid and a budget. Groups are
//! indexed so that group 0 is the most vulnerable one unless a custom
//! priority order is supplied.
//!
//! The prioritization metric compares the benefit each group receives from an
//! effort vector against the vulnerability order. Because it is linear in the
//! per-location rewards, the whole objective
//!
//! ```text
//! obj(β) = λ Σ_i c_i μ_i(β_i) + (1 − λ)(1 − ε) P(β)
//! ```
//!
//! collapses to `Σ_i μ_i(β_i) Γ_i(ε)` with
//! `Γ_i(ε) = λ c_i + (1 − λ)(1 − ε) q_i`, where `q_i` are the per-location rank
//! coefficients. Both forms are exposed so callers can cross-check them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::RewardModel;

/// Absolute tolerance used when validating that a density row sums to one.
pub const DENSITY_TOLERANCE: f64 = 1e-9;

/// Pairs of group benefits closer than this count as tied in Kendall tau.
pub const KENDALL_TIE_TOLERANCE: f64 = 1e-12;

/// Relative tolerance for "ψ is an integer multiple of the effort unit".
const GRID_TOLERANCE: f64 = 1e-9;

/// A budgeted effort-allocation problem over locations and ranked groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    densities: Vec<Vec<f64>>,
    budget: f64,
    levels: Vec<f64>,
    effort_unit: f64,
    lipschitz: f64,
    lambda: f64,
    horizon: usize,
    group_weights: Vec<f64>,
    reward_weights: Vec<f64>,
    priority: Vec<usize>,
}

impl ProblemInstance {
    /// Builds an instance from normalized densities `d[g][i]`.
    ///
    /// The effort unit defaults to 1; use [`ProblemInstance::with_grid`]
    /// for fractional grids.
    pub fn new(
        densities: Vec<Vec<f64>>,
        budget: f64,
        levels: Vec<f64>,
        lipschitz: f64,
        lambda: f64,
        horizon: usize,
    ) -> Result<Self> {
        let n_groups = densities.len();
        let n_locations = densities.first().map_or(0, Vec::len);
        let instance = Self {
            densities,
            budget,
            levels,
            effort_unit: 1.0,
            lipschitz,
            lambda,
            horizon,
            group_weights: vec![1.0; n_groups],
            reward_weights: vec![1.0; n_locations],
            priority: (0..n_groups).collect(),
        };
        instance.validate()?;
        Ok(instance)
    }

    /// Builds an instance from raw per-group counts `η[g][i]`, normalizing each
    /// group to a density over locations.
    pub fn from_counts(
        counts: Vec<Vec<f64>>,
        budget: f64,
        levels: Vec<f64>,
        lipschitz: f64,
        lambda: f64,
        horizon: usize,
    ) -> Result<Self> {
        let densities = normalize_counts(counts)?;
        Self::new(densities, budget, levels, lipschitz, lambda, horizon)
    }

    /// Replaces the effort grid and its granularity unit together.
    pub fn with_grid(mut self, levels: Vec<f64>, unit: f64) -> Result<Self> {
        self.levels = levels;
        self.effort_unit = unit;
        self.validate()?;
        Ok(self)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        self.lambda = lambda;
        self.validate()?;
        Ok(self)
    }

    pub fn with_budget(mut self, budget: f64) -> Result<Self> {
        self.budget = budget;
        self.validate()?;
        Ok(self)
    }

    pub fn with_horizon(mut self, horizon: usize) -> Result<Self> {
        self.horizon = horizon;
        self.validate()?;
        Ok(self)
    }

    /// Relative importance `α_g` of each group in the prioritization metric.
    pub fn with_group_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        self.group_weights = weights;
        self.validate()?;
        Ok(self)
    }

    /// Per-location reward coefficients `c_i`.
    pub fn with_reward_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        self.reward_weights = weights;
        self.validate()?;
        Ok(self)
    }

    /// Vulnerability order: `order[0]` is the most vulnerable group.
    pub fn with_priority(mut self, order: Vec<usize>) -> Result<Self> {
        self.priority = order;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInstance(msg));
        let g = self.densities.len();
        if g < 2 {
            return bad(format!("need at least 2 groups, got {g}"));
        }
        let n = self.densities[0].len();
        if n == 0 {
            return bad("need at least one location".into());
        }
        for (gi, row) in self.densities.iter().enumerate() {
            if row.len() != n {
                return bad(format!(
                    "density row for group {} has {} entries, expected {n}",
                    gi + 1,
                    row.len()
                ));
            }
            if let Some(i) = row.iter().position(|d| !d.is_finite() || *d < 0.0) {
                return bad(format!(
                    "density of group {} at location {i} is negative or non-finite",
                    gi + 1
                ));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > DENSITY_TOLERANCE {
                return bad(format!("density row for group {} sums to {sum}", gi + 1));
            }
        }
        if !(self.effort_unit.is_finite() && self.effort_unit > 0.0) {
            return bad(format!(
                "effort unit must be positive, got {}",
                self.effort_unit
            ));
        }
        if !(self.budget.is_finite() && self.budget >= 0.0) {
            return bad(format!("budget must be non-negative, got {}", self.budget));
        }
        if self.levels.is_empty() {
            return bad("effort grid is empty".into());
        }
        if self.levels[0] != 0.0 {
            return bad(format!(
                "lowest effort level must be 0, got {}",
                self.levels[0]
            ));
        }
        for w in self.levels.windows(2) {
            if w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater) {
                return bad(format!(
                    "effort levels not strictly ascending at {} -> {}",
                    w[0], w[1]
                ));
            }
        }
        for &psi in &self.levels {
            let k = psi / self.effort_unit;
            if (k - k.round()).abs() > GRID_TOLERANCE * k.abs().max(1.0) {
                return bad(format!(
                    "effort level {psi} is not a multiple of unit {}",
                    self.effort_unit
                ));
            }
        }
        let top = *self.levels.last().unwrap();
        if top > self.budget + GRID_TOLERANCE * self.budget.max(1.0) {
            return bad(format!(
                "highest effort level {top} exceeds budget {}",
                self.budget
            ));
        }
        if !(self.lipschitz.is_finite() && self.lipschitz >= 0.0) {
            return bad(format!(
                "Lipschitz constant must be >= 0, got {}",
                self.lipschitz
            ));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad(format!("lambda must lie in (0, 1], got {}", self.lambda));
        }
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if self.group_weights.len() != g || self.group_weights.iter().any(|a| !a.is_finite()) {
            return bad(format!("expected {g} finite group weights"));
        }
        if self.reward_weights.len() != n || self.reward_weights.iter().any(|c| !c.is_finite()) {
            return bad(format!("expected {n} finite reward weights"));
        }
        let mut seen = vec![false; g];
        if self.priority.len() != g {
            return bad(format!("priority order must list all {g} groups"));
        }
        for &p in &self.priority {
            if p >= g || std::mem::replace(&mut seen[p], true) {
                return bad(format!(
                    "priority order {:?} is not a permutation",
                    self.priority
                ));
            }
        }
        Ok(())
    }

    pub fn n_locations(&self) -> usize {
        self.densities[0].len()
    }

    pub fn n_groups(&self) -> usize {
        self.densities.len()
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// `d[g][i]`, each group row summing to one.
    pub fn densities(&self) -> &[Vec<f64>] {
        &self.densities
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn effort_unit(&self) -> f64 {
        self.effort_unit
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn group_weights(&self) -> &[f64] {
        &self.group_weights
    }

    pub fn reward_weights(&self) -> &[f64] {
        &self.reward_weights
    }

    pub fn priority(&self) -> &[usize] {
        &self.priority
    }

    /// Effort levels expressed as integer multiples of the effort unit.
    pub fn level_units(&self) -> Vec<usize> {
        self.levels
            .iter()
            .map(|psi| (psi / self.effort_unit).round() as usize)
            .collect()
    }

    /// Budget expressed in effort units, rounded down.
    pub fn budget_units(&self) -> usize {
        (self.budget / self.effort_unit + GRID_TOLERANCE).floor() as usize
    }

    fn pair_count(&self) -> f64 {
        let g = self.n_groups() as f64;
        g * (g - 1.0) / 2.0
    }

    /// Iterates `(higher, lower)` priority pairs of group indices.
    fn ranked_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let p = &self.priority;
        (0..p.len()).flat_map(move |a| ((a + 1)..p.len()).map(move |b| (p[a], p[b])))
    }
}

/// Normalizes raw counts `η[g][i]` to densities `η[g][i] / η_g`.
pub fn normalize_counts(counts: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    counts
        .into_iter()
        .enumerate()
        .map(|(g, row)| {
            if row.iter().any(|c| !c.is_finite() || *c < 0.0) {
                return Err(Error::InvalidInstance(format!(
                    "counts for group {} must be finite and non-negative",
                    g + 1
                )));
            }
            let total: f64 = row.iter().sum();
            if total <= 0.0 {
                return Err(Error::InvalidInstance(format!(
                    "group {} has no individuals at any location",
                    g + 1
                )));
            }
            Ok(row.into_iter().map(|c| c / total).collect())
        })
        .collect()
}

/// One effort level per location, stored as indices into the effort grid.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EffortVector(Vec<usize>);

impl EffortVector {
    pub fn new(levels: Vec<usize>) -> Self {
        Self(levels)
    }

    /// The all-zero effort vector.
    pub fn idle(n_locations: usize) -> Self {
        Self(vec![0; n_locations])
    }

    pub fn level_indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Effort `ψ_{β_i}` at each location.
    pub fn efforts(&self, instance: &ProblemInstance) -> Vec<f64> {
        self.0.iter().map(|&j| instance.levels()[j]).collect()
    }

    pub fn total_effort(&self, instance: &ProblemInstance) -> f64 {
        self.efforts(instance).iter().sum()
    }

    /// Checks grid membership and the budget constraint.
    pub fn check(&self, instance: &ProblemInstance) -> Result<()> {
        if self.0.len() != instance.n_locations() {
            return Err(Error::Contract(format!(
                "effort vector has {} entries for {} locations",
                self.0.len(),
                instance.n_locations()
            )));
        }
        if let Some(i) = self.0.iter().position(|&j| j >= instance.n_levels()) {
            return Err(Error::Contract(format!(
                "location {i} uses level index {} outside the {}-level grid",
                self.0[i],
                instance.n_levels()
            )));
        }
        let units: usize = {
            let lu = instance.level_units();
            self.0.iter().map(|&j| lu[j]).sum()
        };
        if units > instance.budget_units() {
            return Err(Error::Contract(format!(
                "effort vector spends {} units of a {}-unit budget",
                units,
                instance.budget_units()
            )));
        }
        Ok(())
    }
}

/// Expected benefit `ξ_g` per group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupBenefit(pub Vec<f64>);

impl GroupBenefit {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Per-location rank coefficients
/// `q_i = Σ_{g ≻ h} (α_g d_gi − α_h d_hi) / C(G, 2)`, where `g ≻ h` ranges over
/// pairs in which `g` is the more vulnerable group.
pub fn rank_coefficients(instance: &ProblemInstance) -> Vec<f64> {
    let d = instance.densities();
    let alpha = instance.group_weights();
    let pairs = instance.pair_count();
    (0..instance.n_locations())
        .map(|i| {
            instance
                .ranked_pairs()
                .map(|(g, h)| alpha[g] * d[g][i] - alpha[h] * d[h][i])
                .sum::<f64>()
                / pairs
        })
        .collect()
}

/// `Γ_i(ε) = λ c_i + (1 − λ)(1 − ε) q_i`.
pub fn gamma(instance: &ProblemInstance, q: &[f64], epsilon: f64) -> Vec<f64> {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    let lambda = instance.lambda();
    let rank_scale = (1.0 - lambda) * (1.0 - epsilon);
    instance
        .reward_weights()
        .iter()
        .zip(q)
        .map(|(c, q)| lambda * c + rank_scale * q)
        .collect()
}

fn realized<'a>(beta: &'a EffortVector, mu: &'a RewardModel) -> impl Iterator<Item = f64> + 'a {
    beta.level_indices()
        .iter()
        .enumerate()
        .map(move |(i, &j)| mu.mean(i, j))
}

/// `ξ_g(β) = Σ_i d_gi μ_i(β_i)`.
pub fn group_benefit(
    beta: &EffortVector,
    mu: &RewardModel,
    instance: &ProblemInstance,
) -> GroupBenefit {
    let rewards: Vec<f64> = realized(beta, mu).collect();
    GroupBenefit(
        instance
            .densities()
            .iter()
            .map(|row| row.iter().zip(&rewards).map(|(d, m)| d * m).sum())
            .collect(),
    )
}

/// Prioritization computed pairwise over group benefits:
/// `Σ_{g ≻ h} (α_g ξ_g − α_h ξ_h) / C(G, 2)`.
pub fn prioritization_pairwise(benefits: &GroupBenefit, instance: &ProblemInstance) -> f64 {
    let xi = benefits.values();
    let alpha = instance.group_weights();
    instance
        .ranked_pairs()
        .map(|(g, h)| alpha[g] * xi[g] - alpha[h] * xi[h])
        .sum::<f64>()
        / instance.pair_count()
}

/// Prioritization computed per location: `Σ_i μ_i(β_i) q_i`.
pub fn prioritization_linear(beta: &EffortVector, mu: &RewardModel, q: &[f64]) -> f64 {
    realized(beta, mu).zip(q).map(|(m, q)| m * q).sum()
}

/// Ranked prioritization `P(β)` of an effort vector.
pub fn prioritization_metric(
    beta: &EffortVector,
    mu: &RewardModel,
    instance: &ProblemInstance,
) -> f64 {
    let pairwise = prioritization_pairwise(&group_benefit(beta, mu, instance), instance);
    debug_assert!({
        let linear = prioritization_linear(beta, mu, &rank_coefficients(instance));
        (pairwise - linear).abs() < 1e-9
    });
    pairwise
}

/// Weighted reward `Σ_i c_i μ_i(β_i)`.
pub fn reward_component(beta: &EffortVector, mu: &RewardModel, instance: &ProblemInstance) -> f64 {
    realized(beta, mu)
        .zip(instance.reward_weights())
        .map(|(m, c)| c * m)
        .sum()
}

/// Objective in explicit form, `λ·reward + (1 − λ)(1 − ε)·P`.
pub fn objective_value(
    beta: &EffortVector,
    mu: &RewardModel,
    instance: &ProblemInstance,
    epsilon: f64,
) -> f64 {
    let lambda = instance.lambda();
    lambda * reward_component(beta, mu, instance)
        + (1.0 - lambda) * (1.0 - epsilon) * prioritization_metric(beta, mu, instance)
}

/// Objective in decomposed form, `Σ_i μ_i(β_i) Γ_i`.
pub fn gamma_objective(beta: &EffortVector, mu: &RewardModel, gamma: &[f64]) -> f64 {
    realized(beta, mu).zip(gamma).map(|(m, g)| m * g).sum()
}

/// Kendall tau between the order induced by `benefits` and the identity rank
/// (group 0 most vulnerable).
pub fn kendall_tau(benefits: &GroupBenefit) -> f64 {
    let order: Vec<usize> = (0..benefits.values().len()).collect();
    kendall_tau_ranked(benefits, &order)
}

/// Kendall tau against an arbitrary vulnerability order. Near-equal benefits
/// count as neither concordant nor discordant.
pub fn kendall_tau_ranked(benefits: &GroupBenefit, priority: &[usize]) -> f64 {
    let xi = benefits.values();
    let g = priority.len();
    debug_assert!(g >= 2);
    let mut score = 0i64;
    for a in 0..g {
        for b in (a + 1)..g {
            let diff = xi[priority[a]] - xi[priority[b]];
            if diff > KENDALL_TIE_TOLERANCE {
                score += 1;
            } else if diff < -KENDALL_TIE_TOLERANCE {
                score -= 1;
            }
        }
    }
    score as f64 / (g * (g - 1) / 2) as f64
}
