//! Exact per-round action selection.
//!
//! Every location must take exactly one effort level and the summed effort must
//! fit the budget: a multiple-choice knapsack. Effort levels live on an integer
//! grid, so a dynamic program over (location, remaining budget units) solves it
//! exactly in `O(N · J · B)`.
//!
//! Ties between equally valued assignments are broken deterministically:
//! smaller total effort first, then the assignment that places more effort at
//! the lowest location index (lexicographically largest level vector).

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::EffortVector;

/// Exhaustive search refuses instances with more assignments than this.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// Objective contribution `w[i][j]` of playing level `j` at location `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleWeights(Vec<Vec<f64>>);

impl OracleWeights {
    pub fn new(weights: Vec<Vec<f64>>) -> Result<Self> {
        if let Some((i, j)) = weights
            .iter()
            .enumerate()
            .find_map(|(i, row)| row.iter().position(|w| !w.is_finite()).map(|j| (i, j)))
        {
            return Err(Error::Config(format!(
                "oracle weight ({i}, {j}) is not finite"
            )));
        }
        Ok(Self(weights))
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn n_locations(&self) -> usize {
        self.0.len()
    }
}

/// Chosen effort vector and its value `Σ_i w[i][β_i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Allocation {
    pub beta: EffortVector,
    pub value: f64,
}

/// Sums selected weights from the last location backwards, matching the
/// association order the dynamic program uses.
pub fn assignment_value(weights: &OracleWeights, levels: &[usize]) -> f64 {
    weights
        .rows()
        .iter()
        .zip(levels)
        .rev()
        .fold(0.0, |acc, (row, &j)| row[j] + acc)
}

fn check_dims(weights: &OracleWeights, level_units: &[usize]) -> Result<()> {
    if level_units.is_empty() {
        return Err(Error::Config("effort grid is empty".into()));
    }
    for (i, row) in weights.rows().iter().enumerate() {
        if row.len() != level_units.len() {
            return Err(Error::Config(format!(
                "location {i} has {} weights for {} effort levels",
                row.len(),
                level_units.len()
            )));
        }
    }
    if level_units.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(
            "effort levels must be strictly ascending".into(),
        ));
    }
    Ok(())
}

#[derive(Clone, Copy)]
struct Cell {
    value: f64,
    effort: usize,
    level: usize,
}

/// `Greater` means `a` is the preferred choice.
fn prefer(a_value: f64, a_effort: usize, b_value: f64, b_effort: usize) -> Ordering {
    a_value
        .partial_cmp(&b_value)
        .unwrap_or(Ordering::Equal)
        .then(b_effort.cmp(&a_effort))
}

/// Solves the allocation exactly by dynamic programming.
///
/// `level_units` are the effort levels in integer units (ascending) and
/// `budget_units` the budget in the same units.
pub fn solve_dp(
    weights: &OracleWeights,
    budget_units: usize,
    level_units: &[usize],
) -> Result<Allocation> {
    check_dims(weights, level_units)?;
    let n = weights.n_locations();
    if level_units[0] * n > budget_units {
        return Err(Error::Config(format!(
            "lowest effort level {} at {n} locations exceeds the budget {budget_units}",
            level_units[0]
        )));
    }
    let width = budget_units + 1;
    // table[i][c]: best completion for locations i.. with c units left
    let mut table = vec![
        Cell {
            value: 0.0,
            effort: 0,
            level: 0,
        };
        (n + 1) * width
    ];
    for i in (0..n).rev() {
        let row = &weights.rows()[i];
        for cap in 0..width {
            let mut best: Option<Cell> = None;
            for (j, &units) in level_units.iter().enumerate() {
                if units > cap {
                    break;
                }
                let tail = table[(i + 1) * width + cap - units];
                let cand = Cell {
                    value: row[j] + tail.value,
                    effort: units + tail.effort,
                    level: j,
                };
                best = match best {
                    None => Some(cand),
                    Some(b) => match prefer(cand.value, cand.effort, b.value, b.effort) {
                        // equal value and effort: the higher level at this
                        // (earlier) location wins
                        Ordering::Greater | Ordering::Equal => Some(cand),
                        Ordering::Less => Some(b),
                    },
                };
            }
            // level 0 always fits when the feasibility check above passed and
            // cap accounts for the remaining locations; otherwise mark unusable
            table[i * width + cap] = best.unwrap_or(Cell {
                value: f64::NEG_INFINITY,
                effort: usize::MAX / 2,
                level: 0,
            });
        }
    }
    let mut levels = Vec::with_capacity(n);
    let mut cap = budget_units;
    for i in 0..n {
        let cell = table[i * width + cap];
        levels.push(cell.level);
        cap -= level_units[cell.level];
    }
    let value = assignment_value(weights, &levels);
    Ok(Allocation {
        beta: EffortVector::new(levels),
        value,
    })
}

/// Solves the allocation by enumerating all `J^N` assignments.
pub fn solve_brute(
    weights: &OracleWeights,
    budget_units: usize,
    level_units: &[usize],
) -> Result<Allocation> {
    check_dims(weights, level_units)?;
    let n = weights.n_locations();
    let j = level_units.len();
    let assignments = (j as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if assignments > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            assignments,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut current = vec![0usize; n];
    let mut best: Option<(Vec<usize>, f64, usize)> = None;
    loop {
        let effort: usize = current.iter().map(|&l| level_units[l]).sum();
        if effort <= budget_units {
            let value = assignment_value(weights, &current);
            let better = match &best {
                None => true,
                Some((levels, v, e)) => match prefer(value, effort, *v, *e) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => current > *levels,
                },
            };
            if better {
                best = Some((current.clone(), value, effort));
            }
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == n {
                return best
                    .map(|(levels, value, _)| Allocation {
                        beta: EffortVector::new(levels),
                        value,
                    })
                    .ok_or_else(|| Error::Config("no assignment fits the budget".into()));
            }
            current[pos] += 1;
            if current[pos] < j {
                break;
            }
            current[pos] = 0;
            pos += 1;
        }
    }
}
