//! Budgeted effort allocation with ranked group prioritization, learned online
//! with a combinatorial upper-confidence-bound policy.
//!
//! - [`model`]: problem data, rank coefficients, Γ weights and the objective.
//! - [`oracle`]: exact multiple-choice knapsack solver for per-round actions.
//! - [`policy`]: RankedCUCB and the LIZARD, NaiveRank, Random and Optimal
//!   comparison policies.
//! - [`sim`]: ground-truth reward curves, instance generation and files.
//! - [`harness`]: multi-seed experiments, regret accounting and CSV output.

pub mod error;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod sim;

pub use error::{Error, Result};
pub use harness::{ExperimentConfig, InstanceSource, RunRecord, Seeds, Stream};
pub use model::{EffortVector, GroupBenefit, ProblemInstance};
pub use oracle::{Allocation, OracleWeights};
pub use policy::{ArmStats, PolicyKind, PolicyState};
pub use sim::{GenParams, RewardModel, Scenario};
