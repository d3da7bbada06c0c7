//! Experiment driver: simulates policies against a known reward model and
//! writes per-round logs, per-run summaries and Pareto points as CSV.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    gamma, gamma_objective, group_benefit, kendall_tau_ranked, prioritization_metric,
    rank_coefficients, reward_component, EffortVector, ProblemInstance,
};
use crate::policy::{optimal_action, PolicyKind, PolicyState};
use crate::sim::{generate_instance, load_instance, sample_observations, GenParams, RewardModel};

/// Policies draw from a stream decorrelated from the environment's.
const POLICY_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// Pareto points average this many trailing rounds.
pub const PARETO_TAIL: usize = 10;

pub const DEFAULT_HALF_LIFE: f64 = 20.0;

/// `0.1, 0.2, …, 1.0`.
pub fn default_lambda_grid() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 10.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceSource {
    Generate(GenParams),
    File(PathBuf),
}

impl InstanceSource {
    /// Resolves the instance; simulation needs the reward section.
    pub fn load(&self) -> Result<(ProblemInstance, RewardModel)> {
        match self {
            InstanceSource::Generate(params) => generate_instance(params),
            InstanceSource::File(path) => {
                let (instance, model) = load_instance(path)?;
                let model = model.ok_or_else(|| Error::Format {
                    path: path.display().to_string(),
                    message: "simulation needs a `reward:` section".into(),
                })?;
                model.check(&instance)?;
                Ok((instance, model))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn to_vec(&self) -> Vec<u64> {
        match self {
            Seeds::Count(k) => (0..*k).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSource,
    pub policies: Vec<PolicyKind>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    /// Falls back to the instance horizon.
    #[serde(default)]
    pub horizon: Option<usize>,
    pub seeds: Seeds,
    #[serde(default = "default_half_life")]
    pub half_life: f64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_parallel")]
    pub parallel: bool,
}

fn default_lambdas() -> Vec<f64> {
    vec![0.8]
}

fn default_half_life() -> f64 {
    DEFAULT_HALF_LIFE
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_parallel() -> bool {
    true
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.policies.is_empty() {
            return Err(Error::Config("policy list is empty".into()));
        }
        if self.seeds.to_vec().is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.lambdas.is_empty() {
            return Err(Error::Config("lambda list is empty".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l > 0.0 && **l <= 1.0)) {
            return Err(Error::Config(format!("lambda {l} outside (0, 1]")));
        }
        if self.half_life.is_nan() || self.half_life <= 0.0 {
            return Err(Error::Config(format!(
                "half-life must be positive, got {}",
                self.half_life
            )));
        }
        if self.horizon == Some(0) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        Ok(())
    }
}

/// One simulated round, evaluated against the true reward model.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub t: usize,
    pub beta: EffortVector,
    /// `Σ_i c_i μ_i(β_i)`.
    pub reward: f64,
    /// `P(β)`.
    pub prioritization: f64,
    /// `λ·reward + (1 − λ)·prioritization`.
    pub objective: f64,
    /// Shortfall against the best action under `Γ(0)`.
    pub regret: f64,
}

/// All rounds of one (policy, λ, seed) run.
#[derive(Clone, Debug, PartialEq)]
pub struct Stream {
    pub policy: PolicyKind,
    pub lambda: f64,
    pub seed: u64,
    pub records: Vec<RunRecord>,
    /// Kendall tau of the group benefits produced by the last action.
    pub final_kendall: f64,
}

impl Stream {
    /// `μ(β*) − (1/T) Σ_t μ(β_t)`.
    pub fn average_regret(&self) -> f64 {
        average_regret(&self.records)
    }

    /// Average regret after each round: `Regret_1, …, Regret_T`.
    pub fn regret_curve(&self) -> Vec<f64> {
        let mut sum = 0.0;
        self.records
            .iter()
            .enumerate()
            .map(|(k, r)| {
                sum += r.regret;
                sum / (k + 1) as f64
            })
            .collect()
    }

    fn tail_mean(&self, field: impl Fn(&RunRecord) -> f64) -> f64 {
        let n = self.records.len().min(PARETO_TAIL);
        let tail = &self.records[self.records.len() - n..];
        tail.iter().map(field).sum::<f64>() / n as f64
    }
}

fn average_regret(records: &[RunRecord]) -> f64 {
    records.iter().map(|r| r.regret).sum::<f64>() / records.len() as f64
}

/// Hindsight benchmark for one λ.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub instance: ProblemInstance,
    pub optimal: EffortVector,
    pub optimal_value: f64,
    gamma0: Vec<f64>,
}

impl Benchmark {
    pub fn new(instance: ProblemInstance, model: &RewardModel) -> Result<Self> {
        let gamma0 = gamma(&instance, &rank_coefficients(&instance), 0.0);
        let optimal = optimal_action(&instance, model)?;
        let optimal_value = gamma_objective(&optimal, model, &gamma0);
        Ok(Self {
            instance,
            optimal,
            optimal_value,
            gamma0,
        })
    }

    pub fn record(&self, t: usize, beta: EffortVector, model: &RewardModel) -> RunRecord {
        let lambda = self.instance.lambda();
        let reward = reward_component(&beta, model, &self.instance);
        let prioritization = prioritization_metric(&beta, model, &self.instance);
        let regret = self.optimal_value - gamma_objective(&beta, model, &self.gamma0);
        RunRecord {
            t,
            beta,
            reward,
            prioritization,
            objective: lambda * reward + (1.0 - lambda) * prioritization,
            regret,
        }
    }
}

/// Simulates one policy for `horizon` rounds.
pub fn simulate(
    kind: PolicyKind,
    bench: &Benchmark,
    model: &RewardModel,
    horizon: usize,
    seed: u64,
) -> Result<Stream> {
    let instance = &bench.instance;
    let mut env = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = PolicyState::new(kind, instance, seed.wrapping_add(POLICY_SEED_OFFSET));
    let truth = (kind == PolicyKind::Optimal).then_some(model);
    let mut records = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let beta = policy.select_action(instance, truth)?;
        let observations = sample_observations(model, &beta, &mut env);
        policy.update(&beta, &observations)?;
        records.push(bench.record(t, beta, model));
    }
    let last = &records[records.len() - 1].beta;
    let final_kendall =
        kendall_tau_ranked(&group_benefit(last, model, instance), instance.priority());
    Ok(Stream {
        policy: kind,
        lambda: instance.lambda(),
        seed,
        records,
        final_kendall,
    })
}

/// Runs every (policy, λ, seed) combination. Streams come back ordered by
/// λ, then policy (config order), then seed, regardless of parallelism.
pub fn run(
    config: &ExperimentConfig,
    instance: &ProblemInstance,
    model: &RewardModel,
) -> Result<Vec<Stream>> {
    config.validate()?;
    let horizon = config.horizon.unwrap_or(instance.horizon());
    let benches = config
        .lambdas
        .iter()
        .map(|&l| {
            Benchmark::new(
                instance.clone().with_lambda(l)?.with_horizon(horizon)?,
                model,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let seeds = config.seeds.to_vec();
    let tasks: Vec<(&Benchmark, PolicyKind, u64)> = benches
        .iter()
        .flat_map(|b| {
            let seeds = &seeds;
            config
                .policies
                .iter()
                .flat_map(move |&p| seeds.iter().map(move |&s| (b, p, s)))
        })
        .collect();
    let job = |&(bench, kind, seed): &(&Benchmark, PolicyKind, u64)| {
        simulate(kind, bench, model, horizon, seed)
    };
    if config.parallel {
        tasks.par_iter().map(job).collect()
    } else {
        tasks.iter().map(job).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParetoRow {
    pub policy: PolicyKind,
    pub lambda: f64,
    pub reward: f64,
    pub prioritization: f64,
}

/// One row per (policy, λ): final-round reward and prioritization, each the
/// mean over the last [`PARETO_TAIL`] rounds and then over seeds.
pub fn pareto_points(streams: &[Stream]) -> Vec<ParetoRow> {
    let mut rows: Vec<(ParetoRow, usize)> = Vec::new();
    for s in streams {
        let reward = s.tail_mean(|r| r.reward);
        let prio = s.tail_mean(|r| r.prioritization);
        match rows
            .iter_mut()
            .find(|(row, _)| row.policy == s.policy && row.lambda == s.lambda)
        {
            Some((row, n)) => {
                row.reward += reward;
                row.prioritization += prio;
                *n += 1;
            }
            None => rows.push((
                ParetoRow {
                    policy: s.policy,
                    lambda: s.lambda,
                    reward,
                    prioritization: prio,
                },
                1,
            )),
        }
    }
    let mut out: Vec<ParetoRow> = rows
        .into_iter()
        .map(|(mut row, n)| {
            row.reward /= n as f64;
            row.prioritization /= n as f64;
            row
        })
        .collect();
    out.sort_by(|a, b| a.policy.cmp(&b.policy).then(a.lambda.total_cmp(&b.lambda)));
    out
}

/// Runs the configured policies over a λ grid and reduces them to Pareto rows.
pub fn pareto_sweep(
    config: &ExperimentConfig,
    lambdas: &[f64],
    instance: &ProblemInstance,
    model: &RewardModel,
) -> Result<(Vec<Stream>, Vec<ParetoRow>)> {
    if lambdas.is_empty() {
        return Err(Error::Config("lambda grid is empty".into()));
    }
    let sweep = ExperimentConfig {
        lambdas: lambdas.to_vec(),
        ..config.clone()
    };
    let streams = run(&sweep, instance, model)?;
    let rows = pareto_points(&streams);
    Ok((streams, rows))
}

/// Exponential moving average with the given half-life in rounds:
/// `y_0 = x_0`, `y_t = a·x_t + (1 − a)·y_{t−1}`, `a = 1 − 2^{−1/h}`.
pub fn smooth(series: &[f64], half_life: f64) -> Vec<f64> {
    assert!(half_life > 0.0, "half-life must be positive");
    let keep = (-std::f64::consts::LN_2 / half_life).exp();
    let mut out = Vec::with_capacity(series.len());
    let mut acc: Option<f64> = None;
    for &x in series {
        let y = match acc {
            None => x,
            Some(prev) => x + keep * (prev - x),
        };
        acc = Some(y);
        out.push(y);
    }
    out
}

/// Seed-averaged series for one (policy, λ).
#[derive(Clone, Debug, PartialEq)]
pub struct SeedAverage {
    pub policy: PolicyKind,
    pub lambda: f64,
    pub reward: Vec<f64>,
    pub prioritization: Vec<f64>,
    pub objective: Vec<f64>,
    /// Running average regret `Regret_t`.
    pub average_regret: Vec<f64>,
}

/// Averages streams sharing (policy, λ) round by round.
pub fn seed_averages(streams: &[Stream]) -> Vec<SeedAverage> {
    let mut out: Vec<(SeedAverage, usize)> = Vec::new();
    for s in streams {
        let curve = s.regret_curve();
        let idx = match out
            .iter()
            .position(|(a, _)| a.policy == s.policy && a.lambda == s.lambda)
        {
            Some(i) => i,
            None => {
                let zeros = vec![0.0; s.records.len()];
                out.push((
                    SeedAverage {
                        policy: s.policy,
                        lambda: s.lambda,
                        reward: zeros.clone(),
                        prioritization: zeros.clone(),
                        objective: zeros.clone(),
                        average_regret: zeros,
                    },
                    0,
                ));
                out.len() - 1
            }
        };
        let (avg, n) = &mut out[idx];
        for (k, r) in s.records.iter().enumerate() {
            avg.reward[k] += r.reward;
            avg.prioritization[k] += r.prioritization;
            avg.objective[k] += r.objective;
            avg.average_regret[k] += curve[k];
        }
        *n += 1;
    }
    out.into_iter()
        .map(|(mut a, n)| {
            let n = n as f64;
            for v in [
                &mut a.reward,
                &mut a.prioritization,
                &mut a.objective,
                &mut a.average_regret,
            ] {
                v.iter_mut().for_each(|x| *x /= n);
            }
            a
        })
        .collect()
}

#[derive(Serialize)]
struct TimeseriesRow {
    policy: PolicyKind,
    lambda: f64,
    seed: u64,
    t: usize,
    reward: f64,
    prioritization: f64,
    objective: f64,
    regret: f64,
}

#[derive(Serialize)]
struct FinalRow {
    policy: PolicyKind,
    lambda: f64,
    seed: u64,
    #[serde(rename = "regret_T")]
    regret_t: f64,
    kendall_tau: f64,
}

#[derive(Serialize)]
struct SummaryRow {
    policy: PolicyKind,
    lambda: f64,
    t: usize,
    reward: f64,
    prioritization: f64,
    objective: f64,
    average_regret: f64,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// `timeseries.csv`: one row per round of every stream.
pub fn write_timeseries(path: &Path, streams: &[Stream]) -> Result<()> {
    write_rows(
        path,
        streams.iter().flat_map(|s| {
            s.records.iter().map(move |r| TimeseriesRow {
                policy: s.policy,
                lambda: s.lambda,
                seed: s.seed,
                t: r.t,
                reward: r.reward,
                prioritization: r.prioritization,
                objective: r.objective,
                regret: r.regret,
            })
        }),
    )
}

/// `final.csv`: average regret and final Kendall tau per stream.
pub fn write_final(path: &Path, streams: &[Stream]) -> Result<()> {
    write_rows(
        path,
        streams.iter().map(|s| FinalRow {
            policy: s.policy,
            lambda: s.lambda,
            seed: s.seed,
            regret_t: s.average_regret(),
            kendall_tau: s.final_kendall,
        }),
    )
}

pub fn write_pareto(path: &Path, rows: &[ParetoRow]) -> Result<()> {
    write_rows(path, rows)
}

/// `summary.csv`: seed-averaged series, EMA-smoothed with `half_life`.
pub fn write_summary(path: &Path, streams: &[Stream], half_life: f64) -> Result<()> {
    let rows = seed_averages(streams).into_iter().flat_map(|a| {
        let reward = smooth(&a.reward, half_life);
        let prio = smooth(&a.prioritization, half_life);
        let obj = smooth(&a.objective, half_life);
        let regret = smooth(&a.average_regret, half_life);
        (0..reward.len())
            .map(|k| SummaryRow {
                policy: a.policy,
                lambda: a.lambda,
                t: k + 1,
                reward: reward[k],
                prioritization: prio[k],
                objective: obj[k],
                average_regret: regret[k],
            })
            .collect::<Vec<_>>()
    });
    write_rows(path, rows)
}

/// Writes the full output set of a `run` into `dir`.
pub fn write_run_outputs(dir: &Path, streams: &[Stream], half_life: f64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_timeseries(&dir.join("timeseries.csv"), streams)?;
    write_final(&dir.join("final.csv"), streams)?;
    write_pareto(&dir.join("pareto.csv"), &pareto_points(streams))?;
    write_summary(&dir.join("summary.csv"), streams, half_life)?;
    Ok(())
}
