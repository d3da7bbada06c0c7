//! Command-line driver: simulate policies, sweep λ, generate instances.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rankedcucb::harness::{
    default_lambda_grid, pareto_points, pareto_sweep, run, write_final, write_pareto,
    write_run_outputs, write_summary,
};
use rankedcucb::sim::{generate_instance, save_instance};
use rankedcucb::{
    ExperimentConfig, GenParams, InstanceSource, PolicyKind, Scenario, Seeds, Stream,
};

#[derive(Parser)]
#[command(
    name = "rankedcucb",
    version,
    about = "Ranked-prioritization combinatorial bandits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured policies and write CSV outputs.
    Run(RunArgs),
    /// Simulate over λ ∈ {0.1, …, 1.0} and write the Pareto table.
    Sweep(SweepArgs),
    /// Generate a synthetic instance file with its reward curves.
    Gen(GenArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Single λ, replacing the configured list.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Number of seeds, run as 0..k.
    #[arg(long)]
    seeds: Option<u64>,
    /// Comma-separated policy names.
    #[arg(long, value_delimiter = ',')]
    policy: Option<Vec<PolicyKind>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "adversarial")]
    scenario: Scenario,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    locations: Option<usize>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    lipschitz: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Gen(args) => cmd_gen(args),
    }
}

/// Reads a TOML config; a relative instance file resolves against the
/// config's directory.
fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut config: ExperimentConfig =
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let InstanceSource::File(file) = &mut config.instance {
        if file.is_relative() {
            if let Some(dir) = path.parent() {
                *file = dir.join(&*file);
            }
        }
    }
    Ok(config)
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut config = load_config(&args.config)?;
    if let Some(l) = args.lambda {
        config.lambdas = vec![l];
    }
    if let Some(t) = args.horizon {
        config.horizon = Some(t);
    }
    if let Some(k) = args.seeds {
        config.seeds = Seeds::Count(k);
    }
    if let Some(p) = args.policy {
        config.policies = p;
    }
    if let Some(out) = args.out {
        config.out = out;
    }
    config.validate()?;
    let (instance, model) = config.instance.load().context("loading instance")?;
    let streams = run(&config, &instance, &model)?;
    write_run_outputs(&config.out, &streams, config.half_life)
        .with_context(|| format!("writing outputs to {}", config.out.display()))?;
    print_summary(&streams);
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let mut config = load_config(&args.config)?;
    if let Some(out) = args.out {
        config.out = out;
    }
    config.validate()?;
    let (instance, model) = config.instance.load().context("loading instance")?;
    let (streams, rows) = pareto_sweep(&config, &default_lambda_grid(), &instance, &model)?;
    fs::create_dir_all(&config.out)
        .with_context(|| format!("creating {}", config.out.display()))?;
    write_pareto(&config.out.join("pareto.csv"), &rows)?;
    write_final(&config.out.join("final.csv"), &streams)?;
    write_summary(&config.out.join("summary.csv"), &streams, config.half_life)?;
    for row in &rows {
        println!(
            "{:<10} lambda={:.1} reward={:.4} prioritization={:.4}",
            row.policy.name(),
            row.lambda,
            row.reward,
            row.prioritization
        );
    }
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let d = GenParams::default();
    let params = GenParams {
        locations: args.locations.unwrap_or(d.locations),
        groups: args.groups.unwrap_or(d.groups),
        levels: args.levels.unwrap_or(d.levels),
        budget: args.budget.or(d.budget),
        lipschitz: args.lipschitz.unwrap_or(d.lipschitz),
        lambda: args.lambda.unwrap_or(d.lambda),
        horizon: args.horizon.unwrap_or(d.horizon),
        seed: args.seed.unwrap_or(d.seed),
        scenario: args.scenario,
    };
    let (instance, model) = generate_instance(&params)?;
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    save_instance(&instance, Some(&model), &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn print_summary(streams: &[Stream]) {
    let points = pareto_points(streams);
    for p in &points {
        let regrets: Vec<f64> = streams
            .iter()
            .filter(|s| s.policy == p.policy && s.lambda == p.lambda)
            .map(Stream::average_regret)
            .collect();
        let regret = regrets.iter().sum::<f64>() / regrets.len() as f64;
        let objective = p.lambda * p.reward + (1.0 - p.lambda) * p.prioritization;
        println!(
            "{:<10} lambda={:.2} objective={:.4} reward={:.4} prioritization={:.4} regret={:.4}",
            p.policy.name(),
            p.lambda,
            objective,
            p.reward,
            p.prioritization,
            regret
        );
    }
}
