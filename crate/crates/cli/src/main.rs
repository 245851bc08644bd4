use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use risk_bandit::environments::{risk_of, ExperimentId, RewardLaw, RiskEnvironment};
use risk_bandit::harness::{self, ExperimentConfig, RunContext};
use risk_bandit::loss::LossModel;
use risk_bandit::risk_oracle::{self, Distribution};
use serde_json::json;

#[derive(Parser)]
#[command(name = "risk-bandit", version, about = "Risk-aware linear contextual bandit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment configuration and write CSV/JSON outputs.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the replication count.
        #[arg(long)]
        reps: Option<usize>,
        /// Override the worker-thread count.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Risk-measure utilities.
    Risk {
        #[command(subcommand)]
        command: RiskCommand,
    },
    /// Environment utilities.
    Env {
        #[command(subcommand)]
        command: EnvCommand,
    },
}

#[derive(Subcommand)]
enum RiskCommand {
    /// Print the risk of a distribution under a loss as JSON.
    Eval {
        /// Loss as JSON, e.g. '{"kind": "expectile", "p": 0.1}'.
        #[arg(long)]
        loss: String,
        /// Distribution as JSON or a preset name (exp1-arm1, exp1-arm2,
        /// exp2-noise1, exp2-noise2, exp3-arm1, exp3-arm2).
        #[arg(long)]
        dist: String,
    },
}

#[derive(Subcommand)]
enum EnvCommand {
    /// Print the true risk and mean of every arm as JSON.
    Describe {
        #[arg(long)]
        experiment: ExperimentId,
    },
}

fn preset_distribution(name: &str) -> Result<Option<Distribution>> {
    let (exp, arm) = match name.split_once('-') {
        Some(parts) => parts,
        None => return Ok(None),
    };
    let id: ExperimentId = match exp.parse() {
        Ok(id) => id,
        Err(_) => return Ok(None),
    };
    let index: usize = arm
        .trim_start_matches("arm")
        .trim_start_matches("noise")
        .parse()
        .with_context(|| format!("bad preset '{name}'"))?;
    let env = RiskEnvironment::preset(id)?;
    let law = env.laws.get(index.wrapping_sub(1)).with_context(|| format!("preset '{name}' has no such arm"))?;
    Ok(Some(match law {
        RewardLaw::LinearPlusNoise(d) | RewardLaw::Direct(d) => d.clone(),
    }))
}

fn risk_eval(loss: &str, dist: &str) -> Result<serde_json::Value> {
    let loss: LossModel = serde_json::from_str(loss).context("parsing --loss")?;
    loss.validate()?;
    let dist = match preset_distribution(dist)? {
        Some(d) => d,
        None => serde_json::from_str(dist).context("parsing --dist")?,
    };
    dist.validate()?;
    let risk = risk_of(&loss, &dist)?;
    let quadrature = risk_oracle::risk_by_quadrature(&loss, &dist)?;
    Ok(json!({
        "loss": loss,
        "distribution": dist,
        "risk": risk,
        "risk_quadrature": quadrature,
        "mean": dist.mean(),
    }))
}

fn env_describe(id: ExperimentId) -> Result<serde_json::Value> {
    let ctx = RunContext::new(ExperimentConfig::preset(id))?;
    let laws: Vec<serde_json::Value> = ctx
        .env
        .laws
        .iter()
        .enumerate()
        .map(|(k, law)| {
            let (kind, d) = match law {
                RewardLaw::LinearPlusNoise(d) => ("linear_plus_noise", d),
                RewardLaw::Direct(d) => ("direct", d),
            };
            json!({
                "arm": k + 1,
                "reward_law": kind,
                "distribution": d,
                "risk": ctx.derived.arm_risks[k],
                "mean": ctx.derived.arm_means[k],
            })
        })
        .collect();
    Ok(json!({
        "experiment": id.name(),
        "kind": ctx.env.kind,
        "stochastic_actions": ctx.env.has_stochastic_actions(),
        "arms": laws,
        "derived": ctx.derived,
    }))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, seed, reps, workers } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let mut cfg = ExperimentConfig::from_json(&text).with_context(|| format!("in {}", config.display()))?;
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Some(r) = reps {
                if r == 0 {
                    bail!("--reps must be at least 1");
                }
                cfg.replications = r;
            }
            if let Some(w) = workers {
                if w == 0 {
                    bail!("--workers must be at least 1");
                }
                cfg.workers = Some(w);
            }
            let (_, _, summary) = harness::run_to_dir(cfg, &out)?;
            for alg in &summary.algorithms {
                println!(
                    "{:<14} median regret {:>12.3}  runtime {:.4} ± {:.4} s",
                    alg.algorithm,
                    alg.final_median(),
                    alg.runtime_mean_s,
                    alg.runtime_std_s
                );
            }
            println!("outputs written to {}", out.display());
        }
        Command::Risk { command: RiskCommand::Eval { loss, dist } } => {
            println!("{}", serde_json::to_string_pretty(&risk_eval(&loss, &dist)?)?);
        }
        Command::Env { command: EnvCommand::Describe { experiment } } => {
            println!("{}", serde_json::to_string_pretty(&env_describe(experiment)?)?);
        }
    }
    Ok(())
}
