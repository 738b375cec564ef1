use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use parlsvi::agents::{rf_plan, rfmg_plan, DatasetKind, PlanningParams, TrajectoryDataset};
use parlsvi::envs::{RewardTable, Spec};
use parlsvi::harness::{fit_speedup_slope, run_experiment, ExperimentConfig, SweepSummary};
use parlsvi::oracle::{subopt_mdp, subopt_mg, PolicyFile};
use parlsvi::{Error, Result};

/// Parallel optimistic LSVI simulator.
#[derive(Parser)]
#[command(name = "simulate", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment sweep.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Reuse `run-<hash>` instead of creating a timestamped directory.
        #[arg(long)]
        overwrite: bool,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a spec file against the linear-model constraints.
    Validate {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Plan for a reward from a saved exploration dataset.
    Plan {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        reward: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Bonus scale, overriding the one recorded in the dataset.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Exact suboptimality of a policy (or duality gap of a policy pair).
    Certify {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        reward: PathBuf,
    },
    /// Log-log slope of a summary metric against K·P.
    Slope {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        metric: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(command: Command) -> Result<u8> {
    match command {
        Command::Run {
            config,
            overwrite,
            threads,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if threads.is_some() {
                cfg.threads = threads;
            }
            let summary = run_experiment(&cfg, overwrite)?;
            println!("{}", summary.run_dir.display());
            for p in &summary.points {
                println!(
                    "K={} P={} beta={:.6} {}: mean={:.6e} stderr={:.3e} doublings={:.1}",
                    p.point.episodes, p.point.agents, p.beta_value, summary.metric, p.mean, p.stderr, p.doubling_total_mean
                );
            }
            Ok(0)
        }
        Command::Validate { spec } => {
            let spec = Spec::load(&spec)?;
            let report = spec.validate();
            if report.is_valid() {
                println!("valid ({})", spec.content_hash());
                Ok(0)
            } else {
                for v in &report.violations {
                    println!("{v}");
                }
                Ok(2)
            }
        }
        Command::Plan {
            dataset,
            reward,
            out,
            beta,
            lambda,
        } => {
            let ds = TrajectoryDataset::load(&dataset)?;
            let reward = RewardTable::load(&reward)?;
            let features = ds
                .features
                .clone()
                .ok_or_else(|| Error::Config("dataset carries no feature table".into()))?;
            let recorded = ds.planning;
            let params = PlanningParams {
                beta: beta
                    .or(recorded.map(|p| p.beta))
                    .ok_or_else(|| Error::Config("no beta recorded in the dataset; pass --beta".into()))?,
                lambda: lambda.or(recorded.map(|p| p.lambda)).unwrap_or(1.0),
            };
            let policy = match ds.kind() {
                DatasetKind::Mdp => PolicyFile::Deterministic(rf_plan(&ds, &features, &reward, &params)?),
                DatasetKind::Mg => PolicyFile::Pair(rfmg_plan(&ds, &features, &reward, &params)?),
            };
            policy.save(&out)?;
            Ok(0)
        }
        Command::Certify { spec, policy, reward } => {
            let spec = Spec::load(&spec)?;
            let policy = PolicyFile::load(&policy)?;
            let reward = RewardTable::load(&reward)?;
            let gap = match (&spec, &policy) {
                (Spec::Mdp(m), PolicyFile::Deterministic(p)) => subopt_mdp(m, p, &reward)?,
                (Spec::Mdp(m), PolicyFile::Mixed(p)) => subopt_mdp(m, p, &reward)?,
                (Spec::Mg(g), PolicyFile::Pair(p)) => subopt_mg(g, p, &reward)?,
                _ => return Err(Error::Config("policy kind does not match the environment kind".into())),
            };
            println!("{}", serde_json::json!({ "subopt": gap }));
            Ok(0)
        }
        Command::Slope { summary, metric } => {
            let summary = SweepSummary::load(&summary)?;
            let fit = fit_speedup_slope(&summary, &metric)?;
            println!("{}", serde_json::to_string(&fit).expect("fit serialization is infallible"));
            Ok(0)
        }
    }
}
