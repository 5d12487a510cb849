use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use handoff_cli::config::{parse_config, ExperimentConfig};
use handoff_cli::runner;

/// Train and evaluate human/algorithm decision teams from logged bandit
/// feedback.
#[derive(Parser)]
#[command(name = "handoff", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        /// Path to the config file.
        config: PathBuf,
        /// Dotted-path overrides, e.g. `--set run.repetitions=3`.
        #[arg(long = "set", value_name = "KEY.PATH=VALUE")]
        set: Vec<String>,
    },
    /// Generate a dataset snapshot.
    GenData {
        /// `synthetic` or `compliance`.
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 4000)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        d: usize,
        #[arg(long, default_value_t = 6)]
        l: usize,
        #[arg(long, default_value_t = 0.2)]
        label_noise: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output path for the snapshot.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved trained system on a config's test split.
    Eval {
        /// Path to a system JSON written by `run` with save_systems = true.
        system: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Which repetition's split, experts and seed to rebuild.
        #[arg(long, default_value_t = 0)]
        repetition: usize,
        #[arg(long = "set", value_name = "KEY.PATH=VALUE")]
        set: Vec<String>,
    },
    /// Train one policy per baseline value and report the selection
    /// estimates.
    GridLambda {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        repetition: usize,
        #[arg(long = "set", value_name = "KEY.PATH=VALUE")]
        set: Vec<String>,
    },
}

fn load(path: &PathBuf, overrides: &[String]) -> anyhow::Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text, overrides)
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run { config, set } => {
            let config = load(&config, &set)?;
            let paths = runner::run_experiment(&config, true)?;
            for path in paths {
                println!("wrote {}", path.display());
            }
        }
        Command::GenData {
            kind,
            n,
            d,
            l,
            label_noise,
            seed,
            out,
        } => {
            let dataset = match kind.as_str() {
                "synthetic" => {
                    handoff_core::data::make_synthetic_multilabel(n, d, l, label_noise, seed)?
                }
                "compliance" => handoff_core::data::make_compliance_2d(n, seed)?.dataset,
                other => anyhow::bail!("unknown dataset kind {other:?}"),
            };
            let file = fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            handoff_core::data::write_snapshot(&dataset, Some(seed), file)?;
            println!(
                "wrote {} ({} instances, {} features, {} actions)",
                out.display(),
                dataset.len(),
                dataset.feature_dim(),
                dataset.num_actions()
            );
        }
        Command::Eval {
            system,
            config,
            repetition,
            set,
        } => {
            let config = load(&config, &set)?;
            let result = runner::evaluate_saved(&config, &system, repetition)?;
            println!(
                "total {:.3} (raw {:.3}, cost {:.3}); humans {} / algorithm {}; per-expert {:?}",
                result.total_reward,
                result.raw_reward,
                result.total_cost,
                result.human_count(),
                result.algorithm_count,
                result.routed_to_expert
            );
        }
        Command::GridLambda {
            config,
            repetition,
            set,
        } => {
            let config = load(&config, &set)?;
            let report = runner::grid_lambda_report(&config, repetition)?;
            println!("lambda  estimate");
            let mut best = (0.0, f64::NEG_INFINITY);
            for (lambda, estimate) in &report {
                println!("{lambda:<7} {estimate:.6}");
                if *estimate > best.1 + 1e-9 * best.1.abs().max(1.0) {
                    best = (*lambda, *estimate);
                }
            }
            println!("selected lambda = {}", best.0);
        }
    }
    Ok(())
}
