use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use evground_cli::commands;
use evground_cli::config::RunConfig;

/// Synthetic evidence-pool grounding pipeline.
///
/// Every configuration key can be overridden on the command line as
/// `--key=value` (for example `--stage2.steps=500`); overrides win over the
/// `--config` file, which wins over built-in defaults.
#[derive(Parser, Debug)]
#[command(name = "evground", version)]
struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Dotted-key overrides, collected from `--key=value` arguments.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the unlabeled, train and test splits.
    Gen,
    /// Self-supervised pre-training of the temporal encoder.
    Stage1,
    /// Train the proposal head and evidence encoder.
    Stage2,
    /// Build evidence pools for a split from a checkpoint.
    Pool,
    /// Joint grounding training.
    Stage3,
    /// Decode groundings for every query of a split.
    Ground {
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        temperature: Option<f64>,
        /// Also write the serialized instructions.
        #[arg(long)]
        prompts: bool,
    },
    /// Score predictions and export the metric report.
    Eval,
    /// Stage-wise, stability and latent-geometry diagnostics.
    Diagnose,
    /// The whole pipeline, from data generation to evaluation.
    Run,
    /// Print every configuration key with its default.
    Describe,
    /// Print the resolved configuration.
    Config,
}

/// Rewrites `--dotted.key=value` / `--dotted.key value` into `--set key=value`.
fn lift_overrides(args: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut out = Vec::new();
    let mut it = args.into_iter().peekable();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            out.push(arg);
            continue;
        };
        let (key, value) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (body.to_string(), None),
        };
        if !key.contains('.') {
            out.push(arg);
            continue;
        }
        let value = match value {
            Some(v) => v,
            None => it.next().unwrap_or_default(),
        };
        out.push("--set".into());
        out.push(format!("{key}={value}"));
    }
    out
}

fn run(cli: Cli) -> evground_core::Result<()> {
    let mut cfg = RunConfig::resolve(cli.config.as_deref(), &cli.set)?;
    match cli.command {
        Command::Gen => {
            let s = commands::cmd_gen(&cfg)?;
            println!("videos {:?} queries {:?}", s.videos, s.queries);
        }
        Command::Stage1 => {
            let s = commands::cmd_stage1(&cfg)?;
            println!("stage1: {} steps, total loss {:.4} -> {:.4}", s.steps, s.first[2], s.last[2]);
        }
        Command::Stage2 => {
            let s = commands::cmd_stage2(&cfg)?;
            let m = s.held_out;
            println!(
                "stage2: Retrieve@K {:.4} Center-AP {:.4} matched mIoU {:.4}",
                m.retrieve_at_k, m.center_ap, m.matched_miou
            );
        }
        Command::Pool => {
            let s = commands::cmd_pool(&cfg)?;
            println!("{} pools for {} from {}", s.pools, s.split, s.checkpoint);
        }
        Command::Stage3 => {
            let s = commands::cmd_stage3(&cfg)?;
            println!("stage3: {} steps, total loss {:.4} -> {:.4}", s.steps, s.first[0], s.last[0]);
        }
        Command::Ground {
            repeats,
            temperature,
            prompts,
        } => {
            if let Some(r) = repeats {
                cfg.set("ground.repeats", &r.to_string())?;
            }
            if let Some(t) = temperature {
                cfg.set("ground.temperature", &t.to_string())?;
            }
            if prompts {
                cfg.set("ground.prompts", "true")?;
            }
            cfg.validate()?;
            let s = commands::cmd_ground(&cfg)?;
            println!("{} predictions for {} queries of {}", s.predictions, s.queries, s.split);
        }
        Command::Eval | Command::Run => {
            let report = if matches!(cli.command, Command::Run) {
                commands::cmd_pipeline(&cfg)?
            } else {
                commands::cmd_eval(&cfg)?
            };
            for (k, v) in report.scalars() {
                println!("{k:>16} {v:.4}");
            }
        }
        Command::Diagnose => {
            let d = commands::cmd_diagnose(&cfg)?;
            println!(
                "Retrieve@K {:.4} Cited {:.4} Refined {:.4} gap<0.10 {:.4} probe {:.4}",
                d.stages.retrieve_at_k, d.stages.cited, d.stages.refined, d.gap_below_threshold, d.probe_accuracy
            );
        }
        Command::Describe => print!("{}", RunConfig::describe()),
        Command::Config => print!("{}", cfg.echo()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse_from(lift_overrides(std::env::args()));
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lift(args: &[&str]) -> Vec<String> {
        lift_overrides(args.iter().map(|s| s.to_string()))
    }

    #[test]
    fn dotted_flags_become_overrides() {
        assert_eq!(
            lift(&["evground", "run", "--stage2.steps=5", "--run.dir", "x", "--config", "c.cfg"]),
            ["evground", "run", "--set", "stage2.steps=5", "--set", "run.dir=x", "--config", "c.cfg"]
        );
    }

    #[test]
    fn ground_flags_parse() {
        let cli = Cli::parse_from(lift(&["evground", "ground", "--repeats", "2", "--temperature=0.5", "--prompts"]));
        match cli.command {
            Command::Ground {
                repeats,
                temperature,
                prompts,
            } => {
                assert_eq!(repeats, Some(2));
                assert_eq!(temperature, Some(0.5));
                assert!(prompts);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
