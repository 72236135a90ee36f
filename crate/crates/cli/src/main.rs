use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use diprl::harness::{
    cmd_eval, cmd_gen_demos, cmd_summarize, cmd_train_ae, cmd_train_seeds, eval_expert, run_dir,
    ExperimentConfig, RunSummary, AE_FILE, DEMOS_FILE,
};

/// Reward learning from demonstration-inferred preferences on the chop grid.
///
/// Any config key can be overridden after the subcommand arguments with
/// `--section.key=value` (e.g. `--sac.gamma=0.95`); `--algo`, `--seed`,
/// `--steps`, `--n_demos` and `--output_dir` are shorthands for `run.*`.
#[derive(Debug, Parser)]
#[command(name = "diprl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Plain-text `key = value` config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write scripted-expert demonstrations.
    GenDemos(#[command(flatten)] Common),
    /// Pretrain and freeze the observation autoencoder.
    TrainAe {
        /// Demonstration file (default: <output_dir>/demos.jsonl).
        #[arg(long)]
        demos: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train one algorithm, once per seed.
    Train {
        #[arg(long)]
        demos: Option<PathBuf>,
        /// Autoencoder checkpoint (default: <output_dir>/autoencoder.json).
        #[arg(long)]
        ae: Option<PathBuf>,
        /// Comma-separated seeds, trained on parallel threads.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Greedy rollouts of a trained policy.
    Eval {
        /// Policy checkpoint (default: <output_dir>/<algo>-seed<seed>/policy.json).
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        ae: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        /// Evaluate the scripted expert instead.
        #[arg(long)]
        expert: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Summarize metrics CSV files.
    Summarize {
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
    },
}

const RUN_SHORTHANDS: [&str; 5] = ["algo", "seed", "steps", "n_demos", "output_dir"];

fn is_override(arg: &str) -> bool {
    arg.strip_prefix("--").is_some_and(|flag| {
        let key = flag.split('=').next().unwrap_or("");
        key.contains('.') || RUN_SHORTHANDS.contains(&key)
    })
}

/// Splits config overrides (with their values) out of the raw arguments so
/// clap only sees the subcommand's own flags.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<String>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        if is_override(&arg) {
            let has_value = arg.contains('=');
            overrides.push(arg);
            if !has_value {
                overrides.extend(it.next());
            }
        } else {
            rest.push(arg);
        }
    }
    (rest, overrides)
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = raw.iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            bail!("unexpected argument `{arg}` (overrides look like --key=value)");
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().with_context(|| format!("missing value for --{flag}"))?;
                (flag.to_string(), v.clone())
            }
        };
        let key = if RUN_SHORTHANDS.contains(&key.as_str()) {
            format!("run.{key}")
        } else {
            key
        };
        out.push((key, value));
    }
    Ok(out)
}

fn load_config(common: &Common, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    for (key, value) in parse_overrides(overrides)? {
        cfg.set(&key, &value).with_context(|| format!("override --{key}"))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn or_default(path: Option<PathBuf>, cfg: &ExperimentConfig, name: &str) -> PathBuf {
    path.unwrap_or_else(|| cfg.output_dir().join(name))
}

fn require(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        bail!("{what} not found: {}", path.display());
    }
    Ok(())
}

fn print_summary(label: &str, s: &RunSummary) {
    println!(
        "{label}: episodes={} max_logs={} mean_logs={:.4}",
        s.n_episodes, s.max_logs, s.mean_logs_per_episode
    );
}

fn run(cli: Cli, overrides: &[String]) -> Result<()> {
    match cli.command {
        Command::GenDemos(common) => {
            let cfg = load_config(&common, overrides)?;
            let report = cmd_gen_demos(&cfg)?;
            for (i, logs) in report.logs_per_episode.iter().enumerate() {
                println!("episode {i}: {logs} logs");
            }
            println!("wrote {}", report.path.display());
        }
        Command::TrainAe { demos, common } => {
            let cfg = load_config(&common, overrides)?;
            let demos = or_default(demos, &cfg, DEMOS_FILE);
            require(&demos, "demonstration file")?;
            let out = cmd_train_ae(&cfg, &demos)?;
            println!(
                "loss {:.6} -> {:.6} over {} epochs",
                out.report.initial_loss,
                out.report.epoch_losses.last().copied().unwrap_or(out.report.initial_loss),
                out.report.epoch_losses.len()
            );
            println!("wrote {} and {}", out.checkpoint.display(), out.loss_log.display());
        }
        Command::Train {
            demos,
            ae,
            seeds,
            common,
        } => {
            let cfg = load_config(&common, overrides)?;
            let demos = or_default(demos, &cfg, DEMOS_FILE);
            let ae = or_default(ae, &cfg, AE_FILE);
            require(&demos, "demonstration file")?;
            require(&ae, "autoencoder checkpoint")?;
            let seeds = if seeds.is_empty() { vec![cfg.run.seed] } else { seeds };
            let mut failed = false;
            for (seed, result) in seeds.iter().zip(cmd_train_seeds(&cfg, &seeds, &ae, &demos)) {
                let label = format!("{}-seed{seed}", cfg.run.algo);
                match result {
                    Ok(report) => {
                        match diprl::harness::compute_summary(&report.rows) {
                            Ok(s) => print_summary(&label, &s),
                            Err(_) => println!("{label}: no training episodes"),
                        }
                        if let Some(note) = &report.note {
                            println!("{label}: {note}");
                        }
                        println!("{label}: wrote {}", report.run_dir.display());
                    }
                    Err(e) => {
                        eprintln!("{label}: {e}");
                        failed = true;
                    }
                }
            }
            if failed {
                bail!("one or more runs failed");
            }
        }
        Command::Eval {
            policy,
            ae,
            episodes,
            expert,
            common,
        } => {
            let cfg = load_config(&common, overrides)?;
            if expert {
                print_summary("expert", &eval_expert(&cfg, episodes)?);
            } else {
                let policy = policy.unwrap_or_else(|| run_dir(&cfg).join(diprl::harness::POLICY_FILE));
                let ae = or_default(ae, &cfg, AE_FILE);
                require(&policy, "policy checkpoint")?;
                require(&ae, "autoencoder checkpoint")?;
                print_summary(&policy.display().to_string(), &cmd_eval(&cfg, &policy, &ae, episodes)?);
            }
        }
        Command::Summarize { metrics } => {
            for path in metrics {
                print_summary(&path.display().to_string(), &cmd_summarize(&path)?);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let (args, overrides) = split_overrides(std::env::args().collect());
    match run(Cli::parse_from(args), &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
