//! Experiment front door: configuration, artifact formats and the five
//! commands behind the `diprl` binary.

mod checkpoint;
mod config;
mod metrics;

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::agents::{evaluate, evaluate_policy, train_run_with, AgentError, EpisodeRecord};
use crate::autoencoder::{build_diverse_dataset, train_autoencoder, AeError, AeReport, Autoencoder};
use crate::data::{generate_expert_demos, load_demos, save_demos, DataError};
use crate::env::{scripted_expert, EnvError};
use crate::nn::NnError;

pub use checkpoint::{
    load_autoencoder, load_policy, save_autoencoder, save_policy, AeCheckpoint, CheckpointKind, CriticHeads,
    PolicyCheckpoint, RewardHead, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use config::{ExperimentConfig, RunSection, OUTPUT_DIR_VAR};
pub use metrics::{
    compute_summary, export_metrics, load_metrics, read_csv, write_csv, MetricsFormat, MetricsRow, RunSummary,
    METRICS_COLUMNS,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("summary: {0}")]
    Summary(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Autoencoder(#[from] AeError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

pub const DEMOS_FILE: &str = "demos.jsonl";
pub const AE_FILE: &str = "autoencoder.json";
pub const AE_LOSS_FILE: &str = "ae_loss.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const POLICY_FILE: &str = "policy.json";
pub const NOTE_FILE: &str = "note.txt";

fn create_dir(path: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoReport {
    pub path: PathBuf,
    pub logs_per_episode: Vec<usize>,
}

/// Writes `run.n_demos` expert episodes to `<output_dir>/demos.jsonl`.
pub fn cmd_gen_demos(cfg: &ExperimentConfig) -> Result<DemoReport, HarnessError> {
    cfg.validate()?;
    let dir = cfg.output_dir();
    create_dir(&dir)?;
    let demos = generate_expert_demos(&cfg.env, cfg.run.n_demos)?;
    let path = dir.join(DEMOS_FILE);
    save_demos(&demos, &cfg.env, &path)?;
    // Log counts come from the final observation's normalized log channel.
    let logs_per_episode = demos
        .episodes()
        .iter()
        .map(|ep| {
            let last = ep.last().expect("episodes are nonempty");
            let frac = last.next_obs[last.next_obs.len() - 1];
            (frac * cfg.env.max_logs as f64).round() as usize
        })
        .collect();
    Ok(DemoReport { path, logs_per_episode })
}

#[derive(Debug, Clone)]
pub struct AeTrainReport {
    pub checkpoint: PathBuf,
    pub loss_log: PathBuf,
    pub report: AeReport,
}

/// Pretrains the autoencoder on the demonstrations plus a diverse
/// random-rollout dataset, freezes it and writes the checkpoint and the
/// per-epoch loss log.
pub fn cmd_train_ae(cfg: &ExperimentConfig, demos_path: &Path) -> Result<AeTrainReport, HarnessError> {
    cfg.validate()?;
    let (demo_env, demos) = load_demos(demos_path)?;
    if demo_env.observation_len() != cfg.env.observation_len() {
        return Err(HarnessError::Config(format!(
            "{} was generated for observations of length {}, config uses {}",
            demos_path.display(),
            demo_env.observation_len(),
            cfg.env.observation_len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.ae_seed);
    let diverse = build_diverse_dataset(&cfg.env, cfg.ae.diverse_episodes, &mut rng)?;
    let mut model = Autoencoder::<f64>::new(cfg.env.observation_len(), &cfg.ae, &mut rng)?;
    let report = train_autoencoder(&mut model, &demos, &diverse, &cfg.ae, &mut rng)?;

    let dir = cfg.output_dir();
    create_dir(&dir)?;
    let checkpoint = dir.join(AE_FILE);
    save_autoencoder(&AeCheckpoint::new(&model, cfg.ae, cfg.env), &checkpoint)?;
    let loss_log = dir.join(AE_LOSS_FILE);
    let mut text = String::from("epoch,loss\n");
    text.push_str(&format!("0,{}\n", report.initial_loss));
    for (i, loss) in report.epoch_losses.iter().enumerate() {
        text.push_str(&format!("{},{loss}\n", i + 1));
    }
    write_file(&loss_log, &text)?;
    Ok(AeTrainReport {
        checkpoint,
        loss_log,
        report,
    })
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub run_dir: PathBuf,
    pub metrics: PathBuf,
    pub checkpoint: PathBuf,
    pub rows: Vec<MetricsRow>,
    pub env_steps: u64,
    /// Set for runs that produce no training episodes.
    pub note: Option<String>,
}

/// Directory of one (algorithm, seed) run.
pub fn run_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir().join(format!("{}-seed{}", cfg.run.algo, cfg.run.seed))
}

/// Trains `run.algo` with seed `run.seed`, writing the metrics CSV and the
/// final policy checkpoint under [`run_dir`].
pub fn cmd_train(cfg: &ExperimentConfig, ae_path: &Path, demos_path: &Path) -> Result<TrainReport, HarnessError> {
    cfg.validate()?;
    let ae = load_autoencoder(ae_path)?;
    if !ae.frozen {
        return Err(HarnessError::Config(format!("{} is not frozen", ae_path.display())));
    }
    let encoder = ae.model()?;
    let (_, demos) = load_demos(demos_path)?;
    let run = cfg.run_config();
    let mut rows = Vec::new();
    let outcome = train_run_with(&run, &encoder, &demos, |r: &EpisodeRecord| {
        rows.push(MetricsRow::from_record(r, run.algo, run.seed));
    })?;

    let dir = run_dir(cfg);
    create_dir(&dir)?;
    let metrics = dir.join(METRICS_FILE);
    export_metrics(&rows, MetricsFormat::Csv, &metrics)?;
    let checkpoint = dir.join(POLICY_FILE);
    save_policy(
        &PolicyCheckpoint::new(
            run.algo,
            run.seed,
            run.env,
            &outcome.policy,
            outcome.critics.as_ref(),
            outcome.reward_model.as_ref(),
        ),
        &checkpoint,
    )?;
    let note = (!run.algo.is_online()).then(|| {
        format!(
            "{} trained offline on {} demonstration transitions with 0 environment steps; evaluate with `diprl eval`",
            run.algo,
            demos.len()
        )
    });
    if let Some(n) = &note {
        write_file(&dir.join(NOTE_FILE), &format!("{n}\n"))?;
    }
    Ok(TrainReport {
        run_dir: dir,
        metrics,
        checkpoint,
        rows,
        env_steps: outcome.env_steps,
        note,
    })
}

/// Runs `cmd_train` for every seed on its own thread.
pub fn cmd_train_seeds(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    ae_path: &Path,
    demos_path: &Path,
) -> Vec<Result<TrainReport, HarnessError>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let mut c = cfg.clone();
                c.run.seed = seed;
                scope.spawn(move || cmd_train(&c, ae_path, demos_path))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    })
}

/// Greedy rollouts of a saved policy.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    policy_path: &Path,
    ae_path: &Path,
    n_episodes: usize,
) -> Result<RunSummary, HarnessError> {
    let ckpt = load_policy(policy_path)?;
    if ckpt.env != cfg.env {
        return Err(HarnessError::Config(format!(
            "{} was trained on a different environment config",
            policy_path.display()
        )));
    }
    let encoder = load_autoencoder(ae_path)?.model()?;
    let policy = ckpt.policy()?;
    let records = evaluate_policy(&policy, &encoder, &cfg.env, n_episodes)?;
    summarize_records(&records, ckpt.algo.name(), ckpt.seed)
}

/// Rollouts of the scripted expert; a reference point for `cmd_eval`.
pub fn eval_expert(cfg: &ExperimentConfig, n_episodes: usize) -> Result<RunSummary, HarnessError> {
    let records = evaluate(&cfg.env, n_episodes, |state, _| Ok(scripted_expert(state)?))?;
    summarize_records(&records, "expert", 0)
}

fn summarize_records(records: &[EpisodeRecord], algo: &str, seed: u64) -> Result<RunSummary, HarnessError> {
    let rows: Vec<MetricsRow> = records
        .iter()
        .map(|r| MetricsRow {
            env_step: r.env_step,
            episode_index: r.episode_index,
            episode_logs: r.logs,
            episode_length: r.length,
            algo: algo.to_string(),
            seed,
        })
        .collect();
    compute_summary(&rows)
}

/// Summary of a metrics CSV.
pub fn cmd_summarize(metrics_path: &Path) -> Result<RunSummary, HarnessError> {
    let rows = load_metrics(metrics_path)?;
    let mut summary = compute_summary(&rows)?;
    summary.curve = Some(metrics_path.to_path_buf());
    Ok(summary)
}
