use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    bc_update, critic_update, embed_demos, label_batch_rewards, policy_update, polyak_update, AgentError, AlgoKind,
    CriticPair, Embedded, PolicyNetwork, Result, SacConfig, Workspace,
};
use crate::autoencoder::Autoencoder;
use crate::data::{sample_mixed_batch, DemoDataset, ReplayBuffer, Source, Transition};
use crate::env::{Action, EnvConfig, Observation, WorldState};
use crate::reward::{generate_preferences, PreferenceDataset, RewardConfig, RewardModel};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            lr: 1e-3,
            weight_decay: 0.0,
        }
    }
}

/// Everything one training run needs besides the encoder and demos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algo: AlgoKind,
    pub seed: u64,
    pub steps: u64,
    pub env: EnvConfig,
    pub sac: SacConfig,
    pub reward: RewardConfig,
    pub bc: BcConfig,
}

impl RunConfig {
    pub fn new(algo: AlgoKind, seed: u64) -> Self {
        Self {
            algo,
            seed,
            steps: 100_000,
            env: EnvConfig::default(),
            sac: SacConfig::default(),
            reward: RewardConfig::default(),
            bc: BcConfig::default(),
        }
    }
}

/// One finished episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// Total environment steps taken when the episode ended.
    pub env_step: u64,
    pub episode_index: u64,
    pub logs: usize,
    pub length: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub policy: PolicyNetwork<T>,
    pub critics: Option<CriticPair<T>>,
    pub reward_model: Option<RewardModel<T>>,
    pub episodes: Vec<EpisodeRecord>,
    pub env_steps: u64,
    pub reward_rounds: usize,
}

/// Independent random stream `stream` of run `seed`.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const INIT_STREAM: u64 = 1;
const ACT_STREAM: u64 = 2;
const BATCH_STREAM: u64 = 3;
const REWARD_STREAM: u64 = 4;

pub fn train_run<T: Scalar>(
    cfg: &RunConfig,
    encoder: &Autoencoder<T>,
    demos: &DemoDataset<Transition>,
) -> Result<TrainOutcome<T>> {
    train_run_with(cfg, encoder, demos, |_| {})
}

/// Runs one algorithm to completion, calling `on_episode` as each training
/// episode finishes.
pub fn train_run_with<T: Scalar, F: FnMut(&EpisodeRecord)>(
    cfg: &RunConfig,
    encoder: &Autoencoder<T>,
    demos: &DemoDataset<Transition>,
    mut on_episode: F,
) -> Result<TrainOutcome<T>> {
    cfg.sac.validate()?;
    cfg.env.validate()?;
    if !encoder.is_frozen() {
        return Err(AgentError::EncoderNotFrozen);
    }
    if encoder.obs_len() != cfg.env.observation_len() {
        return Err(AgentError::Config(format!(
            "encoder expects observations of length {}, environment emits {}",
            encoder.obs_len(),
            cfg.env.observation_len()
        )));
    }
    if cfg.algo.uses_demos() && demos.is_empty() {
        return Err(AgentError::Config(format!("{} needs demonstrations", cfg.algo)));
    }

    let latent = encoder.latent_dim();
    let mut init_rng = stream_rng(cfg.seed, INIT_STREAM);
    let mut policy = PolicyNetwork::new(latent, cfg.sac.hidden, &mut init_rng);
    let demo_set = if cfg.algo.uses_demos() {
        embed_demos(demos, encoder)?
    } else {
        DemoDataset::new(Vec::new())?
    };

    if cfg.algo == AlgoKind::Bc {
        train_bc(&mut policy, &demo_set, cfg)?;
        return Ok(TrainOutcome {
            policy,
            critics: None,
            reward_model: None,
            episodes: Vec::new(),
            env_steps: 0,
            reward_rounds: 0,
        });
    }

    let mut critics = CriticPair::new(latent, cfg.sac.hidden, &mut init_rng);
    let mut reward_model =
        (cfg.algo == AlgoKind::DipRl).then(|| RewardModel::new(latent, cfg.reward, &mut init_rng));
    let mut preferences = PreferenceDataset::with_cap(cfg.reward.max_pairs);
    let demo_fraction = if cfg.algo == AlgoKind::SacTrue {
        0.0
    } else {
        cfg.sac.demo_fraction
    };

    let mut act_rng = stream_rng(cfg.seed, ACT_STREAM);
    let mut batch_rng = stream_rng(cfg.seed, BATCH_STREAM);
    let mut reward_rng = stream_rng(cfg.seed, REWARD_STREAM);
    let mut buffer: ReplayBuffer<Embedded<T>> = ReplayBuffer::new(cfg.sac.buffer_capacity);
    let mut ws = Workspace::new();
    let tau = T::lit(cfg.sac.polyak);
    let warmup = cfg.sac.warmup_steps as u64;
    let round_interval = cfg.reward.round_interval.max(1) as u64;

    let (mut state, mut obs) = WorldState::reset(&cfg.env)?;
    let mut emb: Arc<[T]> = encoder.encode(&obs)?.into();
    let mut episodes = Vec::new();
    let mut episode_len = 0usize;
    let mut reward_rounds = 0;

    for step in 1..=cfg.steps {
        let action = if step <= warmup {
            Action::ALL[act_rng.gen_range(0..Action::COUNT)]
        } else {
            policy.sample_action(&emb, &mut act_rng)?
        };
        let outcome = state.step(action)?;
        let next_emb: Arc<[T]> = encoder.encode(&outcome.observation)?.into();
        let transition = Transition::new(
            obs,
            action,
            outcome.observation.clone(),
            outcome.done,
            outcome.hidden_reward,
            Source::Agent,
        );
        buffer.push(Embedded {
            transition,
            embedding: emb,
            next_embedding: next_emb.clone(),
        })?;
        episode_len += 1;

        if outcome.done {
            let record = EpisodeRecord {
                env_step: step,
                episode_index: episodes.len() as u64,
                logs: state.logs_collected(),
                length: episode_len,
            };
            on_episode(&record);
            episodes.push(record);
            episode_len = 0;
            let (s, o) = WorldState::reset(&cfg.env)?;
            state = s;
            obs = o;
            emb = encoder.encode(&obs)?.into();
        } else {
            obs = outcome.observation;
            emb = next_emb;
        }

        if step < warmup {
            continue;
        }
        if let Some(model) = reward_model.as_mut() {
            if (step - warmup) % round_interval == 0 {
                let fresh = generate_preferences(
                    &demo_set,
                    &buffer,
                    cfg.reward.pairs_per_round,
                    cfg.reward.segment_len,
                    &mut reward_rng,
                )?;
                preferences.extend(fresh);
                model.train(&preferences, &mut reward_rng)?;
                reward_rounds += 1;
            }
        }
        for _ in 0..cfg.sac.updates_per_env_step {
            let batch = sample_mixed_batch(&buffer, &demo_set, cfg.sac.batch_size, demo_fraction, &mut batch_rng)?;
            let rewards = label_batch_rewards(&batch, cfg.algo, reward_model.as_ref())?;
            let q_loss = critic_update(&mut critics, &batch, &rewards, &policy, &cfg.sac, &mut ws)?;
            ensure_finite("critic loss", step, q_loss)?;
            let pi_loss = policy_update(&mut policy, &critics, &batch, &cfg.sac, &mut ws)?;
            ensure_finite("policy loss", step, pi_loss)?;
            polyak_update(&mut critics, tau);
        }
    }

    Ok(TrainOutcome {
        policy,
        critics: Some(critics),
        reward_model,
        episodes,
        env_steps: cfg.steps,
        reward_rounds,
    })
}

fn ensure_finite<T: Scalar>(what: &'static str, step: u64, value: T) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(AgentError::NonFinite {
            what,
            step,
            value: value.as_f64(),
        })
    }
}

/// Supervised epochs over the demonstrations; never touches the environment.
fn train_bc<T: Scalar>(policy: &mut PolicyNetwork<T>, demos: &DemoDataset<Embedded<T>>, cfg: &RunConfig) -> Result<()> {
    let mut rng = stream_rng(cfg.seed, BATCH_STREAM);
    let mut ws = Workspace::new();
    let items: Vec<&Embedded<T>> = demos.iter().collect();
    let mut order: Vec<usize> = (0..items.len()).collect();
    let lr = T::lit(cfg.bc.lr);
    let wd = T::lit(cfg.bc.weight_decay);
    for epoch in 0..cfg.bc.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.bc.batch_size.max(1)) {
            let batch: Vec<&Embedded<T>> = chunk.iter().map(|&i| items[i]).collect();
            let loss = bc_update(policy, &batch, lr, wd, &mut ws)?;
            ensure_finite("behavioral cloning loss", epoch as u64, loss)?;
        }
    }
    Ok(())
}

/// Rolls out `n_episodes` episodes choosing actions with `act`.
pub fn evaluate<F>(env: &EnvConfig, n_episodes: usize, mut act: F) -> Result<Vec<EpisodeRecord>>
where
    F: FnMut(&WorldState, &Observation) -> Result<Action>,
{
    let mut records = Vec::with_capacity(n_episodes);
    let mut total = 0u64;
    for episode_index in 0..n_episodes as u64 {
        let (mut state, mut obs) = WorldState::reset(env)?;
        let mut length = 0;
        while !state.is_done() {
            let action = act(&state, &obs)?;
            obs = state.step(action)?.observation;
            length += 1;
        }
        total += length as u64;
        records.push(EpisodeRecord {
            env_step: total,
            episode_index,
            logs: state.logs_collected(),
            length,
        });
    }
    Ok(records)
}

/// Greedy (argmax) rollouts of a trained policy.
pub fn evaluate_policy<T: Scalar>(
    policy: &PolicyNetwork<T>,
    encoder: &Autoencoder<T>,
    env: &EnvConfig,
    n_episodes: usize,
) -> Result<Vec<EpisodeRecord>> {
    evaluate(env, n_episodes, |_, obs| Ok(policy.greedy_action(&encoder.encode(obs)?)?))
}
