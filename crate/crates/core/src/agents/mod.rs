//! Discrete soft actor-critic with twin critics, polyak-averaged targets and
//! four reward sources: the learned preference reward, SQIL stamping, the
//! environment reward, and none (behavioral cloning).

mod train;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autoencoder::Autoencoder;
use crate::data::{DataError, DemoDataset, Experience, Source, Transition};
use crate::env::{Action, EnvError};
use crate::nn::{adam_step, check_len, Activation, AdamState, GradBuffer, Mlp, NnError, Tape};
use crate::reward::{RewardError, RewardInput, RewardModel};
use crate::{log_softmax, Scalar};

pub use train::{
    evaluate, evaluate_policy, train_run, train_run_with, BcConfig, EpisodeRecord, RunConfig, TrainOutcome,
};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("agent config: {0}")]
    Config(String),
    #[error("behavioral cloning batch contains an agent transition")]
    NonDemoTransition,
    #[error("{what} became non-finite at env step {step}: {value}")]
    NonFinite { what: &'static str, step: u64, value: f64 },
    #[error("encoder must be frozen before RL training")]
    EncoderNotFrozen,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

pub type Result<T, E = AgentError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgoKind {
    DipRl,
    Sqil,
    SacTrue,
    Bc,
}

impl AlgoKind {
    pub const ALL: [AlgoKind; 4] = [AlgoKind::DipRl, AlgoKind::Sqil, AlgoKind::SacTrue, AlgoKind::Bc];

    pub fn name(self) -> &'static str {
        match self {
            AlgoKind::DipRl => "dip-rl",
            AlgoKind::Sqil => "sqil",
            AlgoKind::SacTrue => "sac-true",
            AlgoKind::Bc => "bc",
        }
    }

    /// Whether training interacts with the environment.
    pub fn is_online(self) -> bool {
        self != AlgoKind::Bc
    }

    pub fn uses_demos(self) -> bool {
        self != AlgoKind::SacTrue
    }
}

impl fmt::Display for AlgoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgoKind {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| AgentError::Config(format!("unknown algorithm `{s}` (expected dip-rl, sqil, sac-true or bc)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SacConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub polyak: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub demo_fraction: f64,
    pub updates_per_env_step: usize,
    pub warmup_steps: usize,
    pub hidden: usize,
    pub buffer_capacity: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            alpha: 0.05,
            polyak: 0.005,
            lr: 3e-4,
            batch_size: 64,
            demo_fraction: 0.25,
            updates_per_env_step: 1,
            warmup_steps: 1_000,
            hidden: 64,
            buffer_capacity: 100_000,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        let bad = |msg: String| Err(AgentError::Config(msg));
        if !open_unit(self.gamma) {
            return bad(format!("gamma {} outside (0, 1)", self.gamma));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha {} must be positive", self.alpha));
        }
        if !open_unit(self.polyak) {
            return bad(format!("polyak {} outside (0, 1)", self.polyak));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr {} must be positive", self.lr));
        }
        if !(0.0..=1.0).contains(&self.demo_fraction) {
            return bad(format!("demo_fraction {} outside [0, 1]", self.demo_fraction));
        }
        if self.batch_size == 0 || self.hidden == 0 || self.buffer_capacity == 0 {
            return bad("batch_size, hidden and buffer_capacity must be positive".into());
        }
        Ok(())
    }
}

/// A transition with its frozen-encoder embeddings attached.
#[derive(Debug, Clone)]
pub struct Embedded<T> {
    pub transition: Transition,
    pub embedding: Arc<[T]>,
    pub next_embedding: Arc<[T]>,
}

impl<T> Experience for Embedded<T> {
    fn source(&self) -> Source {
        self.transition.source()
    }

    fn done(&self) -> bool {
        self.transition.done
    }
}

impl<T> RewardInput<T> for Embedded<T> {
    fn embedding(&self) -> &[T] {
        &self.embedding
    }

    fn action(&self) -> Action {
        self.transition.action
    }
}

impl<T: Scalar> Embedded<T> {
    pub fn encode(transition: Transition, encoder: &Autoencoder<T>) -> Result<Self, NnError> {
        Ok(Self {
            embedding: encoder.encode(&transition.obs)?.into(),
            next_embedding: encoder.encode(&transition.next_obs)?.into(),
            transition,
        })
    }
}

/// Embeds every demonstration, reusing the successor embedding within an
/// episode.
pub fn embed_demos<T: Scalar>(
    demos: &DemoDataset<Transition>,
    encoder: &Autoencoder<T>,
) -> Result<DemoDataset<Embedded<T>>> {
    let mut episodes = Vec::with_capacity(demos.episodes().len());
    for ep in demos.episodes() {
        let mut out = Vec::with_capacity(ep.len());
        let mut prev_next: Option<Arc<[T]>> = None;
        for t in ep {
            let embedding = match prev_next.take() {
                Some(e) => e,
                None => encoder.encode(&t.obs)?.into(),
            };
            let next_embedding: Arc<[T]> = encoder.encode(&t.next_obs)?.into();
            prev_next = Some(next_embedding.clone());
            out.push(Embedded {
                transition: t.clone(),
                embedding,
                next_embedding,
            });
        }
        episodes.push(out);
    }
    Ok(DemoDataset::new(episodes)?)
}

fn action_head<T: Scalar, R: Rng + ?Sized>(latent_dim: usize, hidden: usize, rng: &mut R) -> Mlp<T> {
    Mlp::random(&[latent_dim, hidden, Action::COUNT], Activation::Relu, rng)
}

fn check_action_head<T: Scalar>(net: &Mlp<T>, what: &str) -> Result<usize, NnError> {
    match (net.in_dim(), net.out_dim()) {
        (Some(d), Some(Action::COUNT)) => Ok(d),
        _ => Err(NnError::InvalidNetwork(format!(
            "{what} must map an embedding to {} outputs",
            Action::COUNT
        ))),
    }
}

/// Policy head: embedding to action logits.
#[derive(Debug, Clone)]
pub struct PolicyNetwork<T> {
    params: Mlp<T>,
    adam: AdamState<T>,
}

impl<T: Scalar> PolicyNetwork<T> {
    pub fn new<R: Rng + ?Sized>(latent_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self::from_params(action_head(latent_dim, hidden, rng)).expect("fresh head is well formed")
    }

    pub fn from_params(params: Mlp<T>) -> Result<Self, NnError> {
        check_action_head(&params, "policy")?;
        Ok(Self {
            adam: AdamState::new(&params),
            params,
        })
    }

    pub fn params(&self) -> &Mlp<T> {
        &self.params
    }

    pub fn latent_dim(&self) -> usize {
        self.params.in_dim().unwrap_or(0)
    }

    pub fn logits(&self, embedding: &[T]) -> Result<Vec<T>, NnError> {
        self.params.forward(embedding)
    }

    pub fn greedy_action(&self, embedding: &[T]) -> Result<Action, NnError> {
        let logits = self.logits(embedding)?;
        Ok(Action::ALL[argmax(&logits)])
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, embedding: &[T], rng: &mut R) -> Result<Action, NnError> {
        let probs = policy_distribution(self, embedding)?;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p.as_f64();
            if u < acc {
                return Ok(Action::ALL[i]);
            }
        }
        Ok(Action::ALL[Action::COUNT - 1])
    }
}

/// First index of the maximum.
fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Twin action-value heads and their slowly-moving targets.
#[derive(Debug, Clone)]
pub struct CriticPair<T> {
    q1: Mlp<T>,
    q2: Mlp<T>,
    target1: Mlp<T>,
    target2: Mlp<T>,
    adam1: AdamState<T>,
    adam2: AdamState<T>,
}

impl<T: Scalar> CriticPair<T> {
    /// Independent online heads; targets start as copies.
    pub fn new<R: Rng + ?Sized>(latent_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let q1 = action_head(latent_dim, hidden, rng);
        let q2 = action_head(latent_dim, hidden, rng);
        Self::from_heads(q1.clone(), q2.clone(), q1, q2).expect("fresh heads are well formed")
    }

    pub fn from_heads(q1: Mlp<T>, q2: Mlp<T>, target1: Mlp<T>, target2: Mlp<T>) -> Result<Self, NnError> {
        let d = check_action_head(&q1, "critic")?;
        for (net, what) in [(&q2, "critic"), (&target1, "target critic"), (&target2, "target critic")] {
            if check_action_head(net, what)? != d {
                return Err(NnError::InvalidNetwork("critic heads disagree on input size".into()));
            }
        }
        if target1.num_params() != q1.num_params() || target2.num_params() != q2.num_params() {
            return Err(NnError::InvalidNetwork("target and online critics differ in shape".into()));
        }
        Ok(Self {
            adam1: AdamState::new(&q1),
            adam2: AdamState::new(&q2),
            q1,
            q2,
            target1,
            target2,
        })
    }

    pub fn online(&self) -> (&Mlp<T>, &Mlp<T>) {
        (&self.q1, &self.q2)
    }

    pub fn targets(&self) -> (&Mlp<T>, &Mlp<T>) {
        (&self.target1, &self.target2)
    }

    pub fn targets_mut(&mut self) -> (&mut Mlp<T>, &mut Mlp<T>) {
        (&mut self.target1, &mut self.target2)
    }

    /// Elementwise minimum of the two online heads.
    pub fn min_q(&self, embedding: &[T]) -> Result<Vec<T>, NnError> {
        min_of(&self.q1, &self.q2, embedding)
    }

    pub fn min_target_q(&self, embedding: &[T]) -> Result<Vec<T>, NnError> {
        min_of(&self.target1, &self.target2, embedding)
    }
}

fn min_of<T: Scalar>(a: &Mlp<T>, b: &Mlp<T>, x: &[T]) -> Result<Vec<T>, NnError> {
    let qa = a.forward(x)?;
    let qb = b.forward(x)?;
    Ok(qa.into_iter().zip(qb).map(|(u, v)| u.min(v)).collect())
}

/// Softmax of the policy logits.
pub fn policy_distribution<T: Scalar>(policy: &PolicyNetwork<T>, embedding: &[T]) -> Result<Vec<T>, NnError> {
    Ok(crate::softmax(&policy.logits(embedding)?))
}

/// `sum_a pi(a|o) (min(Q1, Q2)(o, a) - alpha log pi(a|o))` over the target
/// critics, computed exactly.
pub fn soft_target_value<T: Scalar>(
    critics: &CriticPair<T>,
    policy: &PolicyNetwork<T>,
    embedding: &[T],
    alpha: T,
) -> Result<T, NnError> {
    let log_pi = log_softmax(&policy.logits(embedding)?);
    let q = critics.min_target_q(embedding)?;
    Ok(soft_value(&log_pi, &q, alpha))
}

fn soft_value<T: Scalar>(log_pi: &[T], q: &[T], alpha: T) -> T {
    log_pi
        .iter()
        .zip(q)
        .map(|(&lp, &qa)| {
            let p = lp.exp();
            // 0 * log 0 = 0
            if p == T::zero() {
                T::zero()
            } else {
                p * (qa - alpha * lp)
            }
        })
        .sum()
}

/// Per-transition training rewards for one batch. The learned reward uses a
/// single model snapshot for the whole batch; SQIL depends only on the
/// source tag; only the true-reward baseline reads stored rewards.
pub fn label_batch_rewards<T: Scalar>(
    batch: &[&Embedded<T>],
    algo: AlgoKind,
    reward_model: Option<&RewardModel<T>>,
) -> Result<Vec<T>> {
    match algo {
        AlgoKind::DipRl => {
            let model = reward_model
                .ok_or_else(|| AgentError::Config("learned-reward labeling needs a reward model".into()))?;
            Ok(batch
                .iter()
                .map(|e| model.predict_reward(&e.embedding, e.transition.action))
                .collect::<Result<_, _>>()?)
        }
        AlgoKind::Sqil => Ok(batch
            .iter()
            .map(|e| match e.source() {
                Source::Demo => T::one(),
                Source::Agent => T::zero(),
            })
            .collect()),
        AlgoKind::SacTrue => Ok(batch.iter().map(|e| T::lit(e.transition.hidden_reward())).collect()),
        AlgoKind::Bc => Err(AgentError::Config("behavioral cloning has no reward labels".into())),
    }
}

/// Reusable per-sample activation storage for batched updates.
#[derive(Debug, Default)]
pub struct Workspace<T> {
    tapes: Vec<[Tape<T>; 2]>,
    scratch: Tape<T>,
    scratch2: Tape<T>,
}

impl<T: Scalar> Workspace<T> {
    pub fn new() -> Self {
        Self {
            tapes: Vec::new(),
            scratch: Tape::new(),
            scratch2: Tape::new(),
        }
    }

    fn reserve(&mut self, n: usize) {
        while self.tapes.len() < n {
            self.tapes.push([Tape::new(), Tape::new()]);
        }
    }
}

/// Bootstrap targets `r + gamma (1 - done) V(next)`; constants with respect
/// to every parameter.
fn critic_targets<T: Scalar>(
    critics: &CriticPair<T>,
    policy: &PolicyNetwork<T>,
    batch: &[&Embedded<T>],
    rewards: &[T],
    cfg: &SacConfig,
    ws: &mut Workspace<T>,
) -> Result<Vec<T>, NnError> {
    check_len("reward labels", batch.len(), rewards.len())?;
    let gamma = T::lit(cfg.gamma);
    let alpha = T::lit(cfg.alpha);
    let mut out = Vec::with_capacity(batch.len());
    for (e, &r) in batch.iter().zip(rewards) {
        if e.done() {
            out.push(r);
            continue;
        }
        let next = &e.next_embedding;
        let log_pi = log_softmax(policy.params.forward_tape(next, &mut ws.scratch)?);
        let t1 = critics.target1.forward_tape(next, &mut ws.scratch)?.to_vec();
        let t2 = critics.target2.forward_tape(next, &mut ws.scratch2)?;
        let q: Vec<T> = t1.iter().zip(t2).map(|(&a, &b)| a.min(b)).collect();
        out.push(r + gamma * soft_value(&log_pi, &q, alpha));
    }
    Ok(out)
}

/// Mean over the batch and both heads of `(Q(o, a) - target)^2`.
pub fn critic_loss<T: Scalar>(
    critics: &CriticPair<T>,
    batch: &[&Embedded<T>],
    rewards: &[T],
    policy: &PolicyNetwork<T>,
    cfg: &SacConfig,
) -> Result<T, NnError> {
    let mut ws = Workspace::new();
    let targets = critic_targets(critics, policy, batch, rewards, cfg, &mut ws)?;
    critic_pass(critics, batch, &targets, None, &mut ws)
}

fn critic_pass<T: Scalar>(
    critics: &CriticPair<T>,
    batch: &[&Embedded<T>],
    targets: &[T],
    mut grads: Option<(&mut GradBuffer<T>, &mut GradBuffer<T>)>,
    ws: &mut Workspace<T>,
) -> Result<T, NnError> {
    let n = T::from_usize_lossy(batch.len().max(1));
    ws.reserve(batch.len());
    let mut upstream = [T::zero(); Action::COUNT];
    let mut total = T::zero();
    for ((e, &y), tapes) in batch.iter().zip(targets).zip(ws.tapes.iter_mut()) {
        let a = e.transition.action.index();
        for (head, (net, tape)) in [&critics.q1, &critics.q2].into_iter().zip(tapes.iter_mut()).enumerate() {
            let diff = net.forward_tape(&e.embedding, tape)?[a] - y;
            total += diff * diff;
            if let Some((g1, g2)) = grads.as_mut() {
                upstream.fill(T::zero());
                upstream[a] = diff / n;
                let g = if head == 0 { &mut **g1 } else { &mut **g2 };
                net.backward_tape(&e.embedding, tape, &upstream, g, None)?;
            }
        }
    }
    Ok(total / (n + n))
}

/// One Adam step on both online critics. Returns the pre-update loss.
pub fn critic_update<T: Scalar>(
    critics: &mut CriticPair<T>,
    batch: &[&Embedded<T>],
    rewards: &[T],
    policy: &PolicyNetwork<T>,
    cfg: &SacConfig,
    ws: &mut Workspace<T>,
) -> Result<T, NnError> {
    let targets = critic_targets(critics, policy, batch, rewards, cfg, ws)?;
    let mut g1 = GradBuffer::zeros_like(&critics.q1);
    let mut g2 = GradBuffer::zeros_like(&critics.q2);
    let loss = critic_pass(critics, batch, &targets, Some((&mut g1, &mut g2)), ws)?;
    let lr = T::lit(cfg.lr);
    adam_step(&mut critics.q1, &g1, &mut critics.adam1, lr, T::zero())?;
    adam_step(&mut critics.q2, &g2, &mut critics.adam2, lr, T::zero())?;
    Ok(loss)
}

/// Mean over the batch of `sum_a pi(a|o) (alpha log pi(a|o) - min(Q1, Q2)(o, a))`.
pub fn policy_loss<T: Scalar>(
    policy: &PolicyNetwork<T>,
    critics: &CriticPair<T>,
    batch: &[&Embedded<T>],
    alpha: T,
) -> Result<T, NnError> {
    policy_pass(policy, critics, batch, alpha, None, &mut Workspace::new())
}

fn policy_pass<T: Scalar>(
    policy: &PolicyNetwork<T>,
    critics: &CriticPair<T>,
    batch: &[&Embedded<T>],
    alpha: T,
    mut grads: Option<&mut GradBuffer<T>>,
    ws: &mut Workspace<T>,
) -> Result<T, NnError> {
    let n = T::from_usize_lossy(batch.len().max(1));
    ws.reserve(batch.len());
    let mut total = T::zero();
    let mut upstream = [T::zero(); Action::COUNT];
    for (e, tapes) in batch.iter().zip(ws.tapes.iter_mut()) {
        let q1 = critics.q1.forward_tape(&e.embedding, &mut ws.scratch)?.to_vec();
        let q2 = critics.q2.forward_tape(&e.embedding, &mut ws.scratch2)?;
        let tape = &mut tapes[0];
        let log_pi = log_softmax(policy.params.forward_tape(&e.embedding, tape)?);
        // g_a = alpha log pi_a - min Q_a; the loss is sum_a pi_a g_a.
        let mut g = [T::zero(); Action::COUNT];
        for (((ga, &lp), &a), &b) in g.iter_mut().zip(&log_pi).zip(&q1).zip(q2) {
            *ga = alpha * lp - a.min(b);
        }
        let pi: Vec<T> = log_pi.iter().map(|lp| lp.exp()).collect();
        let expected: T = pi.iter().zip(&g).map(|(&p, &ga)| p * ga).sum();
        total += expected;
        if let Some(grad) = grads.as_deref_mut() {
            for ((u, &p), &ga) in upstream.iter_mut().zip(&pi).zip(&g) {
                *u = p * (ga - expected) / n;
            }
            policy.params.backward_tape(&e.embedding, tape, &upstream, grad, None)?;
        }
    }
    Ok(total / n)
}

/// One Adam step on the policy against the current online critics.
pub fn policy_update<T: Scalar>(
    policy: &mut PolicyNetwork<T>,
    critics: &CriticPair<T>,
    batch: &[&Embedded<T>],
    cfg: &SacConfig,
    ws: &mut Workspace<T>,
) -> Result<T, NnError> {
    let mut g = GradBuffer::zeros_like(&policy.params);
    let loss = policy_pass(policy, critics, batch, T::lit(cfg.alpha), Some(&mut g), ws)?;
    adam_step(&mut policy.params, &g, &mut policy.adam, T::lit(cfg.lr), T::zero())?;
    Ok(loss)
}

/// `target <- (1 - tau) target + tau online` for both heads.
pub fn polyak_update<T: Scalar>(critics: &mut CriticPair<T>, tau: T) {
    critics.target1.blend_toward(&critics.q1, tau);
    critics.target2.blend_toward(&critics.q2, tau);
}

/// Mean cross-entropy `-log pi(a_demo | o_demo)` over a demo-only batch.
pub fn bc_loss<T: Scalar>(policy: &PolicyNetwork<T>, batch: &[&Embedded<T>]) -> Result<T> {
    bc_pass(policy, batch, None, &mut Workspace::new())
}

fn bc_pass<T: Scalar>(
    policy: &PolicyNetwork<T>,
    batch: &[&Embedded<T>],
    mut grads: Option<&mut GradBuffer<T>>,
    ws: &mut Workspace<T>,
) -> Result<T> {
    if batch.iter().any(|e| e.source() != Source::Demo) {
        return Err(AgentError::NonDemoTransition);
    }
    let n = T::from_usize_lossy(batch.len().max(1));
    ws.reserve(batch.len());
    let mut total = T::zero();
    let mut upstream = [T::zero(); Action::COUNT];
    for (e, tapes) in batch.iter().zip(ws.tapes.iter_mut()) {
        let tape = &mut tapes[0];
        let a = e.transition.action.index();
        let log_pi = log_softmax(policy.params.forward_tape(&e.embedding, tape)?);
        total -= log_pi[a];
        if let Some(grad) = grads.as_deref_mut() {
            for (i, (u, lp)) in upstream.iter_mut().zip(&log_pi).enumerate() {
                let onehot = if i == a { T::one() } else { T::zero() };
                *u = (lp.exp() - onehot) / n;
            }
            policy.params.backward_tape(&e.embedding, tape, &upstream, grad, None)?;
        }
    }
    Ok(total / n)
}

/// One Adam step of behavioral cloning.
pub fn bc_update<T: Scalar>(
    policy: &mut PolicyNetwork<T>,
    batch: &[&Embedded<T>],
    lr: T,
    weight_decay: T,
    ws: &mut Workspace<T>,
) -> Result<T> {
    let mut g = GradBuffer::zeros_like(&policy.params);
    let loss = bc_pass(policy, batch, Some(&mut g), ws)?;
    adam_step(&mut policy.params, &g, &mut policy.adam, lr, weight_decay)?;
    Ok(loss)
}

/// Gradients of the three objectives, for finite-difference checks.
#[doc(hidden)]
pub mod grad {
    use super::*;

    /// `(d critic_loss / d q1, d critic_loss / d q2)`.
    pub fn critic<T: Scalar>(
        critics: &CriticPair<T>,
        batch: &[&Embedded<T>],
        rewards: &[T],
        policy: &PolicyNetwork<T>,
        cfg: &SacConfig,
    ) -> Result<(GradBuffer<T>, GradBuffer<T>), NnError> {
        let mut ws = Workspace::new();
        let targets = critic_targets(critics, policy, batch, rewards, cfg, &mut ws)?;
        let mut g1 = GradBuffer::zeros_like(&critics.q1);
        let mut g2 = GradBuffer::zeros_like(&critics.q2);
        critic_pass(critics, batch, &targets, Some((&mut g1, &mut g2)), &mut ws)?;
        Ok((g1, g2))
    }

    pub fn policy<T: Scalar>(
        policy: &PolicyNetwork<T>,
        critics: &CriticPair<T>,
        batch: &[&Embedded<T>],
        alpha: T,
    ) -> Result<GradBuffer<T>, NnError> {
        let mut g = GradBuffer::zeros_like(&policy.params);
        policy_pass(policy, critics, batch, alpha, Some(&mut g), &mut Workspace::new())?;
        Ok(g)
    }

    pub fn bc<T: Scalar>(policy: &PolicyNetwork<T>, batch: &[&Embedded<T>]) -> Result<GradBuffer<T>> {
        let mut g = GradBuffer::zeros_like(&policy.params);
        bc_pass(policy, batch, Some(&mut g), &mut Workspace::new())?;
        Ok(g)
    }
}
