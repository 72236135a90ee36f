//! Observation autoencoder, pretrained once and then frozen.
//!
//! The encoder output is the embedding every downstream head (policy, both
//! critics, reward) consumes. Training mixes a small fixed share of task
//! demonstration observations into every batch; the rest comes from a
//! broader dataset of random-policy rollouts over many worlds.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{demo_count, DataError, DemoDataset, Source, Transition};
use crate::env::{Action, EnvConfig, EnvError, WorldState};
use crate::nn::{adam_step, Activation, AdamState, GradBuffer, Mlp, NnError, Tape};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum AeError {
    #[error("autoencoder config: {0}")]
    Config(String),
    #[error("autoencoder training: {0}")]
    Training(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// What the L2 penalty coefficient applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyTarget {
    /// Mean squared magnitude of the reconstructed observation.
    Reconstruction,
    /// Mean squared magnitude of the latent code.
    Latent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AeConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    pub weight_decay: f64,
    pub recon_l2_coeff: f64,
    pub penalty: PenaltyTarget,
    pub task_batch_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Random-policy episodes in the diverse dataset.
    pub diverse_episodes: usize,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            hidden: 64,
            weight_decay: 1e-5,
            recon_l2_coeff: 1e-4,
            penalty: PenaltyTarget::Reconstruction,
            task_batch_fraction: 0.10,
            epochs: 20,
            batch_size: 64,
            lr: 1e-3,
            diverse_episodes: 20,
        }
    }
}

impl AeConfig {
    pub fn validate(&self, obs_len: usize) -> Result<(), AeError> {
        let fail = |m: String| Err(AeError::Config(m));
        if self.latent_dim == 0 || self.latent_dim >= obs_len {
            return fail(format!(
                "latent_dim {} must be in 1..{obs_len}",
                self.latent_dim
            ));
        }
        if self.hidden == 0 || self.batch_size == 0 {
            return fail("hidden and batch_size must be positive".into());
        }
        if self.weight_decay < 0.0 || self.recon_l2_coeff < 0.0 {
            return fail("regularization coefficients must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.task_batch_fraction) {
            return fail("task_batch_fraction must be in [0, 1]".into());
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return fail("lr must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Autoencoder<T> {
    encoder: Mlp<T>,
    decoder: Mlp<T>,
    frozen: bool,
}

impl<T: Scalar> Autoencoder<T> {
    /// Symmetric two-hidden-layer encoder and decoder.
    pub fn new<R: Rng + ?Sized>(obs_len: usize, cfg: &AeConfig, rng: &mut R) -> Result<Self, AeError> {
        cfg.validate(obs_len)?;
        let h = cfg.hidden;
        Ok(Self {
            encoder: Mlp::random(&[obs_len, h, h, cfg.latent_dim], Activation::Relu, rng),
            decoder: Mlp::random(&[cfg.latent_dim, h, h, obs_len], Activation::Relu, rng),
            frozen: false,
        })
    }

    pub fn from_parts(encoder: Mlp<T>, decoder: Mlp<T>, frozen: bool) -> Result<Self, AeError> {
        if encoder.out_dim() != decoder.in_dim() || encoder.in_dim() != decoder.out_dim() {
            return Err(AeError::Config("encoder and decoder shapes disagree".into()));
        }
        Ok(Self {
            encoder,
            decoder,
            frozen,
        })
    }

    pub fn encoder(&self) -> &Mlp<T> {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp<T> {
        &self.decoder
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.out_dim().unwrap_or(0)
    }

    pub fn obs_len(&self) -> usize {
        self.encoder.in_dim().unwrap_or(0)
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// Test hook: re-enables updates on a frozen model.
    pub fn unfreeze(&mut self) {
        self.frozen = false;
    }

    /// Mutable encoder access; refused once frozen.
    pub fn encoder_mut(&mut self) -> Option<&mut Mlp<T>> {
        (!self.frozen).then_some(&mut self.encoder)
    }

    pub fn encode(&self, obs: &[f64]) -> Result<Vec<T>, NnError> {
        let x: Vec<T> = obs.iter().map(|&v| T::lit(v)).collect();
        self.encoder.forward(&x)
    }

    pub fn reconstruct(&self, obs: &[f64]) -> Result<Vec<T>, NnError> {
        self.decoder.forward(&self.encode(obs)?)
    }

    /// Mean over observations of the per-coordinate squared error.
    pub fn reconstruction_mse<'a, I>(&self, observations: I) -> Result<f64, NnError>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut total = 0.0;
        let mut n = 0usize;
        for obs in observations {
            let y = self.reconstruct(obs)?;
            let se: f64 = y.iter().zip(obs).map(|(a, b)| (a.as_f64() - b).powi(2)).sum();
            total += se / obs.len() as f64;
            n += 1;
        }
        Ok(if n == 0 { 0.0 } else { total / n as f64 })
    }
}

/// True iff the encoder parameters of `after` are bit-identical to `before`.
pub fn assert_frozen<T: Scalar>(before: &Autoencoder<T>, after: &Autoencoder<T>) -> bool {
    before.encoder.bits_eq(&after.encoder)
}

/// Uniform-random-policy rollouts, one world seed per episode drawn from
/// `rng`. Stands in for a broad, task-agnostic observation corpus.
pub fn build_diverse_dataset<R: Rng + ?Sized>(
    base: &EnvConfig,
    n_episodes: usize,
    rng: &mut R,
) -> Result<DemoDataset<Transition>, AeError> {
    if n_episodes == 0 {
        return Err(AeError::Config("diverse dataset needs at least one episode".into()));
    }
    let mut episodes = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let cfg = EnvConfig {
            world_seed: rng.gen(),
            ..*base
        };
        let (mut state, mut obs) = WorldState::reset(&cfg)?;
        let mut ep = Vec::new();
        while !state.is_done() {
            let action = Action::ALL[rng.gen_range(0..Action::COUNT)];
            let out = state.step(action)?;
            ep.push(Transition::new(
                obs,
                action,
                out.observation.clone(),
                out.done,
                out.hidden_reward,
                Source::Demo,
            ));
            obs = out.observation;
        }
        episodes.push(ep);
    }
    Ok(DemoDataset::new(episodes)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeReport {
    /// Reconstruction MSE on the weighted training mixture before training.
    pub initial_loss: f64,
    /// The same quantity after each epoch.
    pub epoch_losses: Vec<f64>,
    pub task_per_batch: usize,
}

/// Trains the autoencoder and freezes it.
///
/// Per-sample objective: mean squared reconstruction error plus
/// `recon_l2_coeff` times the mean squared magnitude of the penalized
/// quantity; weight decay is applied by the optimizer. Each batch holds
/// exactly `round(task_batch_fraction * batch_size)` task observations.
pub fn train_autoencoder<T: Scalar, R: Rng + ?Sized>(
    model: &mut Autoencoder<T>,
    task: &DemoDataset<Transition>,
    diverse: &DemoDataset<Transition>,
    cfg: &AeConfig,
    rng: &mut R,
) -> Result<AeReport, AeError> {
    if model.frozen {
        return Err(AeError::Training("model is frozen".into()));
    }
    if task.is_empty() || diverse.is_empty() {
        return Err(AeError::Training("both datasets must be nonempty".into()));
    }
    cfg.validate(model.obs_len())?;
    let task_obs: Vec<&[f64]> = task.iter().map(|t| &*t.obs).collect();
    let diverse_obs: Vec<&[f64]> = diverse.iter().map(|t| &*t.obs).collect();
    let n_task = demo_count(cfg.batch_size, cfg.task_batch_fraction);
    let batches_per_epoch = (task_obs.len() + diverse_obs.len()).div_ceil(cfg.batch_size);

    let mixture_loss = |m: &Autoencoder<T>| -> Result<f64, NnError> {
        let f = cfg.task_batch_fraction;
        Ok(f * m.reconstruction_mse(task_obs.iter().copied())?
            + (1.0 - f) * m.reconstruction_mse(diverse_obs.iter().copied())?)
    };

    let mut trainer = AeTrainer::new(model, cfg);
    let initial_loss = mixture_loss(model)?;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut batch: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    // Own stream so data order does not depend on how the caller's rng was used.
    let mut order_rng = ChaCha8Rng::seed_from_u64(rng.gen());
    for epoch in 0..cfg.epochs {
        for _ in 0..batches_per_epoch {
            batch.clear();
            for _ in 0..n_task {
                batch.push(task_obs.choose(&mut order_rng).expect("nonempty"));
            }
            for _ in n_task..cfg.batch_size {
                batch.push(diverse_obs.choose(&mut order_rng).expect("nonempty"));
            }
            trainer.step(model, &batch)?;
        }
        let loss = mixture_loss(model)?;
        if !loss.is_finite() {
            return Err(AeError::Training(format!("non-finite loss at epoch {epoch}")));
        }
        epoch_losses.push(loss);
    }
    model.freeze();
    Ok(AeReport {
        initial_loss,
        epoch_losses,
        task_per_batch: n_task,
    })
}

struct AeTrainer<T> {
    cfg: AeConfig,
    enc_grads: GradBuffer<T>,
    dec_grads: GradBuffer<T>,
    enc_adam: AdamState<T>,
    dec_adam: AdamState<T>,
    enc_tape: Tape<T>,
    dec_tape: Tape<T>,
}

impl<T: Scalar> AeTrainer<T> {
    fn new(model: &Autoencoder<T>, cfg: &AeConfig) -> Self {
        Self {
            cfg: *cfg,
            enc_grads: GradBuffer::zeros_like(&model.encoder),
            dec_grads: GradBuffer::zeros_like(&model.decoder),
            enc_adam: AdamState::new(&model.encoder),
            dec_adam: AdamState::new(&model.decoder),
            enc_tape: Tape::new(),
            dec_tape: Tape::new(),
        }
    }

    /// Accumulates the batch-mean gradient of the objective and applies one
    /// optimizer step to both halves. Returns the batch objective.
    fn step(&mut self, model: &mut Autoencoder<T>, batch: &[&[f64]]) -> Result<T, NnError> {
        self.enc_grads.fill_zero();
        self.dec_grads.fill_zero();
        let loss = accumulate_gradients(
            model,
            batch,
            &self.cfg,
            &mut self.enc_grads,
            &mut self.dec_grads,
            &mut self.enc_tape,
            &mut self.dec_tape,
        )?;
        let lr = T::lit(self.cfg.lr);
        let wd = T::lit(self.cfg.weight_decay);
        adam_step(&mut model.encoder, &self.enc_grads, &mut self.enc_adam, lr, wd)?;
        adam_step(&mut model.decoder, &self.dec_grads, &mut self.dec_adam, lr, wd)?;
        Ok(loss)
    }
}

/// Batch-mean objective and its gradients with respect to both networks.
pub(crate) fn accumulate_gradients<T: Scalar>(
    model: &Autoencoder<T>,
    batch: &[&[f64]],
    cfg: &AeConfig,
    enc_grads: &mut GradBuffer<T>,
    dec_grads: &mut GradBuffer<T>,
    enc_tape: &mut Tape<T>,
    dec_tape: &mut Tape<T>,
) -> Result<T, NnError> {
    let d = model.obs_len();
    let latent = model.latent_dim();
    let inv_b = T::one() / T::from_usize_lossy(batch.len());
    let inv_d = T::one() / T::from_usize_lossy(d);
    let inv_l = T::one() / T::from_usize_lossy(latent);
    let two = T::lit(2.0);
    let coeff = T::lit(cfg.recon_l2_coeff);
    let mut x = vec![T::zero(); d];
    let mut grad_y = vec![T::zero(); d];
    let mut grad_z = vec![T::zero(); latent];
    let mut total = T::zero();
    for obs in batch {
        for (xi, &o) in x.iter_mut().zip(obs.iter()) {
            *xi = T::lit(o);
        }
        let z = model.encoder.forward_tape(&x, enc_tape)?.to_vec();
        let y = model.decoder.forward_tape(&z, dec_tape)?;
        let mut sample = T::zero();
        for ((g, &yi), &xi) in grad_y.iter_mut().zip(y).zip(&x) {
            let err = yi - xi;
            sample += err * err * inv_d;
            *g = two * err * inv_d * inv_b;
            if cfg.penalty == PenaltyTarget::Reconstruction {
                sample += coeff * yi * yi * inv_d;
                *g += coeff * two * yi * inv_d * inv_b;
            }
        }
        model
            .decoder
            .backward_tape(&z, dec_tape, &grad_y, dec_grads, Some(&mut grad_z))?;
        if cfg.penalty == PenaltyTarget::Latent {
            for (g, &zi) in grad_z.iter_mut().zip(&z) {
                sample += coeff * zi * zi * inv_l;
                *g += coeff * two * zi * inv_l * inv_b;
            }
        }
        model
            .encoder
            .backward_tape(&x, enc_tape, &grad_z, enc_grads, None)?;
        total += sample * inv_b;
    }
    Ok(total)
}

/// Batch-mean objective and its exact gradients `(encoder, decoder)`.
pub fn objective_gradients<T: Scalar>(
    model: &Autoencoder<T>,
    batch: &[&[f64]],
    cfg: &AeConfig,
) -> Result<(T, GradBuffer<T>, GradBuffer<T>), NnError> {
    let mut enc = GradBuffer::zeros_like(&model.encoder);
    let mut dec = GradBuffer::zeros_like(&model.decoder);
    let loss = accumulate_gradients(model, batch, cfg, &mut enc, &mut dec, &mut Tape::new(), &mut Tape::new())?;
    Ok((loss, enc, dec))
}

/// Batch-mean objective without gradients.
pub fn objective<T: Scalar>(model: &Autoencoder<T>, batch: &[&[f64]], cfg: &AeConfig) -> Result<T, NnError> {
    let coeff = T::lit(cfg.recon_l2_coeff);
    let mut total = T::zero();
    for obs in batch {
        let z = model.encode(obs)?;
        let y = model.decoder.forward(&z)?;
        let d = T::from_usize_lossy(obs.len());
        let mut sample: T = y
            .iter()
            .zip(obs.iter())
            .map(|(&a, &b)| (a - T::lit(b)).powi(2))
            .sum::<T>()
            / d;
        match cfg.penalty {
            PenaltyTarget::Reconstruction => {
                sample += coeff * y.iter().map(|&v| v * v).sum::<T>() / d;
            }
            PenaltyTarget::Latent => {
                sample += coeff * z.iter().map(|&v| v * v).sum::<T>() / T::from_usize_lossy(z.len());
            }
        }
        total += sample;
    }
    Ok(total / T::from_usize_lossy(batch.len()))
}
