//! Learned reward from automatically labeled segment comparisons.
//!
//! Every comparison pairs a demonstration segment (preferred) with an agent
//! segment (dispreferred). The probability of a preference is the logistic
//! function of the difference in summed predicted rewards, and the model is
//! fit by minimizing the mean negative log-likelihood plus an L2 penalty on
//! per-step predicted rewards. Weight decay is applied by the optimizer.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autoencoder::Autoencoder;
use crate::data::{DataError, DemoDataset, Experience, ReplayBuffer, SegmentSource, Source, TrajectorySegment, Transition};
use crate::env::Action;
use crate::nn::{adam_step, check_len, Activation, AdamState, GradBuffer, Mlp, NnError, Tape};
use crate::{log_sigmoid, sigmoid, Scalar};

#[derive(Debug, Error)]
pub enum RewardError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("reward training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    NonFinite { epoch: usize, batch: usize, loss: f64 },
    #[error("preference dataset is empty")]
    EmptyDataset,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub hidden: usize,
    pub weight_decay: f64,
    pub output_l2_coeff: f64,
    pub lr: f64,
    pub epochs_per_round: usize,
    /// Pairs per optimizer step.
    pub batch_size: usize,
    /// Segment length `k`.
    pub segment_len: usize,
    /// Environment steps between preference rounds.
    pub round_interval: usize,
    pub pairs_per_round: usize,
    /// FIFO cap on the accumulated preference dataset.
    pub max_pairs: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            weight_decay: 1e-4,
            output_l2_coeff: 1e-3,
            lr: 3e-4,
            epochs_per_round: 5,
            batch_size: 32,
            segment_len: 16,
            round_interval: 2_000,
            pairs_per_round: 200,
            max_pairs: 10_000,
        }
    }
}

/// One step as seen by the reward head: an embedding and the action taken.
pub trait RewardInput<T> {
    fn embedding(&self) -> &[T];
    fn action(&self) -> Action;
}

/// Precomputed `(embedding, action)` step.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedStep<T> {
    pub embedding: Arc<[T]>,
    pub action: Action,
}

impl<T> RewardInput<T> for EmbeddedStep<T> {
    fn embedding(&self) -> &[T] {
        &self.embedding
    }

    fn action(&self) -> Action {
        self.action
    }
}

/// Encodes every observation of a raw segment.
pub fn embed_segment<T: Scalar>(
    segment: &TrajectorySegment<Transition>,
    encoder: &Autoencoder<T>,
) -> Result<TrajectorySegment<EmbeddedStep<T>>, NnError> {
    let steps = segment
        .steps
        .iter()
        .map(|t| {
            Ok(EmbeddedStep {
                embedding: encoder.encode(&t.obs)?.into(),
                action: t.action,
            })
        })
        .collect::<Result<_, NnError>>()?;
    Ok(TrajectorySegment {
        steps,
        origin: segment.origin,
        episode: segment.episode,
        offset: segment.offset,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreferencePair<S> {
    pub preferred: TrajectorySegment<S>,
    pub dispreferred: TrajectorySegment<S>,
}

/// Ordered comparisons, optionally capped with FIFO eviction.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceDataset<S> {
    pairs: VecDeque<PreferencePair<S>>,
    cap: Option<usize>,
}

impl<S> Default for PreferenceDataset<S> {
    fn default() -> Self {
        Self {
            pairs: VecDeque::new(),
            cap: None,
        }
    }
}

impl<S> PreferenceDataset<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_cap(cap: usize) -> Self {
        Self {
            pairs: VecDeque::new(),
            cap: Some(cap),
        }
    }

    pub fn from_pairs(pairs: Vec<PreferencePair<S>>) -> Self {
        Self {
            pairs: pairs.into(),
            cap: None,
        }
    }

    pub fn push(&mut self, pair: PreferencePair<S>) {
        self.pairs.push_back(pair);
        if let Some(cap) = self.cap {
            while self.pairs.len() > cap {
                self.pairs.pop_front();
            }
        }
    }

    pub fn extend(&mut self, other: PreferenceDataset<S>) {
        for p in other.pairs {
            self.push(p);
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = &PreferencePair<S>> {
        self.pairs.iter()
    }

    pub fn get(&self, i: usize) -> Option<&PreferencePair<S>> {
        self.pairs.get(i)
    }

    /// Writes one JSON line per pair identifying both segments by source,
    /// episode and offset.
    pub fn write_audit(&self, path: &Path) -> Result<(), RewardError> {
        let io = |source| RewardError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        for (i, p) in self.pairs.iter().enumerate() {
            let seg = |s: &TrajectorySegment<S>| {
                serde_json::json!({
                    "origin": s.origin,
                    "episode": s.episode,
                    "offset": s.offset,
                    "len": s.len(),
                })
            };
            let line = serde_json::json!({
                "pair": i,
                "preferred": seg(&p.preferred),
                "dispreferred": seg(&p.dispreferred),
            });
            writeln!(out, "{line}").map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Auto-labeled comparisons: every preferred segment comes from `demos`,
/// every dispreferred one from the agent's `buffer`.
pub fn generate_preferences<E, R>(
    demos: &DemoDataset<E>,
    buffer: &ReplayBuffer<E>,
    n_pairs: usize,
    k: usize,
    rng: &mut R,
) -> Result<PreferenceDataset<E>, DataError>
where
    E: Experience + Clone,
    R: Rng + ?Sized,
{
    let mut out = PreferenceDataset::new();
    for _ in 0..n_pairs {
        let preferred = demos.sample_segment(k, rng)?;
        let dispreferred = buffer.sample_segment(k, rng)?;
        debug_assert_eq!(preferred.origin, Source::Demo);
        debug_assert_eq!(dispreferred.origin, Source::Agent);
        out.push(PreferencePair {
            preferred,
            dispreferred,
        });
    }
    Ok(out)
}

/// `P(i preferred over j)` from the two segment returns.
pub fn preference_prob_from_returns<T: Scalar>(return_i: T, return_j: T) -> T {
    sigmoid(return_i - return_j)
}

/// Reward head `r(embedding, action)`: an MLP over the embedding
/// concatenated with a one-hot action.
#[derive(Debug, Clone)]
pub struct RewardModel<T> {
    params: Mlp<T>,
    adam: AdamState<T>,
    config: RewardConfig,
    latent_dim: usize,
}

impl<T: Scalar> RewardModel<T> {
    pub fn new<R: Rng + ?Sized>(latent_dim: usize, config: RewardConfig, rng: &mut R) -> Self {
        let params = Mlp::random(
            &[latent_dim + Action::COUNT, config.hidden, 1],
            Activation::Relu,
            rng,
        );
        Self::from_params(params, config).expect("freshly built head has a valid shape")
    }

    pub fn from_params(params: Mlp<T>, config: RewardConfig) -> Result<Self, NnError> {
        let (Some(input), Some(1)) = (params.in_dim(), params.out_dim()) else {
            return Err(NnError::InvalidNetwork(
                "reward head must map embedding + action to one value".into(),
            ));
        };
        if input <= Action::COUNT {
            return Err(NnError::InvalidNetwork("reward head input too small".into()));
        }
        Ok(Self {
            adam: AdamState::new(&params),
            latent_dim: input - Action::COUNT,
            params,
            config,
        })
    }

    pub fn params(&self) -> &Mlp<T> {
        &self.params
    }

    pub fn config(&self) -> &RewardConfig {
        &self.config
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn fill_input(&self, embedding: &[T], action: Action, buf: &mut Vec<T>) -> Result<(), NnError> {
        check_len("reward embedding", self.latent_dim, embedding.len())?;
        buf.clear();
        buf.extend_from_slice(embedding);
        buf.extend((0..Action::COUNT).map(|a| if a == action.index() { T::one() } else { T::zero() }));
        Ok(())
    }

    pub fn predict_reward(&self, embedding: &[T], action: Action) -> Result<T, NnError> {
        let mut x = Vec::with_capacity(self.latent_dim + Action::COUNT);
        self.fill_input(embedding, action, &mut x)?;
        Ok(self.params.forward(&x)?[0])
    }

    /// Sum of per-step predicted rewards.
    pub fn segment_return<S: RewardInput<T>>(&self, segment: &TrajectorySegment<S>) -> Result<T, NnError> {
        segment
            .steps
            .iter()
            .map(|s| self.predict_reward(s.embedding(), s.action()))
            .sum()
    }

    pub fn preference_prob<S: RewardInput<T>>(
        &self,
        tau_i: &TrajectorySegment<S>,
        tau_j: &TrajectorySegment<S>,
    ) -> Result<T, NnError> {
        Ok(preference_prob_from_returns(
            self.segment_return(tau_i)?,
            self.segment_return(tau_j)?,
        ))
    }

    /// Mean negative log-likelihood over pairs plus `output_l2_coeff` times
    /// the mean squared per-step reward over every step in the dataset.
    pub fn reward_loss<S: RewardInput<T>>(&self, dataset: &PreferenceDataset<S>) -> Result<T, RewardError> {
        if dataset.is_empty() {
            return Err(RewardError::EmptyDataset);
        }
        let pairs: Vec<&PreferencePair<S>> = dataset.pairs().collect();
        Ok(self.loss_and_grad(&pairs, None)?)
    }

    /// Fraction of pairs where the preferred segment has the higher return.
    pub fn pairwise_accuracy<S: RewardInput<T>>(&self, dataset: &PreferenceDataset<S>) -> Result<f64, NnError> {
        if dataset.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0usize;
        for p in dataset.pairs() {
            if self.segment_return(&p.preferred)? > self.segment_return(&p.dispreferred)? {
                correct += 1;
            }
        }
        Ok(correct as f64 / dataset.len() as f64)
    }

    /// Loss over `pairs`; accumulates its gradient into `grads` if given.
    fn loss_and_grad<S: RewardInput<T>>(
        &self,
        pairs: &[&PreferencePair<S>],
        mut grads: Option<&mut GradBuffer<T>>,
    ) -> Result<T, NnError> {
        let n_pairs = T::from_usize_lossy(pairs.len());
        let n_steps: usize = pairs
            .iter()
            .map(|p| p.preferred.len() + p.dispreferred.len())
            .sum();
        let n_steps = T::from_usize_lossy(n_steps.max(1));
        let coeff = T::lit(self.config.output_l2_coeff);
        let two = T::lit(2.0);

        let mut x = Vec::with_capacity(self.latent_dim + Action::COUNT);
        let mut tapes: Vec<(Vec<T>, Tape<T>)> = Vec::new();
        let mut nll = T::zero();
        let mut sq = T::zero();
        for pair in pairs {
            let mut returns = [T::zero(); 2];
            let segs = [&pair.preferred, &pair.dispreferred];
            let mut used = 0;
            for (side, seg) in segs.iter().enumerate() {
                for step in &seg.steps {
                    self.fill_input(step.embedding(), step.action(), &mut x)?;
                    if used == tapes.len() {
                        tapes.push((Vec::new(), Tape::new()));
                    }
                    let (input, tape) = &mut tapes[used];
                    input.clone_from(&x);
                    let r = self.params.forward_tape(input, tape)?[0];
                    returns[side] += r;
                    sq += r * r;
                    used += 1;
                }
            }
            let gap = returns[0] - returns[1];
            nll -= log_sigmoid(gap);
            if let Some(g) = grads.as_deref_mut() {
                // d(-ln σ(gap))/d gap = -(1 - σ(gap))
                let d_gap = -(T::one() - sigmoid(gap)) / n_pairs;
                let mut idx = 0;
                for (side, seg) in segs.iter().enumerate() {
                    let d_return = if side == 0 { d_gap } else { -d_gap };
                    for _ in &seg.steps {
                        let (input, tape) = &mut tapes[idx];
                        let r = tape.output()[0];
                        let up = d_return + coeff * two * r / n_steps;
                        self.params.backward_tape(input, tape, &[up], g, None)?;
                        idx += 1;
                    }
                }
            }
        }
        Ok(nll / n_pairs + coeff * sq / n_steps)
    }

    /// `epochs_per_round` shuffled minibatch passes over `dataset`.
    /// Returns the loss on the full dataset after training.
    pub fn train<S: RewardInput<T>, R: Rng + ?Sized>(
        &mut self,
        dataset: &PreferenceDataset<S>,
        rng: &mut R,
    ) -> Result<T, RewardError> {
        if dataset.is_empty() {
            return Err(RewardError::EmptyDataset);
        }
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        let mut grads = GradBuffer::zeros_like(&self.params);
        let lr = T::lit(self.config.lr);
        let wd = T::lit(self.config.weight_decay);
        let bs = self.config.batch_size.max(1);
        for epoch in 0..self.config.epochs_per_round {
            order.shuffle(rng);
            for (batch_idx, chunk) in order.chunks(bs).enumerate() {
                let pairs: Vec<&PreferencePair<S>> =
                    chunk.iter().map(|&i| dataset.get(i).expect("index in range")).collect();
                grads.fill_zero();
                let loss = self.loss_and_grad(&pairs, Some(&mut grads))?;
                if !loss.is_finite() || !grads.all_finite() {
                    return Err(RewardError::NonFinite {
                        epoch,
                        batch: batch_idx,
                        loss: loss.as_f64(),
                    });
                }
                adam_step(&mut self.params, &grads, &mut self.adam, lr, wd)?;
            }
        }
        self.reward_loss(dataset)
    }

    /// Gradient of [`Self::reward_loss`], for finite-difference checks.
    #[doc(hidden)]
    pub fn loss_gradient<S: RewardInput<T>>(&self, dataset: &PreferenceDataset<S>) -> Result<GradBuffer<T>, NnError> {
        let pairs: Vec<&PreferencePair<S>> = dataset.pairs().collect();
        let mut g = GradBuffer::zeros_like(&self.params);
        self.loss_and_grad(&pairs, Some(&mut g))?;
        Ok(g)
    }

    #[cfg(test)]
    pub(crate) fn with_params(&self, params: Mlp<T>) -> Self {
        Self {
            params,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{finite_diff_check, Layer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn step(e: &[f64], a: usize) -> EmbeddedStep<f64> {
        EmbeddedStep {
            embedding: e.to_vec().into(),
            action: Action::ALL[a],
        }
    }

    fn segment(steps: Vec<EmbeddedStep<f64>>, origin: Source) -> TrajectorySegment<EmbeddedStep<f64>> {
        TrajectorySegment {
            steps,
            origin,
            episode: 0,
            offset: 0,
        }
    }

    /// Linear head on a 2-d embedding: r = w . [e, onehot(a)] + b.
    fn linear_model(w: [f64; 7], b: f64, l2: f64) -> RewardModel<f64> {
        let head = Mlp::new(vec![Layer::new(7, 1, Activation::Identity, w.to_vec(), vec![b]).unwrap()]).unwrap();
        RewardModel::from_params(
            head,
            RewardConfig {
                output_l2_coeff: l2,
                ..RewardConfig::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn hand_set_head() {
        // r = 1*e0 - 2*e1 + 0.5 [a == Chop] + 0.25
        let m = linear_model([1.0, -2.0, 0.0, 0.0, 0.0, 0.0, 0.5], 0.25, 0.0);
        assert_eq!(m.predict_reward(&[3.0, 1.0], Action::Chop).unwrap(), 1.75);
        assert_eq!(m.predict_reward(&[3.0, 1.0], Action::Forward).unwrap(), 1.25);
        assert!(m.predict_reward(&[3.0], Action::Forward).is_err());
        let again = m.predict_reward(&[3.0, 1.0], Action::Chop).unwrap();
        assert_eq!(again.to_bits(), 1.75f64.to_bits());
    }

    #[test]
    fn zero_weights_predict_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = RewardModel::<f64>::new(4, RewardConfig::default(), &mut rng);
        let zeroed = {
            let mut p = m.params().clone();
            p.params_mut().for_each(|v| *v = 0.0);
            p
        };
        m = m.with_params(zeroed);
        for a in Action::ALL {
            assert_eq!(m.predict_reward(&[0.3, -1.0, 2.0, 0.0], a).unwrap(), 0.0);
        }
    }

    #[test]
    fn segment_returns_sum_steps() {
        let m = linear_model([1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.0, 0.0);
        let zeros = segment((0..16).map(|_| step(&[0.0, 0.0], 0)).collect(), Source::Demo);
        assert_eq!(m.segment_return(&zeros).unwrap(), 0.0);
        let constant = segment((0..16).map(|_| step(&[0.5, 9.0], 0)).collect(), Source::Demo);
        assert_eq!(m.segment_return(&constant).unwrap(), 8.0);
        let mixed = segment(vec![step(&[1.0, 0.0], 0), step(&[-2.5, 0.0], 1), step(&[4.0, 0.0], 4)], Source::Agent);
        assert_eq!(m.segment_return(&mixed).unwrap(), 2.5);
    }

    #[test]
    fn bradley_terry_values() {
        assert_eq!(preference_prob_from_returns(1.3f64, 1.3), 0.5);
        let p = preference_prob_from_returns(3f64.ln(), 0.0);
        assert!((p - 0.75).abs() < 1e-12);
        let tiny = preference_prob_from_returns(-50.0f64, 0.0);
        assert!(tiny > 0.0 && tiny < 1e-20 && tiny.is_finite());
        let big = preference_prob_from_returns(50.0f64, 0.0);
        assert!(big <= 1.0 && 1.0 - big < 1e-20);
    }

    #[test]
    fn loss_by_hand() {
        // r = e0. Pair 1 returns (2, 1), pair 2 returns (0, 1).
        // NLL = (ln(1 + e^-1) + ln(1 + e^1)) / 2
        // steps: [2], [1], [0], [1] -> mean square = 6 / 4
        let m = linear_model([1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.0, 0.1);
        let ds = PreferenceDataset::from_pairs(vec![
            PreferencePair {
                preferred: segment(vec![step(&[2.0, 0.0], 0)], Source::Demo),
                dispreferred: segment(vec![step(&[1.0, 0.0], 0)], Source::Agent),
            },
            PreferencePair {
                preferred: segment(vec![step(&[0.0, 0.0], 0)], Source::Demo),
                dispreferred: segment(vec![step(&[1.0, 0.0], 0)], Source::Agent),
            },
        ]);
        let expected = ((1.0 + (-1.0f64).exp()).ln() + (1.0 + 1.0f64.exp()).ln()) / 2.0 + 0.1 * 6.0 / 4.0;
        assert!((m.reward_loss(&ds).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn identical_returns_give_ln2() {
        let m = linear_model([0.0; 7], 0.7, 0.0);
        let seg = || segment((0..4).map(|i| step(&[i as f64, 1.0], i)).collect(), Source::Demo);
        let ds = PreferenceDataset::from_pairs(vec![PreferencePair {
            preferred: seg(),
            dispreferred: seg(),
        }]);
        assert!((m.reward_loss(&ds).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(matches!(
            m.reward_loss(&PreferenceDataset::<EmbeddedStep<f64>>::new()),
            Err(RewardError::EmptyDataset)
        ));
    }

    #[test]
    fn separated_pair_has_vanishing_nll() {
        let m = linear_model([1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.0, 0.0);
        let ds = PreferenceDataset::from_pairs(vec![PreferencePair {
            preferred: segment(vec![step(&[20.0, 0.0], 0)], Source::Demo),
            dispreferred: segment(vec![step(&[0.0, 0.0], 0)], Source::Agent),
        }]);
        assert!(m.reward_loss(&ds).unwrap() < 1e-8);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = RewardModel::<f64>::new(
            3,
            RewardConfig {
                hidden: 8,
                output_l2_coeff: 0.05,
                ..RewardConfig::default()
            },
            &mut rng,
        );
        let rand_seg = |rng: &mut ChaCha8Rng, origin| {
            segment(
                (0..4)
                    .map(|_| {
                        let e: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                        step(&e, rng.gen_range(0..5))
                    })
                    .collect(),
                origin,
            )
        };
        let ds = PreferenceDataset::from_pairs(
            (0..3)
                .map(|_| PreferencePair {
                    preferred: rand_seg(&mut rng, Source::Demo),
                    dispreferred: rand_seg(&mut rng, Source::Agent),
                })
                .collect(),
        );
        let g = m.loss_gradient(&ds).unwrap();
        let err = finite_diff_check(m.params(), |p| m.with_params(p.clone()).reward_loss(&ds).unwrap(), &g, 1e-6);
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn capped_dataset_is_fifo() {
        let mut ds = PreferenceDataset::with_cap(2);
        for i in 0..3 {
            let s = segment(vec![step(&[i as f64, 0.0], 0)], Source::Demo);
            ds.push(PreferencePair {
                preferred: s.clone(),
                dispreferred: s,
            });
        }
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.get(0).unwrap().preferred.steps[0].embedding[0], 1.0);
    }

    #[test]
    fn zero_pairs_is_empty() {
        let buffer = ReplayBuffer::<Transition>::new(4);
        let demos = DemoDataset::<Transition>::new(vec![]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ds = generate_preferences(&demos, &buffer, 0, 16, &mut rng).unwrap();
        assert!(ds.is_empty());
        assert!(generate_preferences(&demos, &buffer, 1, 16, &mut rng).is_err());
    }
}
