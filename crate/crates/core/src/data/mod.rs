//! Experience containers: demonstrations, the FIFO replay buffer, segment
//! extraction, mixed batches, and the on-disk demonstration format.

mod buffer;
mod demos;
mod io;

use std::cell::Cell;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, EnvError, Observation};

pub use buffer::ReplayBuffer;
pub use demos::{expert_episode, generate_expert_demos, DemoDataset};
pub use io::{load_demos, save_demos, write_demos, DEMO_SCHEMA, DEMO_SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("transition source {found:?} not allowed here (expected {expected:?})")]
    SourceMismatch { expected: Source, found: Source },
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Demo,
    Agent,
}

thread_local! {
    static HIDDEN_REWARD_READS: Cell<u64> = const { Cell::new(0) };
}

/// Number of times [`Transition::hidden_reward`] has been called on this
/// thread.
pub fn hidden_reward_reads() -> u64 {
    HIDDEN_REWARD_READS.with(Cell::get)
}

pub fn reset_hidden_reward_reads() {
    HIDDEN_REWARD_READS.with(|c| c.set(0));
}

/// One environment step. The environment reward is stored but every read
/// goes through a counted accessor so training paths that must not see it
/// can be audited.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: Action,
    pub next_obs: Observation,
    pub done: bool,
    hidden_reward: f64,
    source: Source,
}

impl Transition {
    pub fn new(
        obs: Observation,
        action: Action,
        next_obs: Observation,
        done: bool,
        hidden_reward: f64,
        source: Source,
    ) -> Self {
        Self {
            obs,
            action,
            next_obs,
            done,
            hidden_reward,
            source,
        }
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn hidden_reward(&self) -> f64 {
        HIDDEN_REWARD_READS.with(|c| c.set(c.get() + 1));
        self.hidden_reward
    }
}

/// Anything the replay buffer and demonstration set can hold.
pub trait Experience {
    fn source(&self) -> Source;
    fn done(&self) -> bool;
}

impl Experience for Transition {
    fn source(&self) -> Source {
        self.source
    }

    fn done(&self) -> bool {
        self.done
    }
}

/// Fixed-length contiguous run of experiences from one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySegment<E> {
    pub steps: Vec<E>,
    pub origin: Source,
    /// Episode identifier within the source container.
    pub episode: u64,
    /// Offset of the first step within that episode.
    pub offset: usize,
}

impl<E> TrajectorySegment<E> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Containers segments can be drawn from.
pub trait SegmentSource<E> {
    /// Uniform over all valid start positions: an episode is chosen with
    /// probability proportional to its number of length-`k` windows, then a
    /// window uniformly within it.
    fn sample_segment<R: rand::Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<TrajectorySegment<E>>;
}

/// Draws `round(demo_fraction * batch_size)` experiences uniformly with
/// replacement from `demos` and the rest from `buffer`, then shuffles.
pub fn sample_mixed_batch<'a, E, R>(
    buffer: &'a ReplayBuffer<E>,
    demos: &'a DemoDataset<E>,
    batch_size: usize,
    demo_fraction: f64,
    rng: &mut R,
) -> Result<Vec<&'a E>>
where
    E: Experience,
    R: rand::Rng + ?Sized,
{
    use rand::seq::SliceRandom;

    if !(0.0..=1.0).contains(&demo_fraction) {
        return Err(DataError::Sampling(format!(
            "demo_fraction {demo_fraction} outside [0, 1]"
        )));
    }
    let n_demo = demo_count(batch_size, demo_fraction);
    let n_agent = batch_size - n_demo;
    if n_demo > 0 && demos.is_empty() {
        return Err(DataError::Sampling("demonstration set is empty".into()));
    }
    if n_agent > 0 && buffer.is_empty() {
        return Err(DataError::Sampling("replay buffer is empty".into()));
    }
    let mut batch = Vec::with_capacity(batch_size);
    for _ in 0..n_demo {
        batch.push(demos.get(rng.gen_range(0..demos.len())).expect("index in range"));
    }
    for _ in 0..n_agent {
        batch.push(buffer.get(rng.gen_range(0..buffer.len())).expect("index in range"));
    }
    batch.shuffle(rng);
    Ok(batch)
}

/// `round(fraction * total)`, halves rounded away from zero.
pub fn demo_count(total: usize, fraction: f64) -> usize {
    ((fraction * total as f64).round() as usize).min(total)
}
