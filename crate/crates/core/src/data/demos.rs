use rand::Rng;

use super::{DataError, Experience, Result, SegmentSource, Source, TrajectorySegment, Transition};
use crate::env::{scripted_expert, EnvConfig, WorldState};

/// Demonstration episodes. `len()` is the total tuple count `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoDataset<E = Transition> {
    episodes: Vec<Vec<E>>,
    /// `ends[i]` is the flat index one past episode `i`.
    ends: Vec<usize>,
}

impl<E: Experience> DemoDataset<E> {
    pub fn new(episodes: Vec<Vec<E>>) -> Result<Self> {
        for ep in &episodes {
            if ep.is_empty() {
                return Err(DataError::Sampling("demonstration episode is empty".into()));
            }
            if let Some(bad) = ep.iter().find(|t| t.source() != Source::Demo) {
                return Err(DataError::SourceMismatch {
                    expected: Source::Demo,
                    found: bad.source(),
                });
            }
        }
        let ends = episodes
            .iter()
            .scan(0, |acc, ep| {
                *acc += ep.len();
                Some(*acc)
            })
            .collect();
        Ok(Self { episodes, ends })
    }

    pub fn episodes(&self) -> &[Vec<E>] {
        &self.episodes
    }

    pub fn len(&self) -> usize {
        self.ends.last().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Transition by flat index across all episodes.
    pub fn get(&self, i: usize) -> Option<&E> {
        let ep = self.ends.partition_point(|&end| end <= i);
        let start = if ep == 0 { 0 } else { self.ends[ep - 1] };
        self.episodes.get(ep)?.get(i - start)
    }

    pub fn iter(&self) -> impl Iterator<Item = &E> {
        self.episodes.iter().flatten()
    }

    /// Converts every stored experience, keeping episode structure.
    pub fn map<F, E2>(&self, mut f: F) -> std::result::Result<DemoDataset<E2>, DataError>
    where
        F: FnMut(&E) -> E2,
        E2: Experience,
    {
        DemoDataset::new(
            self.episodes
                .iter()
                .map(|ep| ep.iter().map(&mut f).collect())
                .collect(),
        )
    }
}

impl<E: Experience + Clone> SegmentSource<E> for DemoDataset<E> {
    fn sample_segment<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<TrajectorySegment<E>> {
        if k == 0 {
            return Err(DataError::Sampling("segment length must be positive".into()));
        }
        let windows = |ep: &Vec<E>| (ep.len() + 1).saturating_sub(k);
        let total: usize = self.episodes.iter().map(windows).sum();
        if total == 0 {
            return Err(DataError::Sampling(format!(
                "no demonstration episode has {k} steps"
            )));
        }
        let mut pick = rng.gen_range(0..total);
        for (id, ep) in self.episodes.iter().enumerate() {
            let w = windows(ep);
            if pick < w {
                return Ok(TrajectorySegment {
                    steps: ep[pick..pick + k].to_vec(),
                    origin: Source::Demo,
                    episode: id as u64,
                    offset: pick,
                });
            }
            pick -= w;
        }
        unreachable!("pick is below the window total")
    }
}

/// One scripted-expert episode from a fresh reset.
pub fn expert_episode(config: &EnvConfig) -> Result<Vec<Transition>> {
    let (mut state, mut obs) = WorldState::reset(config)?;
    let mut episode = Vec::new();
    while !state.is_done() {
        let action = scripted_expert(&state)?;
        let out = state.step(action)?;
        episode.push(Transition::new(
            obs,
            action,
            out.observation.clone(),
            out.done,
            out.hidden_reward,
            Source::Demo,
        ));
        obs = out.observation;
    }
    Ok(episode)
}

pub fn generate_expert_demos(config: &EnvConfig, n_episodes: usize) -> Result<DemoDataset<Transition>> {
    let episodes = (0..n_episodes)
        .map(|_| expert_episode(config))
        .collect::<Result<Vec<_>>>()?;
    DemoDataset::new(episodes)
}
