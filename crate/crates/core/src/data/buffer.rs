use std::collections::VecDeque;

use rand::Rng;

use super::{DataError, Experience, Result, SegmentSource, Source, TrajectorySegment, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Span {
    id: u64,
    /// Absolute insertion index of the oldest live item.
    start: u64,
    len: usize,
    /// False once the episode's first transition has been evicted.
    intact: bool,
}

/// FIFO ring of agent experience with episode-boundary tracking.
///
/// Segments are only drawn from episodes whose first transition is still
/// stored, so a window never spans an episode boundary or the eviction seam.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<E = Transition> {
    capacity: usize,
    items: VecDeque<E>,
    spans: VecDeque<Span>,
    evicted: u64,
    next_episode: u64,
    open: bool,
}

impl<E: Experience> ReplayBuffer<E> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        Self {
            capacity,
            items: VecDeque::new(),
            spans: VecDeque::new(),
            evicted: 0,
            next_episode: 0,
            open: false,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total number of items ever inserted.
    pub fn inserted(&self) -> u64 {
        self.evicted + self.items.len() as u64
    }

    pub fn get(&self, i: usize) -> Option<&E> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &E> {
        self.items.iter()
    }

    /// Appends one step of the current episode. A transition marked done
    /// closes the episode.
    pub fn push(&mut self, item: E) -> Result<()> {
        if item.source() != Source::Agent {
            return Err(DataError::SourceMismatch {
                expected: Source::Agent,
                found: item.source(),
            });
        }
        if !self.open {
            self.spans.push_back(Span {
                id: self.next_episode,
                start: self.inserted(),
                len: 0,
                intact: true,
            });
            self.next_episode += 1;
            self.open = true;
        }
        let done = item.done();
        self.items.push_back(item);
        self.spans.back_mut().expect("open span").len += 1;
        if done {
            self.open = false;
        }
        while self.items.len() > self.capacity {
            self.evict_one();
        }
        Ok(())
    }

    /// Appends a whole episode; any partially written episode is closed
    /// first.
    pub fn append_episode(&mut self, episode: Vec<E>) -> Result<()> {
        if let Some(bad) = episode.iter().find(|t| t.source() != Source::Agent) {
            return Err(DataError::SourceMismatch {
                expected: Source::Agent,
                found: bad.source(),
            });
        }
        self.open = false;
        for item in episode {
            self.push(item)?;
        }
        self.open = false;
        Ok(())
    }

    fn evict_one(&mut self) {
        self.items.pop_front();
        self.evicted += 1;
        let front = self.spans.front_mut().expect("live items belong to a span");
        front.start += 1;
        front.len -= 1;
        front.intact = false;
        if front.len == 0 {
            self.spans.pop_front();
        }
    }

    fn windows(span: &Span, k: usize) -> usize {
        if span.intact && span.len >= k {
            span.len - k + 1
        } else {
            0
        }
    }

    /// Every `(episode id, offset)` a length-`k` segment may start at.
    pub fn segment_starts(&self, k: usize) -> Vec<(u64, usize)> {
        if k == 0 {
            return Vec::new();
        }
        self.spans
            .iter()
            .flat_map(|s| (0..Self::windows(s, k)).map(move |o| (s.id, o)))
            .collect()
    }
}

impl<E: Experience + Clone> SegmentSource<E> for ReplayBuffer<E> {
    fn sample_segment<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<TrajectorySegment<E>> {
        if k == 0 {
            return Err(DataError::Sampling("segment length must be positive".into()));
        }
        let total: usize = self.spans.iter().map(|s| Self::windows(s, k)).sum();
        if total == 0 {
            return Err(DataError::Sampling(format!(
                "no stored episode has {k} contiguous steps"
            )));
        }
        let mut pick = rng.gen_range(0..total);
        for span in &self.spans {
            let w = Self::windows(span, k);
            if pick < w {
                let base = (span.start - self.evicted) as usize + pick;
                return Ok(TrajectorySegment {
                    steps: self.items.range(base..base + k).cloned().collect(),
                    origin: Source::Agent,
                    episode: span.id,
                    offset: pick,
                });
            }
            pick -= w;
        }
        unreachable!("pick is below the window total")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::tr;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn episode(start: f64, len: usize) -> Vec<Transition> {
        (0..len)
            .map(|i| tr(start + i as f64, Source::Agent, i + 1 == len))
            .collect()
    }

    #[test]
    fn append_to_empty() {
        let mut b = ReplayBuffer::new(50);
        b.append_episode(episode(0.0, 12)).unwrap();
        assert_eq!(b.len(), 12);
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(10);
        b.append_episode(episode(0.0, 7)).unwrap();
        b.append_episode(episode(100.0, 7)).unwrap();
        assert_eq!(b.len(), 10);
        assert_eq!(b.get(0).unwrap().obs[0], 4.0);
        assert_eq!(b.get(9).unwrap().obs[0], 106.0);
        assert_eq!(b.inserted(), 14);
    }

    #[test]
    fn rejects_demo_transitions() {
        let mut b = ReplayBuffer::new(10);
        let ep = vec![tr(0.0, Source::Demo, true)];
        assert!(matches!(b.append_episode(ep), Err(DataError::SourceMismatch { .. })));
        assert!(b.is_empty());
    }

    #[test]
    fn truncated_episode_is_not_sampleable() {
        // Episode 0 has 6 steps, episode 1 has 5. Capacity 8 evicts the
        // first three steps of episode 0.
        let mut b = ReplayBuffer::new(8);
        b.append_episode(episode(0.0, 6)).unwrap();
        b.append_episode(episode(10.0, 5)).unwrap();
        assert_eq!(b.len(), 8);
        assert_eq!(b.segment_starts(2), vec![(1, 0), (1, 1), (1, 2), (1, 3)]);
        assert_eq!(b.segment_starts(5), vec![(1, 0)]);
        assert!(b.segment_starts(6).is_empty());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let seg = b.sample_segment(3, &mut rng).unwrap();
            assert_eq!(seg.episode, 1);
            assert!(seg.steps.iter().all(|t| t.obs[0] >= 10.0));
        }
    }

    #[test]
    fn open_episode_counts_and_closes_on_done() {
        let mut b = ReplayBuffer::new(100);
        for i in 0..4 {
            b.push(tr(i as f64, Source::Agent, false)).unwrap();
        }
        assert_eq!(b.segment_starts(4), vec![(0, 0)]);
        b.push(tr(4.0, Source::Agent, true)).unwrap();
        b.push(tr(5.0, Source::Agent, false)).unwrap();
        assert_eq!(b.segment_starts(2), vec![(0, 0), (0, 1), (0, 2), (0, 3)]);
    }

    #[test]
    fn segment_of_exact_length_and_singletons() {
        let mut b = ReplayBuffer::new(100);
        b.append_episode(episode(0.0, 16)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let seg = b.sample_segment(16, &mut rng).unwrap();
        assert_eq!(seg.offset, 0);
        assert_eq!(seg.len(), 16);
        let one = b.sample_segment(1, &mut rng).unwrap();
        assert_eq!(one.len(), 1);
        assert!(b.sample_segment(17, &mut rng).is_err());
        assert!(b.sample_segment(0, &mut rng).is_err());
    }

    #[test]
    fn segments_weighted_by_start_count() {
        // Lengths 14 and 34 with k = 5 give 10 and 30 windows.
        let mut b = ReplayBuffer::new(1000);
        b.append_episode(episode(0.0, 14)).unwrap();
        b.append_episode(episode(100.0, 34)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| b.sample_segment(5, &mut rng).unwrap().episode == 1)
            .count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.75).abs() <= 0.02, "episode-2 frequency {freq}");
    }
}
