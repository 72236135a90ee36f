//! Deterministic, partially observed tree-chopping grid.
//!
//! The world is a square grid with a wall border and a handful of trees in
//! the interior. The agent sees a small window around itself, rotated so
//! that "up" is the direction it faces, plus its heading and how many logs it
//! has collected. Chopping a tree it faces removes the tree and yields one
//! log. Layout and spawn are a pure function of `world_seed`.

mod expert;

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use expert::scripted_expert;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("step called on a finished episode")]
    EpisodeDone,
    #[error("no reachable tree from the current position")]
    NoReachableTree,
    #[error("unknown action index {0}")]
    UnknownAction(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnvConfig {
    pub grid_size: usize,
    pub n_trees: usize,
    pub view_radius: usize,
    pub horizon: usize,
    pub max_logs: usize,
    pub world_seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            grid_size: 12,
            n_trees: 8,
            view_radius: 2,
            horizon: 400,
            max_logs: 4,
            world_seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let fail = |msg: String| Err(EnvError::Config(msg));
        if self.grid_size < 3 {
            return fail(format!("grid_size {} leaves no interior", self.grid_size));
        }
        if self.view_radius < 1 {
            return fail("view_radius must be at least 1".into());
        }
        if self.horizon < 1 {
            return fail("horizon must be at least 1".into());
        }
        if self.n_trees < self.max_logs {
            return fail(format!(
                "n_trees {} is below max_logs {}",
                self.n_trees, self.max_logs
            ));
        }
        let interior = (self.grid_size - 2) * (self.grid_size - 2);
        if self.n_trees + 1 > interior {
            return fail(format!(
                "{} trees plus the agent do not fit in {} free cells",
                self.n_trees, interior
            ));
        }
        Ok(())
    }

    pub fn window_side(&self) -> usize {
        2 * self.view_radius + 1
    }

    /// `3 * (2r + 1)^2 + 5`
    pub fn observation_len(&self) -> usize {
        3 * self.window_side().pow(2) + 5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Forward,
    Backward,
    TurnLeft,
    TurnRight,
    Chop,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; 5] = [
        Action::Forward,
        Action::Backward,
        Action::TurnLeft,
        Action::TurnRight,
        Action::Chop,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self, EnvError> {
        Self::ALL.get(i).copied().ok_or(EnvError::UnknownAction(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub fn index(self) -> usize {
        self as usize
    }

    /// (row, col) offset of one step in this direction.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Heading::North => (-1, 0),
            Heading::East => (0, 1),
            Heading::South => (1, 0),
            Heading::West => (0, -1),
        }
    }

    pub fn left(self) -> Self {
        Self::ALL[(self.index() + 3) % 4]
    }

    pub fn right(self) -> Self {
        Self::ALL[(self.index() + 1) % 4]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Empty,
    Tree,
    Wall,
}

/// Flattened agent-centric view.
///
/// Layout: three channel planes (empty, tree, out-of-bounds) of the
/// `(2r + 1)^2` window, row-major with row 0 farthest ahead; then a one-hot
/// heading (N, E, S, W); then `logs_collected / max_logs`. Walls read as
/// out-of-bounds.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct Observation(Arc<[f64]>);

impl Observation {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values.into())
    }
}

impl Deref for Observation {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Observation {
    fn from(v: Vec<f64>) -> Self {
        Self::new(v)
    }
}

impl From<Observation> for Vec<f64> {
    fn from(o: Observation) -> Self {
        o.0.to_vec()
    }
}

impl fmt::Debug for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Observation").field(&&*self.0).finish()
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub hidden_reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WorldState {
    config: EnvConfig,
    cells: Vec<Cell>,
    pos: (usize, usize),
    heading: Heading,
    logs: usize,
    t: usize,
    done: bool,
}

impl WorldState {
    /// Fresh episode. Tree placement, spawn cell and heading depend only on
    /// `config.world_seed`.
    pub fn reset(config: &EnvConfig) -> Result<(Self, Observation), EnvError> {
        config.validate()?;
        let n = config.grid_size;
        let mut cells = vec![Cell::Empty; n * n];
        for r in 0..n {
            for c in 0..n {
                if r == 0 || c == 0 || r == n - 1 || c == n - 1 {
                    cells[r * n + c] = Cell::Wall;
                }
            }
        }
        let mut interior: Vec<(usize, usize)> = (1..n - 1)
            .flat_map(|r| (1..n - 1).map(move |c| (r, c)))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.world_seed);
        interior.shuffle(&mut rng);
        let pos = interior[0];
        for &(r, c) in &interior[1..=config.n_trees] {
            cells[r * n + c] = Cell::Tree;
        }
        let heading = Heading::ALL[rng.gen_range(0..4)];
        let state = Self {
            config: *config,
            cells,
            pos,
            heading,
            logs: 0,
            t: 0,
            done: false,
        };
        let obs = state.observation();
        Ok((state, obs))
    }

    /// Builds a state from an explicit layout. `trees` and `pos` must lie in
    /// the interior.
    pub fn from_layout(
        config: &EnvConfig,
        trees: &[(usize, usize)],
        pos: (usize, usize),
        heading: Heading,
    ) -> Result<Self, EnvError> {
        let (mut state, _) = Self::reset(&EnvConfig {
            n_trees: config.max_logs,
            ..*config
        })?;
        let n = config.grid_size;
        let interior = |(r, c): (usize, usize)| r >= 1 && c >= 1 && r < n - 1 && c < n - 1;
        if !interior(pos) || !trees.iter().all(|&p| interior(p)) || trees.contains(&pos) {
            return Err(EnvError::Config("layout outside interior".into()));
        }
        for cell in state.cells.iter_mut().filter(|c| **c == Cell::Tree) {
            *cell = Cell::Empty;
        }
        for &(r, c) in trees {
            state.cells[r * n + c] = Cell::Tree;
        }
        state.config = *config;
        state.pos = pos;
        state.heading = heading;
        Ok(state)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn position(&self) -> (usize, usize) {
        self.pos
    }

    pub fn heading(&self) -> Heading {
        self.heading
    }

    pub fn logs_collected(&self) -> usize {
        self.logs
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn cell(&self, r: isize, c: isize) -> Cell {
        let n = self.config.grid_size as isize;
        if r < 0 || c < 0 || r >= n || c >= n {
            Cell::Wall
        } else {
            self.cells[(r * n + c) as usize]
        }
    }

    /// Tree coordinates in row-major order.
    pub fn trees(&self) -> Vec<(usize, usize)> {
        let n = self.config.grid_size;
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == Cell::Tree)
            .map(|(i, _)| (i / n, i % n))
            .collect()
    }

    fn offset(&self, from: (usize, usize), h: Heading, steps: isize) -> (isize, isize) {
        let (dr, dc) = h.delta();
        (from.0 as isize + dr * steps, from.1 as isize + dc * steps)
    }

    pub(crate) fn facing(&self) -> (isize, isize) {
        self.offset(self.pos, self.heading, 1)
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        self.t += 1;
        let mut reward = 0.0;
        match action {
            Action::Forward | Action::Backward => {
                let dir = if action == Action::Forward { 1 } else { -1 };
                let (r, c) = self.offset(self.pos, self.heading, dir);
                if self.cell(r, c) == Cell::Empty {
                    self.pos = (r as usize, c as usize);
                }
            }
            Action::TurnLeft => self.heading = self.heading.left(),
            Action::TurnRight => self.heading = self.heading.right(),
            Action::Chop => {
                let (r, c) = self.facing();
                if self.cell(r, c) == Cell::Tree {
                    let n = self.config.grid_size as isize;
                    self.cells[(r * n + c) as usize] = Cell::Empty;
                    self.logs += 1;
                    reward = 1.0;
                }
            }
        }
        self.done = self.logs >= self.config.max_logs || self.t >= self.config.horizon;
        Ok(StepOutcome {
            observation: self.observation(),
            hidden_reward: reward,
            done: self.done,
        })
    }

    pub fn observation(&self) -> Observation {
        emit_observation(self)
    }
}

/// Renders the agent-centric observation of `state`.
pub fn emit_observation(state: &WorldState) -> Observation {
    let cfg = &state.config;
    let r = cfg.view_radius as isize;
    let side = cfg.window_side();
    let plane = side * side;
    let mut out = vec![0.0; cfg.observation_len()];
    let right = state.heading.right();
    for i in 0..side {
        for j in 0..side {
            let ahead = r - i as isize;
            let across = j as isize - r;
            let (ar, ac) = state.heading.delta();
            let (rr, rc) = right.delta();
            let row = state.pos.0 as isize + ar * ahead + rr * across;
            let col = state.pos.1 as isize + ac * ahead + rc * across;
            let channel = match state.cell(row, col) {
                Cell::Empty => 0,
                Cell::Tree => 1,
                Cell::Wall => 2,
            };
            out[channel * plane + i * side + j] = 1.0;
        }
    }
    out[3 * plane + state.heading.index()] = 1.0;
    out[3 * plane + 4] = state.logs as f64 / cfg.max_logs as f64;
    Observation::new(out)
}
