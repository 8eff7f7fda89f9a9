use serde::{Deserialize, Serialize};

use crate::env::{EnvSpec, Environment, StepOutcome};
use crate::rng::Rng;
use crate::{Error, Result};

/// Atomic gridworld move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
}

impl Move {
    fn delta(self) -> (i64, i64) {
        match self {
            Move::Up => (0, 1),
            Move::Down => (0, -1),
            Move::Left => (-1, 0),
            Move::Right => (1, 0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Move::Up => "Up",
            Move::Down => "Down",
            Move::Left => "Left",
            Move::Right => "Right",
        }
    }
}

/// State observation encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateEncoding {
    /// Raw `(x, y, goal_x, goal_y)` coordinates.
    Coords,
    /// Concatenated one-hot encodings of the four coordinates.
    Onehot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridworldConfig {
    pub grid_size: usize,
    /// Atomic moves per action; the action space has `4^n_steps` entries.
    pub n_steps: usize,
    pub encoding: StateEncoding,
    pub step_reward: f64,
    pub goal_reward: f64,
    pub max_actions: usize,
}

impl Default for GridworldConfig {
    fn default() -> Self {
        Self {
            grid_size: 11,
            n_steps: 1,
            encoding: StateEncoding::Coords,
            step_reward: -0.05,
            goal_reward: 10.0,
            max_actions: 20,
        }
    }
}

impl GridworldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(Error::Config("grid_size must be at least 2".into()));
        }
        if !(1..=3).contains(&self.n_steps) {
            return Err(Error::Config("n_steps must be 1, 2 or 3".into()));
        }
        if self.max_actions == 0 {
            return Err(Error::Config("max_actions must be positive".into()));
        }
        Ok(())
    }

    pub fn action_count(&self) -> usize {
        4usize.pow(self.n_steps as u32)
    }

    pub fn state_dim(&self) -> usize {
        match self.encoding {
            StateEncoding::Coords => 4,
            StateEncoding::Onehot => 4 * self.grid_size,
        }
    }
}

/// Decode a combo-action index into its atomic moves.
///
/// The index is read as `n_steps` base-4 digits, most significant first, with
/// 0=Up, 1=Down, 2=Left, 3=Right.
pub fn decode_action(n_steps: usize, index: usize) -> Result<Vec<Move>> {
    let count = 4usize.pow(n_steps as u32);
    if index >= count {
        return Err(Error::IndexOutOfRange {
            what: "gridworld action",
            index,
            len: count,
        });
    }
    let mut moves = vec![Move::Up; n_steps];
    let mut rem = index;
    for slot in moves.iter_mut().rev() {
        *slot = match rem % 4 {
            0 => Move::Up,
            1 => Move::Down,
            2 => Move::Left,
            _ => Move::Right,
        };
        rem /= 4;
    }
    Ok(moves)
}

/// Net displacement `(dx, dy)` of a combo action in free space (no boundary
/// clipping). This is the grouping that makes "same effect" precise.
pub fn net_displacement(n_steps: usize, index: usize) -> Result<(i64, i64)> {
    let moves = decode_action(n_steps, index)?;
    let mut dx = 0;
    let mut dy = 0;
    for m in moves {
        let (ddx, ddy) = m.delta();
        dx += ddx;
        dy += ddy;
    }
    Ok((dx, dy))
}

/// The n-step gridworld: reach a random goal on a square grid using combo
/// moves. Moves that would cross the boundary leave the position unchanged,
/// the goal check runs after every atomic move, and each atomic move costs
/// `step_reward`.
#[derive(Debug, Clone)]
pub struct Gridworld {
    cfg: GridworldConfig,
    agent: (i64, i64),
    goal: (i64, i64),
    actions_taken: usize,
    done: bool,
}

impl Gridworld {
    pub fn new(cfg: GridworldConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            agent: (0, 0),
            goal: (0, 1),
            actions_taken: 0,
            done: true,
        })
    }

    pub fn config(&self) -> &GridworldConfig {
        &self.cfg
    }

    pub fn agent_position(&self) -> (i64, i64) {
        self.agent
    }

    pub fn goal_position(&self) -> (i64, i64) {
        self.goal
    }

    fn encode(&self) -> Vec<f64> {
        match self.cfg.encoding {
            StateEncoding::Coords => vec![
                self.agent.0 as f64,
                self.agent.1 as f64,
                self.goal.0 as f64,
                self.goal.1 as f64,
            ],
            StateEncoding::Onehot => {
                let g = self.cfg.grid_size;
                let mut v = vec![0.0; 4 * g];
                v[self.agent.0 as usize] = 1.0;
                v[g + self.agent.1 as usize] = 1.0;
                v[2 * g + self.goal.0 as usize] = 1.0;
                v[3 * g + self.goal.1 as usize] = 1.0;
                v
            }
        }
    }

    /// Recover `(x, y, goal_x, goal_y)` from an encoded observation.
    pub fn decode_state(cfg: &GridworldConfig, state: &[f64]) -> Result<(i64, i64, i64, i64)> {
        match cfg.encoding {
            StateEncoding::Coords => {
                if state.len() != 4 {
                    return Err(Error::DimensionMismatch {
                        context: "coords state",
                        expected: 4,
                        got: state.len(),
                    });
                }
                Ok((
                    state[0] as i64,
                    state[1] as i64,
                    state[2] as i64,
                    state[3] as i64,
                ))
            }
            StateEncoding::Onehot => {
                let g = cfg.grid_size;
                if state.len() != 4 * g {
                    return Err(Error::DimensionMismatch {
                        context: "onehot state",
                        expected: 4 * g,
                        got: state.len(),
                    });
                }
                let argmax = |chunk: &[f64]| -> i64 {
                    let mut best = 0;
                    for (i, v) in chunk.iter().enumerate() {
                        if *v > chunk[best] {
                            best = i;
                        }
                    }
                    best as i64
                };
                Ok((
                    argmax(&state[0..g]),
                    argmax(&state[g..2 * g]),
                    argmax(&state[2 * g..3 * g]),
                    argmax(&state[3 * g..4 * g]),
                ))
            }
        }
    }
}

impl Environment for Gridworld {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            state_dim: self.cfg.state_dim(),
            action_count: self.cfg.action_count(),
            max_steps: self.cfg.max_actions,
        }
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        let g = self.cfg.grid_size as i64;
        self.agent = (rng.range_usize(g as usize) as i64, rng.range_usize(g as usize) as i64);
        loop {
            let goal = (rng.range_usize(g as usize) as i64, rng.range_usize(g as usize) as i64);
            if goal != self.agent {
                self.goal = goal;
                break;
            }
        }
        self.actions_taken = 0;
        self.done = false;
        self.encode()
    }

    fn step(&mut self, action_index: usize) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let moves = decode_action(self.cfg.n_steps, action_index)?;
        let bound = self.cfg.grid_size as i64 - 1;
        let mut reward = 0.0;
        let mut reached = false;
        for m in moves {
            let (dx, dy) = m.delta();
            let nx = self.agent.0 + dx;
            let ny = self.agent.1 + dy;
            if (0..=bound).contains(&nx) && (0..=bound).contains(&ny) {
                self.agent = (nx, ny);
            }
            reward += self.cfg.step_reward;
            if self.agent == self.goal {
                reached = true;
                break;
            }
        }
        if reached {
            reward += self.cfg.goal_reward;
        }
        self.actions_taken += 1;
        self.done = reached || self.actions_taken >= self.cfg.max_actions;
        Ok(StepOutcome {
            next_state: self.encode(),
            reward,
            done: self.done,
        })
    }

    fn state(&self) -> Vec<f64> {
        self.encode()
    }
}
