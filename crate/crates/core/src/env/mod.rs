//! Seeded task environments and transition datasets.

mod cartpole;
mod gridworld;

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::ActionEmbeddingTable;
use crate::rng::Rng;
use crate::Result;

pub use cartpole::{CartPole, CartPoleConfig};
pub use gridworld::{decode_action, net_displacement, Gridworld, GridworldConfig, Move, StateEncoding};

/// Static description of an environment's interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_count: usize,
    pub max_steps: usize,
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// One environment interaction record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action_index: usize,
    pub proto_action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// A deterministic, seeded episodic task.
pub trait Environment {
    fn spec(&self) -> EnvSpec;
    /// Start a new episode; randomness comes only from `rng`.
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64>;
    /// Advance one action. Errors if the episode already finished.
    fn step(&mut self, action_index: usize) -> Result<StepOutcome>;
    /// Encoded current state.
    fn state(&self) -> Vec<f64>;
}

/// Roll a uniform-random policy for exactly `count` transitions, resetting on
/// episode termination.
///
/// `proto_action` is recorded as the executed action's current embedding, or
/// an empty vector when no table exists yet.
pub fn collect_random_transitions(
    env: &mut dyn Environment,
    count: usize,
    rng: &mut Rng,
    table: Option<&ActionEmbeddingTable>,
) -> Result<Vec<Transition>> {
    let actions = env.spec().action_count;
    let mut out = Vec::with_capacity(count);
    let mut state = env.reset(rng);
    let mut done = false;
    for _ in 0..count {
        if done {
            state = env.reset(rng);
        }
        let action = rng.range_usize(actions);
        let outcome = env.step(action)?;
        let proto = match table {
            Some(t) => t.lookup(action)?,
            None => Vec::new(),
        };
        out.push(Transition {
            state: state.clone(),
            action_index: action,
            proto_action: proto,
            reward: outcome.reward,
            next_state: outcome.next_state.clone(),
            done: outcome.done,
        });
        state = outcome.next_state;
        done = outcome.done;
    }
    Ok(out)
}

/// Persist transitions as newline-delimited JSON, one record per line.
pub fn write_transitions(path: &Path, transitions: &[Transition]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for t in transitions {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_transitions(path: &Path) -> Result<Vec<Transition>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
