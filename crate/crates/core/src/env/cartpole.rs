use serde::{Deserialize, Serialize};

use crate::env::{EnvSpec, Environment, StepOutcome};
use crate::rng::Rng;
use crate::{Error, Result};

/// Cart-pole balancing with a discretized force input.
///
/// The action space is `force_levels` equally spaced forces spanning
/// `[force_min, force_max]`; the state is `(x, x_dot, theta, theta_dot)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CartPoleConfig {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub half_length: f64,
    pub dt: f64,
    pub force_levels: usize,
    pub force_min: f64,
    pub force_max: f64,
    /// Episode fails when |theta| exceeds this many degrees.
    pub angle_limit_deg: f64,
    pub position_limit: f64,
    pub max_steps: usize,
}

impl Default for CartPoleConfig {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            dt: 0.02,
            force_levels: 21,
            force_min: -10.0,
            force_max: 10.0,
            angle_limit_deg: 12.0,
            position_limit: 2.4,
            max_steps: 100,
        }
    }
}

impl CartPoleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.force_levels < 2 {
            return Err(Error::Config("force_levels must be at least 2".into()));
        }
        if self.force_min >= self.force_max {
            return Err(Error::Config("force_min must be below force_max".into()));
        }
        if self.dt <= 0.0 || self.max_steps == 0 {
            return Err(Error::Config("dt and max_steps must be positive".into()));
        }
        Ok(())
    }

    /// The force applied by a discretized action index.
    pub fn force_for(&self, index: usize) -> f64 {
        let span = self.force_max - self.force_min;
        self.force_min + span * index as f64 / (self.force_levels - 1) as f64
    }

    fn angle_limit_rad(&self) -> f64 {
        self.angle_limit_deg.to_radians()
    }
}

#[derive(Debug, Clone)]
pub struct CartPole {
    cfg: CartPoleConfig,
    state: [f64; 4],
    steps: usize,
    done: bool,
}

impl CartPole {
    pub fn new(cfg: CartPoleConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            state: [0.0; 4],
            steps: 0,
            done: true,
        })
    }

    pub fn config(&self) -> &CartPoleConfig {
        &self.cfg
    }

    /// Test hook: overwrite the physical state.
    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
        self.done = false;
        self.steps = 0;
    }

    fn out_of_bounds(&self, state: &[f64; 4]) -> bool {
        state[0].abs() > self.cfg.position_limit || state[2].abs() > self.cfg.angle_limit_rad()
    }
}

impl Environment for CartPole {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            state_dim: 4,
            action_count: self.cfg.force_levels,
            max_steps: self.cfg.max_steps,
        }
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        for v in self.state.iter_mut() {
            *v = rng.uniform(-0.05, 0.05);
        }
        self.steps = 0;
        self.done = false;
        self.state.to_vec()
    }

    fn step(&mut self, action_index: usize) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        if action_index >= self.cfg.force_levels {
            return Err(Error::IndexOutOfRange {
                what: "cartpole action",
                index: action_index,
                len: self.cfg.force_levels,
            });
        }
        let force = self.cfg.force_for(action_index);
        let [x, x_dot, theta, theta_dot] = self.state;
        let total_mass = self.cfg.cart_mass + self.cfg.pole_mass;
        let pole_mass_length = self.cfg.pole_mass * self.cfg.half_length;
        let sin = theta.sin();
        let cos = theta.cos();

        let x_acc = (force + pole_mass_length * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc = (self.cfg.gravity * sin - cos * x_acc)
            / (self.cfg.half_length
                * (4.0 / 3.0 - self.cfg.pole_mass * cos * cos / total_mass));

        // Explicit Euler; positions advance with the old velocities.
        let was_out = self.out_of_bounds(&self.state);
        self.state = [
            x + self.cfg.dt * x_dot,
            x_dot + self.cfg.dt * x_acc,
            theta + self.cfg.dt * theta_dot,
            theta_dot + self.cfg.dt * theta_acc,
        ];
        self.steps += 1;
        self.done =
            was_out || self.out_of_bounds(&self.state) || self.steps >= self.cfg.max_steps;
        Ok(StepOutcome {
            next_state: self.state.to_vec(),
            reward: 1.0,
            done: self.done,
        })
    }

    fn state(&self) -> Vec<f64> {
        self.state.to_vec()
    }
}
