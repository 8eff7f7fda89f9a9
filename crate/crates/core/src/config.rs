//! Experiment configuration: JSON schema, defaults, validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::env::{CartPole, CartPoleConfig, EnvSpec, Environment, Gridworld, GridworldConfig};
use crate::transfer::{Baseline, TransferConfig};
use crate::{Error, Result};

/// Task family plus its parameters. Externally tagged:
/// `{"gridworld": {...}}` or `{"cartpole": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvConfig {
    Gridworld(GridworldConfig),
    Cartpole(CartPoleConfig),
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            EnvConfig::Gridworld(c) => c.validate(),
            EnvConfig::Cartpole(c) => c.validate(),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvConfig::Gridworld(c) => Box::new(Gridworld::new(c.clone())?),
            EnvConfig::Cartpole(c) => Box::new(CartPole::new(c.clone())?),
        })
    }

    pub fn spec(&self) -> Result<EnvSpec> {
        Ok(self.build()?.spec())
    }

    pub fn family(&self) -> &'static str {
        match self {
            EnvConfig::Gridworld(_) => "gridworld",
            EnvConfig::Cartpole(_) => "cartpole",
        }
    }
}

/// Which learner a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Proto-action SAC over learned action embeddings.
    Trace,
    /// Same learner, trained from scratch on the target task (the ablation
    /// fixed point: no parameters cross tasks).
    TraceNoTransfer,
    /// Discrete-action SAC baseline.
    SacDiscrete,
    /// Basic transfer: input/output reinitialization of a discrete SAC.
    Bt,
}

/// All tunable knobs with their documented defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparameters {
    /// Width of the shared state feature space; absent means the identity
    /// embedder (same-domain mode).
    pub state_embed_dim: Option<usize>,
    pub state_embed_hiddens: Vec<usize>,
    /// Hidden widths of the actor and critics.
    pub ac_hiddens: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Target retention per Polyak update.
    pub tau: f64,
    /// Entropy temperature (fixed; no automatic tuning).
    pub alpha: f64,
    pub gamma: f64,
    /// Action embedding dimension d.
    pub action_embed_dim: usize,
    pub transition_hiddens: Vec<usize>,
    pub transition_lr: f64,
    /// Latent-variable transition model (for stochastic tasks).
    pub latent_transition: bool,
    pub z_dim: usize,
    pub z_hiddens: Vec<usize>,
    /// KL scale in the latent objective.
    pub beta: f64,
    pub batch_size: usize,
    pub warmup_steps: usize,
    pub buffer_capacity: usize,
    /// Proto-action bound = this scale times the largest initial |table entry|.
    pub proto_bound_scale: f64,
    /// Random transitions collected by the `embed` command.
    pub embed_samples: usize,
    /// Offline epochs used by the `embed` command.
    pub embed_epochs: usize,
    /// Also dump the collected transition dataset as JSON lines.
    pub save_transitions: bool,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            state_embed_dim: None,
            state_embed_hiddens: vec![200, 100],
            ac_hiddens: vec![200, 100],
            actor_lr: 1e-5,
            critic_lr: 1e-3,
            tau: 0.999,
            alpha: 0.2,
            gamma: 0.99,
            action_embed_dim: 2,
            transition_hiddens: vec![64, 32],
            transition_lr: 1e-3,
            latent_transition: false,
            z_dim: 8,
            z_hiddens: vec![32],
            beta: 1e-2,
            batch_size: 128,
            warmup_steps: 1000,
            buffer_capacity: 100_000,
            proto_bound_scale: 1.5,
            embed_samples: 10_000,
            embed_epochs: 30,
            save_transitions: false,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let check_positive = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive")))
            }
        };
        check_positive("actor_lr", self.actor_lr)?;
        check_positive("critic_lr", self.critic_lr)?;
        check_positive("transition_lr", self.transition_lr)?;
        check_positive("proto_bound_scale", self.proto_bound_scale)?;
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config("tau must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config("gamma must lie in [0, 1]".into()));
        }
        if self.alpha < 0.0 {
            return Err(Error::Config("alpha must be non-negative".into()));
        }
        if self.beta < 0.0 {
            return Err(Error::Config("beta must be non-negative".into()));
        }
        if self.action_embed_dim == 0 {
            return Err(Error::Config("action_embed_dim must be at least 1".into()));
        }
        if self.latent_transition && self.z_dim == 0 {
            return Err(Error::Config("z_dim must be at least 1 in latent mode".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if self.buffer_capacity < self.batch_size {
            return Err(Error::Config(
                "buffer_capacity must be at least batch_size".into(),
            ));
        }
        if let Some(m) = self.state_embed_dim {
            if m == 0 {
                return Err(Error::Config("state_embed_dim must be at least 1".into()));
            }
        }
        if self.embed_samples == 0 || self.embed_epochs == 0 {
            return Err(Error::Config(
                "embed_samples and embed_epochs must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A full experiment: environment, algorithm, transfer flags, knobs, seeds,
/// and where outputs land. Unknown JSON keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub transfer: TransferConfig,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    /// Exact seeds, one independent run each.
    pub seeds: Vec<u64>,
    /// Episode budget per run.
    pub budget: usize,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.hyperparameters.validate()?;
        self.transfer.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        match self.algorithm {
            Algorithm::Bt => {
                if self.transfer.baseline != Baseline::Bt {
                    return Err(Error::Config(
                        "algorithm \"bt\" requires transfer.baseline = \"bt\"".into(),
                    ));
                }
            }
            Algorithm::SacDiscrete | Algorithm::TraceNoTransfer => {
                if self.transfer.transfer_policy || self.transfer.transfer_transition {
                    return Err(Error::Config(
                        "this algorithm trains from scratch; transfer flags must be off".into(),
                    ));
                }
            }
            Algorithm::Trace => {}
        }
        if self.transfer.baseline == Baseline::Bt && self.algorithm != Algorithm::Bt {
            return Err(Error::Config(
                "transfer.baseline = \"bt\" requires algorithm \"bt\"".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
