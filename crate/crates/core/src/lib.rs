//! Action-embedding reinforcement learning with transfer across tasks.
//!
//! The crate learns a semantic embedding for every discrete action through a
//! forward transition model, trains a continuous-action soft actor-critic that
//! emits proto-actions in that embedding space (discretized by nearest
//! neighbor), and reuses the learned policy and transition model to warm-start
//! training on tasks with different action and/or state spaces.
//!
//! Layout:
//! - [`nn`]: minimal MLP toolkit with explicit backprop, Adam, and
//!   reparameterized Gaussian sampling
//! - [`env`]: seeded gridworld and cartpole environments
//! - [`embedding`]: action-embedding table and transition model
//! - [`agent`]: proto-action SAC, discrete SAC baseline, replay, training loop
//! - [`transfer`]: same-domain / cross-domain / baseline initialization
//! - [`analysis`]: PCA, cluster metrics, analogy and monotonicity checks,
//!   bootstrap bands, episodes-to-threshold
//! - [`config`], [`checkpoint`], [`runner`]: experiment configs, persistence,
//!   multi-seed orchestration used by the `trace-rl` binary

pub mod agent;
pub mod analysis;
pub mod checkpoint;
pub mod config;
pub mod embedding;
pub mod env;
mod error;
pub mod nn;
pub mod rng;
pub mod runner;
pub mod transfer;

pub use error::{Error, Result};
pub use rng::Rng;
