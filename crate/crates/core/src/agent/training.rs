//! The sequential training loop: act, store, update.

use crate::embedding::{train_embeddings_step, EmbedSample, TransitionMode};
use crate::env::{Environment, Transition};
use crate::rng::Rng;
use crate::transfer::TraceArtifacts;
use crate::Result;

use super::discrete::{discrete_sac_update, DiscreteSacAgent, DiscreteSacOptim};
use super::replay::ReplayBuffer;
use super::sac::{nearest_action, sac_update, select_proto_action};

/// Knobs of the training loop itself.
#[derive(Debug, Clone)]
pub struct TrainLoopConfig {
    pub episodes: usize,
    pub batch_size: usize,
    /// Environment steps driven by uniform-random actions before any update.
    pub warmup_steps: usize,
    pub buffer_capacity: usize,
    /// Proto-action bound = this scale times the current max |table entry|.
    pub proto_bound_scale: f64,
}

/// Per-episode training outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub ret: f64,
    pub steps: usize,
}

/// Optimizer bundle for a full TRACE training run.
#[derive(Debug, Clone)]
pub struct TraceOptim {
    pub sac: super::sac::SacOptim,
    pub embed: crate::embedding::EmbedOptim,
}

impl TraceOptim {
    pub fn new(arts: &TraceArtifacts, actor_lr: f64, critic_lr: f64, transition_lr: f64) -> Self {
        Self {
            sac: super::sac::SacOptim::new(&arts.agent, &arts.embedder, actor_lr, critic_lr),
            embed: crate::embedding::EmbedOptim::new(&arts.model, &arts.table, transition_lr),
        }
    }
}

/// Run the full training loop: per environment step select a proto-action,
/// discretize by nearest neighbor, store the transition, then (after warmup)
/// one SAC update and one embedding update on fresh i.i.d. batches.
///
/// Returns the per-episode return curve. All randomness flows through `rng`.
pub fn run_training(
    env: &mut dyn Environment,
    arts: &mut TraceArtifacts,
    optim: &mut TraceOptim,
    cfg: &TrainLoopConfig,
    rng: &mut Rng,
) -> Result<Vec<EpisodeRecord>> {
    let action_count = env.spec().action_count;
    let d = arts.table.dim();
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut records = Vec::with_capacity(cfg.episodes);
    let mut global_step = 0usize;

    for _ in 0..cfg.episodes {
        let mut state = env.reset(rng);
        let mut ep_return = 0.0;
        let mut ep_steps = 0usize;
        loop {
            // The squash bound follows the table as it trains.
            arts.agent.proto_bound =
                super::sac::effective_proto_bound(cfg.proto_bound_scale, &arts.table);
            let (action_index, proto) = if global_step < cfg.warmup_steps {
                let a = rng.range_usize(action_count);
                (a, arts.table.lookup(a)?)
            } else {
                let s_emb = arts.embedder.forward(&state);
                let noise = rng.normal_vec(d);
                let (proto, _) = select_proto_action(&arts.agent, &s_emb, true, &noise)?;
                (nearest_action(&arts.table, &proto)?, proto)
            };
            let out = env.step(action_index)?;
            buffer.push(Transition {
                state: state.clone(),
                action_index,
                proto_action: proto,
                reward: out.reward,
                next_state: out.next_state.clone(),
                done: out.done,
            });
            ep_return += out.reward;
            ep_steps += 1;
            global_step += 1;

            if global_step >= cfg.warmup_steps && buffer.len() >= cfg.batch_size {
                let batch = buffer.sample(cfg.batch_size, rng);
                sac_update(
                    &mut arts.agent,
                    &mut arts.embedder,
                    &batch,
                    &mut optim.sac,
                    rng,
                )?;

                let embed_batch = buffer.sample(cfg.batch_size, rng);
                let samples: Vec<EmbedSample> = embed_batch
                    .iter()
                    .map(|t| EmbedSample::from_transition(t, &arts.embedder))
                    .collect();
                let noise: Vec<Vec<f64>> = match arts.model.mode {
                    TransitionMode::Latent => (0..samples.len())
                        .map(|_| rng.normal_vec(arts.model.z_dim))
                        .collect(),
                    TransitionMode::Deterministic => vec![Vec::new(); samples.len()],
                };
                train_embeddings_step(
                    &mut arts.model,
                    &mut arts.table,
                    &samples,
                    &noise,
                    &mut optim.embed,
                )?;
            }

            state = out.next_state;
            if out.done {
                break;
            }
        }
        records.push(EpisodeRecord {
            ret: ep_return,
            steps: ep_steps,
        });
    }
    Ok(records)
}

/// Training loop for the discrete-action baseline (categorical SAC over raw
/// actions, no embeddings).
pub fn run_training_discrete(
    env: &mut dyn Environment,
    agent: &mut DiscreteSacAgent,
    optim: &mut DiscreteSacOptim,
    cfg: &TrainLoopConfig,
    rng: &mut Rng,
) -> Result<Vec<EpisodeRecord>> {
    let action_count = env.spec().action_count;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut records = Vec::with_capacity(cfg.episodes);
    let mut global_step = 0usize;

    for _ in 0..cfg.episodes {
        let mut state = env.reset(rng);
        let mut ep_return = 0.0;
        let mut ep_steps = 0usize;
        loop {
            let action_index = if global_step < cfg.warmup_steps {
                rng.range_usize(action_count)
            } else {
                agent.sample_action(&state, rng)?
            };
            let out = env.step(action_index)?;
            buffer.push(Transition {
                state: state.clone(),
                action_index,
                proto_action: Vec::new(),
                reward: out.reward,
                next_state: out.next_state.clone(),
                done: out.done,
            });
            ep_return += out.reward;
            ep_steps += 1;
            global_step += 1;

            if global_step >= cfg.warmup_steps && buffer.len() >= cfg.batch_size {
                let batch = buffer.sample(cfg.batch_size, rng);
                discrete_sac_update(agent, &batch, optim)?;
            }

            state = out.next_state;
            if out.done {
                break;
            }
        }
        records.push(EpisodeRecord {
            ret: ep_return,
            steps: ep_steps,
        });
    }
    Ok(records)
}
