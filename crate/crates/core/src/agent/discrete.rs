//! Discrete-action SAC baseline.
//!
//! A categorical actor over the raw action set and twin critics emitting
//! per-action Q vectors. Used by the learn-from-scratch baseline and by the
//! basic-transfer (input/output reinitialization) baseline; no embeddings are
//! involved.

use crate::env::Transition;
use crate::nn::{adam_step, AdamState, Activation, Mlp, ParamGrads};
use crate::rng::Rng;
use crate::{Error, Result};

use super::sac::{polyak_update, SacLossReport};

#[derive(Debug, Clone)]
pub struct DiscreteSacAgent {
    pub actor: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub target1: Mlp,
    pub target2: Mlp,
    pub alpha: f64,
    pub gamma: f64,
    pub tau: f64,
}

impl DiscreteSacAgent {
    pub fn new(
        state_dim: usize,
        action_count: usize,
        hiddens: &[usize],
        alpha: f64,
        gamma: f64,
        tau: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hiddens);
        sizes.push(action_count);
        let actor = Mlp::glorot(&sizes, Activation::Relu, Activation::Linear, rng)?;
        let critic1 = Mlp::glorot(&sizes, Activation::Relu, Activation::Linear, rng)?;
        let critic2 = Mlp::glorot(&sizes, Activation::Relu, Activation::Linear, rng)?;
        let target1 = critic1.clone();
        let target2 = critic2.clone();
        Ok(Self {
            actor,
            critic1,
            critic2,
            target1,
            target2,
            alpha,
            gamma,
            tau,
        })
    }

    pub fn action_count(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }

    /// Action probabilities for a state.
    pub fn policy(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.actor.forward(state)?))
    }

    /// Sample an action from the categorical policy.
    pub fn sample_action(&self, state: &[f64], rng: &mut Rng) -> Result<usize> {
        let probs = self.policy(state)?;
        let mut u = rng.next_f64();
        for (i, p) in probs.iter().enumerate() {
            if u < *p {
                return Ok(i);
            }
            u -= p;
        }
        Ok(probs.len() - 1)
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|l| l - lse).collect()
}

#[derive(Debug)]
pub struct DiscreteCriticGrads {
    pub critic1: ParamGrads,
    pub critic2: ParamGrads,
    pub mean_q: f64,
}

/// Detached soft Bellman targets
/// `r + gamma (1 - done) * E_pi[min targetQ(s') - alpha log pi(s')]`.
pub fn discrete_critic_targets(
    agent: &DiscreteSacAgent,
    batch: &[Transition],
) -> Result<Vec<f64>> {
    let mut targets = Vec::with_capacity(batch.len());
    for t in batch {
        let logits2 = agent.actor.forward(&t.next_state)?;
        let pi2 = softmax(&logits2);
        let logpi2 = log_softmax(&logits2);
        let tq1 = agent.target1.forward(&t.next_state)?;
        let tq2 = agent.target2.forward(&t.next_state)?;
        let v2: f64 = (0..pi2.len())
            .map(|a| pi2[a] * (tq1[a].min(tq2[a]) - agent.alpha * logpi2[a]))
            .sum();
        targets.push(t.reward + agent.gamma * (1.0 - t.done as u8 as f64) * v2);
    }
    Ok(targets)
}

/// Regression of both critics' selected-action entries toward fixed targets,
/// without gradients.
pub fn discrete_critic_regression_loss(
    agent: &DiscreteSacAgent,
    batch: &[Transition],
    targets: &[f64],
) -> Result<f64> {
    let inv_n = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (t, &y) in batch.iter().zip(targets) {
        let q1 = agent.critic1.forward(&t.state)?[t.action_index];
        let q2 = agent.critic2.forward(&t.state)?[t.action_index];
        loss += (q1 - y) * (q1 - y) + (q2 - y) * (q2 - y);
    }
    Ok(loss * inv_n)
}

/// Regression loss plus critic gradients toward fixed targets.
pub fn discrete_critic_regression_loss_and_grads(
    agent: &DiscreteSacAgent,
    batch: &[Transition],
    targets: &[f64],
) -> Result<(f64, DiscreteCriticGrads)> {
    let inv_n = 1.0 / batch.len() as f64;
    let mut grads = DiscreteCriticGrads {
        critic1: ParamGrads::zeros_like(&agent.critic1),
        critic2: ParamGrads::zeros_like(&agent.critic2),
        mean_q: 0.0,
    };
    let mut loss = 0.0;
    for (t, &y) in batch.iter().zip(targets) {
        if t.action_index >= agent.action_count() {
            return Err(Error::IndexOutOfRange {
                what: "discrete action",
                index: t.action_index,
                len: agent.action_count(),
            });
        }
        let trace1 = agent.critic1.forward_trace(&t.state);
        let trace2 = agent.critic2.forward_trace(&t.state);
        let q1 = trace1.last().unwrap()[t.action_index];
        let q2 = trace2.last().unwrap()[t.action_index];
        loss += (q1 - y) * (q1 - y) + (q2 - y) * (q2 - y);
        grads.mean_q += q1 * inv_n;

        let mut up1 = vec![0.0; agent.action_count()];
        up1[t.action_index] = 2.0 * (q1 - y) * inv_n;
        agent
            .critic1
            .backward_from_trace(&t.state, &trace1, &up1, &mut grads.critic1);
        let mut up2 = vec![0.0; agent.action_count()];
        up2[t.action_index] = 2.0 * (q2 - y) * inv_n;
        agent
            .critic2
            .backward_from_trace(&t.state, &trace2, &up2, &mut grads.critic2);
    }
    Ok((loss * inv_n, grads))
}

/// Full discrete critic loss: detached targets, then regression.
pub fn discrete_critic_loss_and_grads(
    agent: &DiscreteSacAgent,
    batch: &[Transition],
) -> Result<(f64, DiscreteCriticGrads)> {
    let targets = discrete_critic_targets(agent, batch)?;
    discrete_critic_regression_loss_and_grads(agent, batch, &targets)
}

/// The discrete policy objective evaluated without gradients.
pub fn discrete_actor_loss(agent: &DiscreteSacAgent, batch: &[Transition]) -> Result<f64> {
    let inv_n = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for t in batch {
        let logits = agent.actor.forward(&t.state)?;
        let pi = softmax(&logits);
        let logpi = log_softmax(&logits);
        let q1 = agent.critic1.forward(&t.state)?;
        let q2 = agent.critic2.forward(&t.state)?;
        loss += (0..pi.len())
            .map(|a| pi[a] * (agent.alpha * logpi[a] - q1[a].min(q2[a])))
            .sum::<f64>();
    }
    Ok(loss * inv_n)
}

/// Policy loss `mean E_pi[alpha log pi - min Q]` with detached critics.
pub fn discrete_actor_loss_and_grads(
    agent: &DiscreteSacAgent,
    batch: &[Transition],
) -> Result<(f64, ParamGrads)> {
    let inv_n = 1.0 / batch.len() as f64;
    let mut grads = ParamGrads::zeros_like(&agent.actor);
    let mut loss = 0.0;
    for t in batch {
        let trace = agent.actor.forward_trace(&t.state);
        let logits = trace.last().unwrap().clone();
        let pi = softmax(&logits);
        let logpi = log_softmax(&logits);
        let q1 = agent.critic1.forward(&t.state)?;
        let q2 = agent.critic2.forward(&t.state)?;
        let f: Vec<f64> = (0..pi.len())
            .map(|a| agent.alpha * logpi[a] - q1[a].min(q2[a]))
            .collect();
        let sample_loss: f64 = pi.iter().zip(&f).map(|(p, fa)| p * fa).sum();
        loss += sample_loss;

        // d/dlogit_k of E_pi[f] with f's alpha log pi term included:
        // pi_k (f_k - E_pi[f]); the direct alpha d(log pi)/dlogits term
        // telescopes to zero.
        let upstream: Vec<f64> = (0..pi.len())
            .map(|k| inv_n * pi[k] * (f[k] - sample_loss))
            .collect();
        agent
            .actor
            .backward_from_trace(&t.state, &trace, &upstream, &mut grads);
    }
    Ok((loss * inv_n, grads))
}

#[derive(Debug, Clone)]
pub struct DiscreteSacOptim {
    pub actor: AdamState,
    pub critic1: AdamState,
    pub critic2: AdamState,
}

impl DiscreteSacOptim {
    pub fn new(agent: &DiscreteSacAgent, actor_lr: f64, critic_lr: f64) -> Self {
        Self {
            actor: AdamState::for_mlp(&agent.actor, actor_lr),
            critic1: AdamState::for_mlp(&agent.critic1, critic_lr),
            critic2: AdamState::for_mlp(&agent.critic2, critic_lr),
        }
    }
}

/// One full discrete-SAC update followed by Polyak target averaging.
pub fn discrete_sac_update(
    agent: &mut DiscreteSacAgent,
    batch: &[Transition],
    optim: &mut DiscreteSacOptim,
) -> Result<SacLossReport> {
    if batch.len() < 2 {
        return Err(Error::BatchTooSmall {
            min: 2,
            got: batch.len(),
        });
    }
    let (critic_loss, cgrads) = discrete_critic_loss_and_grads(agent, batch)?;
    let (actor_loss, agrads) = discrete_actor_loss_and_grads(agent, batch)?;
    adam_step(&mut agent.critic1, &cgrads.critic1, &mut optim.critic1)?;
    adam_step(&mut agent.critic2, &cgrads.critic2, &mut optim.critic2)?;
    adam_step(&mut agent.actor, &agrads, &mut optim.actor)?;
    polyak_update(&mut agent.target1, &agent.critic1, agent.tau);
    polyak_update(&mut agent.target2, &agent.critic2, agent.tau);
    Ok(SacLossReport {
        critic_loss,
        actor_loss,
        mean_q: cgrads.mean_q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_actor_with_identical_q_rows_has_zero_policy_gradient() {
        let mut rng = Rng::seed_from_u64(0);
        let mut agent = DiscreteSacAgent::new(2, 3, &[4], 0.2, 0.99, 0.99, &mut rng).unwrap();
        // Zero actor => uniform policy; zero critics => identical Q rows.
        agent.actor = Mlp::zeros(&[2, 4, 3], Activation::Relu, Activation::Linear).unwrap();
        agent.critic1 = Mlp::zeros(&[2, 4, 3], Activation::Relu, Activation::Linear).unwrap();
        agent.critic2 = agent.critic1.clone();
        let batch = vec![Transition {
            state: vec![0.5, -0.5],
            action_index: 1,
            proto_action: vec![],
            reward: 1.0,
            next_state: vec![0.0, 0.0],
            done: false,
        }];
        let (_, grads) = discrete_actor_loss_and_grads(&agent, &batch).unwrap();
        for block in grads.blocks() {
            assert!(block.iter().all(|g| g.abs() < 1e-12));
        }
    }

    #[test]
    fn softmax_is_a_distribution() {
        let p = softmax(&[1.0, 2.0, -1.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v > 0.0));
        assert!(p[1] > p[0] && p[0] > p[2]);
    }

    #[test]
    fn sampled_actions_follow_the_policy() {
        let mut rng = Rng::seed_from_u64(7);
        let agent = DiscreteSacAgent::new(2, 4, &[8], 0.2, 0.99, 0.99, &mut rng).unwrap();
        let probs = agent.policy(&[0.3, 0.7]).unwrap();
        let mut counts = vec![0usize; 4];
        for _ in 0..20_000 {
            counts[agent.sample_action(&[0.3, 0.7], &mut rng).unwrap()] += 1;
        }
        for (c, p) in counts.iter().zip(&probs) {
            let freq = *c as f64 / 20_000.0;
            assert!((freq - p).abs() < 0.02, "freq {freq} prob {p}");
        }
    }
}
