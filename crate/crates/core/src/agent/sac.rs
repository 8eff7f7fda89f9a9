//! Continuous proto-action soft actor-critic.
//!
//! The actor emits a Gaussian over proto-actions in embedding space, squashed
//! to `±proto_bound` by tanh; the executed discrete action is the nearest
//! embedding row. Twin critics with Polyak-averaged targets score
//! (state embedding ⊕ proto-action) pairs.

use crate::embedding::ActionEmbeddingTable;
use crate::env::Transition;
use crate::nn::{
    adam_step, clamp_log_sigma, log_one_minus_tanh_sq, AdamState, Activation, Mlp, ParamBlocks,
    ParamGrads, LOG_SIGMA_MAX, LOG_SIGMA_MIN,
};
use crate::rng::Rng;
use crate::transfer::StateEmbedder;
use crate::{Error, Result};

const HALF_LN_TWO_PI: f64 = 0.9189385332046727;

/// Actor, twin critics, their Polyak targets, and the SAC scalars.
#[derive(Debug, Clone)]
pub struct SacAgent {
    pub actor: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub target1: Mlp,
    pub target2: Mlp,
    /// Entropy temperature.
    pub alpha: f64,
    /// Discount factor.
    pub gamma: f64,
    /// Target retention: target <- tau * target + (1 - tau) * online.
    pub tau: f64,
    /// Tanh squash scale for proto-actions.
    pub proto_bound: f64,
}

impl SacAgent {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        state_dim: usize,
        proto_dim: usize,
        hiddens: &[usize],
        alpha: f64,
        gamma: f64,
        tau: f64,
        proto_bound: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if proto_bound <= 0.0 {
            return Err(Error::Config("proto_bound must be positive".into()));
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::Config("tau must lie in [0, 1]".into()));
        }
        let mut actor_sizes = vec![state_dim];
        actor_sizes.extend_from_slice(hiddens);
        actor_sizes.push(2 * proto_dim);
        let mut critic_sizes = vec![state_dim + proto_dim];
        critic_sizes.extend_from_slice(hiddens);
        critic_sizes.push(1);
        let actor = Mlp::glorot(&actor_sizes, Activation::Relu, Activation::Linear, rng)?;
        let critic1 = Mlp::glorot(&critic_sizes, Activation::Relu, Activation::Linear, rng)?;
        let critic2 = Mlp::glorot(&critic_sizes, Activation::Relu, Activation::Linear, rng)?;
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
            proto_bound,
        })
    }

    pub fn proto_dim(&self) -> usize {
        self.actor.output_dim() / 2
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }
}

/// Split raw actor output into mean and clamped log-sigma heads.
fn actor_heads(out: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let d = out.len() / 2;
    let mu = out[..d].to_vec();
    let ls_raw = out[d..].to_vec();
    let ls = ls_raw.iter().map(|&v| clamp_log_sigma(v)).collect();
    (mu, ls_raw, ls)
}

/// Squashed-Gaussian log density of the proto-action produced from `noise`.
fn squashed_log_prob(agent: &SacAgent, ls: &[f64], u: &[f64], noise: &[f64]) -> f64 {
    let mut lp = 0.0;
    for j in 0..u.len() {
        lp += -0.5 * noise[j] * noise[j] - ls[j] - HALF_LN_TWO_PI;
        lp -= agent.proto_bound.ln() + log_one_minus_tanh_sq(u[j]);
    }
    lp
}

/// Emit a proto-action for a state embedding.
///
/// Stochastic mode reparameterizes with the provided standard-normal `noise`;
/// deterministic mode squashes the mean. The returned log-probability is the
/// tanh-corrected density of the emitted proto-action.
pub fn select_proto_action(
    agent: &SacAgent,
    state_emb: &[f64],
    stochastic: bool,
    noise: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let out = agent.actor.forward(state_emb)?;
    let (mu, _, ls) = actor_heads(&out);
    let d = mu.len();
    if stochastic && noise.len() != d {
        return Err(Error::DimensionMismatch {
            context: "proto-action noise",
            expected: d,
            got: noise.len(),
        });
    }
    let zero_noise = vec![0.0; d];
    let eps: &[f64] = if stochastic { noise } else { &zero_noise };
    let u: Vec<f64> = (0..d).map(|j| mu[j] + ls[j].exp() * eps[j]).collect();
    let proto: Vec<f64> = u.iter().map(|&uj| agent.proto_bound * uj.tanh()).collect();
    let log_prob = squashed_log_prob(agent, &ls, &u, eps);
    Ok((proto, log_prob))
}

/// Tanh squash bound for proto-actions: `scale` times the largest current
/// |table entry|, floored away from zero.
///
/// The bound must track the table as it trains. Embedding rows grow well
/// beyond their init range, and combos with zero net effect settle near the
/// origin; a bound frozen at the init scale would trap every proto-action
/// inside that near-origin cluster and the nearest-neighbor map would lose
/// all selectivity.
pub fn effective_proto_bound(scale: f64, table: &ActionEmbeddingTable) -> f64 {
    (scale * table.max_abs()).max(1e-3)
}

/// Nearest-neighbor discretization: the action whose embedding row minimizes
/// the L2 distance to the proto-action. Ties break toward the lowest index.
pub fn nearest_action(table: &ActionEmbeddingTable, proto: &[f64]) -> Result<usize> {
    if table.action_count() == 0 {
        return Err(Error::Empty {
            what: "embedding table",
        });
    }
    if proto.len() != table.dim() {
        return Err(Error::DimensionMismatch {
            context: "nearest_action proto width",
            expected: table.dim(),
            got: proto.len(),
        });
    }
    let mut best = 0;
    let mut best_d2 = f64::INFINITY;
    for i in 0..table.action_count() {
        let row = table.row(i)?;
        let d2: f64 = row
            .iter()
            .zip(proto)
            .map(|(r, p)| (r - p) * (r - p))
            .sum();
        if d2 < best_d2 {
            best_d2 = d2;
            best = i;
        }
    }
    Ok(best)
}

/// Gradients from the critic regression loss.
#[derive(Debug)]
pub struct CriticGrads {
    pub critic1: ParamGrads,
    pub critic2: ParamGrads,
    pub embedder: Option<ParamGrads>,
    pub mean_q: f64,
}

/// Gradients from the actor (policy improvement) loss.
#[derive(Debug)]
pub struct ActorGrads {
    pub actor: ParamGrads,
}

/// Losses reported by one [`sac_update`].
#[derive(Debug, Clone, Copy)]
pub struct SacLossReport {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub mean_q: f64,
}

/// Optimizers owned by the SAC update.
#[derive(Debug, Clone)]
pub struct SacOptim {
    pub actor: AdamState,
    pub critic1: AdamState,
    pub critic2: AdamState,
    pub embedder: Option<AdamState>,
}

impl SacOptim {
    pub fn new(
        agent: &SacAgent,
        embedder: &StateEmbedder,
        actor_lr: f64,
        critic_lr: f64,
    ) -> Self {
        Self {
            actor: AdamState::for_mlp(&agent.actor, actor_lr),
            critic1: AdamState::for_mlp(&agent.critic1, critic_lr),
            critic2: AdamState::for_mlp(&agent.critic2, critic_lr),
            // The embedder serves the value function first; it trains at the
            // critic rate.
            embedder: embedder.net().map(|net| AdamState::for_mlp(net, critic_lr)),
        }
    }
}

/// Detached Bellman targets
/// `r + gamma (1 - done) (min targetQ(s', a') - alpha log pi(a'|s'))`
/// with a' freshly sampled from the current actor at s'.
pub fn critic_targets(
    agent: &SacAgent,
    embedder: &StateEmbedder,
    batch: &[Transition],
    next_noise: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let d = agent.proto_dim();
    let mut targets = Vec::with_capacity(batch.len());
    for (i, t) in batch.iter().enumerate() {
        let s2_emb = embedder.forward(&t.next_state);
        let out2 = agent.actor.forward(&s2_emb)?;
        let (mu2, _, ls2) = actor_heads(&out2);
        let eps = &next_noise[i];
        let u2: Vec<f64> = (0..d).map(|j| mu2[j] + ls2[j].exp() * eps[j]).collect();
        let a2: Vec<f64> = u2.iter().map(|&u| agent.proto_bound * u.tanh()).collect();
        let logp2 = squashed_log_prob(agent, &ls2, &u2, eps);
        let mut x2 = s2_emb.clone();
        x2.extend_from_slice(&a2);
        let tq1 = agent.target1.forward(&x2)?[0];
        let tq2 = agent.target2.forward(&x2)?[0];
        targets.push(
            t.reward
                + agent.gamma
                    * (1.0 - t.done as u8 as f64)
                    * (tq1.min(tq2) - agent.alpha * logp2),
        );
    }
    Ok(targets)
}

/// Squared-error regression of both critics toward fixed targets, evaluated
/// without producing gradients.
pub fn critic_regression_loss(
    agent: &SacAgent,
    embedder: &StateEmbedder,
    batch: &[Transition],
    targets: &[f64],
) -> Result<f64> {
    let inv_n = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (t, &y) in batch.iter().zip(targets) {
        let s_emb = embedder.forward(&t.state);
        let mut x = s_emb;
        x.extend_from_slice(&t.proto_action);
        let q1 = agent.critic1.forward(&x)?[0];
        let q2 = agent.critic2.forward(&x)?[0];
        loss += (q1 - y) * (q1 - y) + (q2 - y) * (q2 - y);
    }
    Ok(loss * inv_n)
}

/// Regression loss plus gradients for both critics and (when learned) the
/// state embedder through the critics' state inputs.
pub fn critic_regression_loss_and_grads(
    agent: &SacAgent,
    embedder: &StateEmbedder,
    batch: &[Transition],
    targets: &[f64],
) -> Result<(f64, CriticGrads)> {
    let d = agent.proto_dim();
    let inv_n = 1.0 / batch.len() as f64;
    let mut grads = CriticGrads {
        critic1: ParamGrads::zeros_like(&agent.critic1),
        critic2: ParamGrads::zeros_like(&agent.critic2),
        embedder: embedder.net().map(ParamGrads::zeros_like),
        mean_q: 0.0,
    };
    let mut loss = 0.0;

    for (t, &y) in batch.iter().zip(targets) {
        if t.proto_action.len() != d {
            return Err(Error::DimensionMismatch {
                context: "stored proto-action width",
                expected: d,
                got: t.proto_action.len(),
            });
        }
        let (s_emb, s_trace) = embedder.forward_with_trace(&t.state);
        let mut x = s_emb.clone();
        x.extend_from_slice(&t.proto_action);
        let trace1 = agent.critic1.forward_trace(&x);
        let trace2 = agent.critic2.forward_trace(&x);
        let q1 = trace1.last().unwrap()[0];
        let q2 = trace2.last().unwrap()[0];
        loss += (q1 - y) * (q1 - y) + (q2 - y) * (q2 - y);
        grads.mean_q += q1 * inv_n;

        let up1 = [2.0 * (q1 - y) * inv_n];
        let up2 = [2.0 * (q2 - y) * inv_n];
        let in1 = agent
            .critic1
            .backward_from_trace(&x, &trace1, &up1, &mut grads.critic1);
        let in2 = agent
            .critic2
            .backward_from_trace(&x, &trace2, &up2, &mut grads.critic2);

        if let (Some(eg), Some(tr)) = (grads.embedder.as_mut(), s_trace.as_ref()) {
            let m = s_emb.len();
            let upstream: Vec<f64> = (0..m).map(|k| in1[k] + in2[k]).collect();
            embedder.backward_from_trace(&t.state, tr, &upstream, eg);
        }
    }
    Ok((loss * inv_n, grads))
}

/// Full critic loss: compute detached targets, then regress.
pub fn critic_loss_and_grads(
    agent: &SacAgent,
    embedder: &StateEmbedder,
    batch: &[Transition],
    next_noise: &[Vec<f64>],
) -> Result<(f64, CriticGrads)> {
    let targets = critic_targets(agent, embedder, batch, next_noise)?;
    critic_regression_loss_and_grads(agent, embedder, batch, &targets)
}

/// The policy-improvement objective evaluated without gradients.
pub fn actor_loss(
    agent: &SacAgent,
    embedder: &StateEmbedder,
    batch: &[Transition],
    noise: &[Vec<f64>],
) -> Result<f64> {
    let d = agent.proto_dim();
    let inv_n = 1.0 / batch.len() as f64;
    let b = agent.proto_bound;
    let mut loss = 0.0;
    for (i, t) in batch.iter().enumerate() {
        let s_emb = embedder.forward(&t.state);
        let out = agent.actor.forward(&s_emb)?;
        let (mu, _, ls) = actor_heads(&out);
        let eps = &noise[i];
        let u: Vec<f64> = (0..d).map(|j| mu[j] + ls[j].exp() * eps[j]).collect();
        let a: Vec<f64> = u.iter().map(|&v| b * v.tanh()).collect();
        let logp = squashed_log_prob(agent, &ls, &u, eps);
        let mut x = s_emb;
        x.extend_from_slice(&a);
        let q1 = agent.critic1.forward(&x)?[0];
        let q2 = agent.critic2.forward(&x)?[0];
        loss += agent.alpha * logp - q1.min(q2);
    }
    Ok(loss * inv_n)
}

/// Reparameterized policy-improvement loss
/// `mean(alpha log pi(a|s) - min Q(s, a))`.
///
/// Gradients reach the actor only. The critics act as fixed differentiable
/// functions of the proto-action, and the state embedding enters as a fixed
/// input; the embedder trains on the critic loss.
pub fn actor_loss_and_grads(
    agent: &SacAgent,
    embedder: &StateEmbedder,
    batch: &[Transition],
    noise: &[Vec<f64>],
) -> Result<(f64, ActorGrads)> {
    let d = agent.proto_dim();
    let inv_n = 1.0 / batch.len() as f64;
    let b = agent.proto_bound;
    let mut grads = ActorGrads {
        actor: ParamGrads::zeros_like(&agent.actor),
    };
    let mut loss = 0.0;

    for (i, t) in batch.iter().enumerate() {
        let s_emb = embedder.forward(&t.state);
        let actor_trace = agent.actor.forward_trace(&s_emb);
        let out = actor_trace.last().unwrap().clone();
        let (mu, ls_raw, ls) = actor_heads(&out);
        let eps = &noise[i];
        let u: Vec<f64> = (0..d).map(|j| mu[j] + ls[j].exp() * eps[j]).collect();
        let tanh_u: Vec<f64> = u.iter().map(|&v| v.tanh()).collect();
        let a: Vec<f64> = tanh_u.iter().map(|&v| b * v).collect();
        let logp = squashed_log_prob(agent, &ls, &u, eps);

        let mut x = s_emb.clone();
        x.extend_from_slice(&a);
        let trace1 = agent.critic1.forward_trace(&x);
        let trace2 = agent.critic2.forward_trace(&x);
        let q1 = trace1.last().unwrap()[0];
        let q2 = trace2.last().unwrap()[0];
        let (qmin, sel_trace, sel_critic) = if q1 <= q2 {
            (q1, &trace1, &agent.critic1)
        } else {
            (q2, &trace2, &agent.critic2)
        };
        loss += agent.alpha * logp - qmin;

        // d(loss)/d(critic input), including the -1/N factor.
        let critic_in_grad = sel_critic.input_grad_from_trace(&x, sel_trace, &[-inv_n]);

        // Chain into the actor heads.
        let m = s_emb.len();
        let mut head_grad = vec![0.0; 2 * d];
        for j in 0..d {
            let du = critic_in_grad[m + j] * b * (1.0 - tanh_u[j] * tanh_u[j])
                + inv_n * agent.alpha * 2.0 * tanh_u[j];
            head_grad[j] = du;
            let in_range = ls_raw[j] > LOG_SIGMA_MIN && ls_raw[j] < LOG_SIGMA_MAX;
            if in_range {
                head_grad[d + j] = du * ls[j].exp() * eps[j] - inv_n * agent.alpha;
            }
        }
        agent
            .actor
            .backward_from_trace(&s_emb, &actor_trace, &head_grad, &mut grads.actor);
    }
    Ok((loss * inv_n, grads))
}

/// Polyak averaging: `target <- tau * target + (1 - tau) * online`.
pub fn polyak_update(target: &mut Mlp, online: &Mlp, tau: f64) {
    let online_blocks = online.param_blocks();
    for (tb, ob) in target.param_blocks_mut().into_iter().zip(online_blocks) {
        for (t, o) in tb.iter_mut().zip(ob) {
            *t = tau * *t + (1.0 - tau) * *o;
        }
    }
}

/// One full SAC update: critic regression (which also trains a learned state
/// embedder), actor improvement, then Polyak averaging of the target critics.
pub fn sac_update(
    agent: &mut SacAgent,
    embedder: &mut StateEmbedder,
    batch: &[Transition],
    optim: &mut SacOptim,
    rng: &mut Rng,
) -> Result<SacLossReport> {
    if batch.len() < 2 {
        return Err(Error::BatchTooSmall {
            min: 2,
            got: batch.len(),
        });
    }
    let d = agent.proto_dim();
    let next_noise: Vec<Vec<f64>> = (0..batch.len()).map(|_| rng.normal_vec(d)).collect();
    let actor_noise: Vec<Vec<f64>> = (0..batch.len()).map(|_| rng.normal_vec(d)).collect();

    let (critic_loss, cgrads) = critic_loss_and_grads(agent, embedder, batch, &next_noise)?;
    let (actor_loss, agrads) = actor_loss_and_grads(agent, embedder, batch, &actor_noise)?;

    adam_step(&mut agent.critic1, &cgrads.critic1, &mut optim.critic1)?;
    adam_step(&mut agent.critic2, &cgrads.critic2, &mut optim.critic2)?;
    adam_step(&mut agent.actor, &agrads.actor, &mut optim.actor)?;
    if let (Some(net), Some(opt)) = (embedder.net_mut(), optim.embedder.as_mut()) {
        let egrads = cgrads.embedder.expect("learned embedder has critic grads");
        adam_step(net, &egrads, opt)?;
    }

    polyak_update(&mut agent.target1, &agent.critic1, agent.tau);
    polyak_update(&mut agent.target2, &agent.critic2, agent.tau);

    Ok(SacLossReport {
        critic_loss,
        actor_loss,
        mean_q: cgrads.mean_q,
    })
}
