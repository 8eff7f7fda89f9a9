//! Transfer initialization: same-domain, cross-domain, and the basic-transfer
//! baseline.
//!
//! Same-domain transfer copies the policy and freezes the transferred
//! transition model so that freshly initialized target action embeddings are
//! pulled into the source model's geometry, aligning the two tasks' action
//! semantics. Cross-domain transfer additionally relearns a state embedder
//! into the shared feature space and finetunes (rather than freezes) the
//! transition model.

use serde::{Deserialize, Serialize};

use crate::agent::{
    run_training, DiscreteSacAgent, EpisodeRecord, SacAgent, TrainLoopConfig,
};
use crate::config::Hyperparameters;
use crate::embedding::{ActionEmbeddingTable, TransitionModel};
use crate::env::Environment;
use crate::nn::{Activation, Mlp, ParamBlocks, ParamGrads};
use crate::rng::Rng;
use crate::{Error, Result};

/// Map from raw task states into the feature space shared across tasks.
/// Identity in same-domain mode.
#[derive(Debug, Clone)]
pub struct StateEmbedder {
    net: Option<Mlp>,
    input_dim: usize,
    output_dim: usize,
}

impl StateEmbedder {
    pub fn identity(dim: usize) -> Self {
        Self {
            net: None,
            input_dim: dim,
            output_dim: dim,
        }
    }

    pub fn learned(input_dim: usize, hiddens: &[usize], output_dim: usize, rng: &mut Rng) -> Result<Self> {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hiddens);
        sizes.push(output_dim);
        Ok(Self {
            net: Some(Mlp::glorot(
                &sizes,
                Activation::Relu,
                Activation::Linear,
                rng,
            )?),
            input_dim,
            output_dim,
        })
    }

    /// Wrap an existing network as a learned embedder.
    pub fn from_net(net: Mlp) -> Self {
        Self {
            input_dim: net.input_dim(),
            output_dim: net.output_dim(),
            net: Some(net),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.net.is_none()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn net(&self) -> Option<&Mlp> {
        self.net.as_ref()
    }

    pub fn net_mut(&mut self) -> Option<&mut Mlp> {
        self.net.as_mut()
    }

    pub fn forward(&self, state: &[f64]) -> Vec<f64> {
        match &self.net {
            None => state.to_vec(),
            Some(net) => net.forward(state).expect("state width checked at build"),
        }
    }

    /// Forward pass keeping the trace needed for backprop (`None` when the
    /// embedder is the identity).
    pub fn forward_with_trace(&self, state: &[f64]) -> (Vec<f64>, Option<Vec<Vec<f64>>>) {
        match &self.net {
            None => (state.to_vec(), None),
            Some(net) => {
                let trace = net.forward_trace(state);
                (trace.last().unwrap().clone(), Some(trace))
            }
        }
    }

    pub fn backward_from_trace(
        &self,
        state: &[f64],
        trace: &[Vec<f64>],
        upstream: &[f64],
        grads: &mut ParamGrads,
    ) {
        if let Some(net) = &self.net {
            net.backward_from_trace(state, trace, upstream, grads);
        }
    }
}

impl ParamBlocks for StateEmbedder {
    fn param_blocks(&self) -> Vec<&[f64]> {
        self.net.as_ref().map(|n| n.param_blocks()).unwrap_or_default()
    }
    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.net
            .as_mut()
            .map(|n| n.param_blocks_mut())
            .unwrap_or_default()
    }
}

/// Which baseline, if any, a transfer run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    #[default]
    None,
    /// Basic transfer: reinitialize input/output layers, fine-tune the rest,
    /// no embeddings.
    Bt,
}

/// Flags selecting what crosses from the source run to the target run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferConfig {
    pub transfer_policy: bool,
    pub transfer_transition: bool,
    pub freeze_transition: bool,
    pub baseline: Baseline,
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if self.freeze_transition && !self.transfer_transition {
            return Err(Error::Config(
                "freeze_transition requires transfer_transition".into(),
            ));
        }
        if self.baseline == Baseline::Bt && (self.transfer_policy || self.transfer_transition) {
            return Err(Error::Config(
                "the bt baseline does not use transfer_policy/transfer_transition".into(),
            ));
        }
        Ok(())
    }
}

/// Everything a TRACE run owns: agent, transition model, action embeddings,
/// and the state embedder.
#[derive(Debug, Clone)]
pub struct TraceArtifacts {
    pub agent: SacAgent,
    pub model: TransitionModel,
    pub table: ActionEmbeddingTable,
    pub embedder: StateEmbedder,
}

/// Canonical construction order for a fresh TRACE setup. Transfer
/// initializers call this first and then overwrite the pieces they copy, so a
/// transfer with every flag off is bit-identical to training from scratch.
pub fn build_trace_artifacts(
    state_dim: usize,
    action_count: usize,
    hp: &Hyperparameters,
    rng: &mut Rng,
) -> Result<TraceArtifacts> {
    let table = ActionEmbeddingTable::init_uniform(action_count, hp.action_embed_dim, rng)?;
    let proto_bound = hp.proto_bound_scale * table.max_abs();
    let embedder = match hp.state_embed_dim {
        None => StateEmbedder::identity(state_dim),
        Some(m) => StateEmbedder::learned(state_dim, &hp.state_embed_hiddens, m, rng)?,
    };
    let m = embedder.output_dim();
    let agent = SacAgent::new(
        m,
        hp.action_embed_dim,
        &hp.ac_hiddens,
        hp.alpha,
        hp.gamma,
        hp.tau,
        proto_bound,
        rng,
    )?;
    let model = if hp.latent_transition {
        TransitionModel::new_latent(
            m,
            hp.action_embed_dim,
            hp.z_dim,
            &hp.z_hiddens,
            &hp.transition_hiddens,
            hp.beta,
            rng,
        )?
    } else {
        TransitionModel::new_deterministic(m, hp.action_embed_dim, &hp.transition_hiddens, rng)?
    };
    Ok(TraceArtifacts {
        agent,
        model,
        table,
        embedder,
    })
}

fn check_same_shape(context: &'static str, a: &Mlp, b: &Mlp) -> Result<()> {
    if a.layer_sizes() != b.layer_sizes() {
        return Err(Error::Config(format!(
            "{context}: source and target network shapes differ ({:?} vs {:?})",
            a.layer_sizes(),
            b.layer_sizes()
        )));
    }
    Ok(())
}

fn copy_policy(target: &mut SacAgent, source: &SacAgent) -> Result<()> {
    check_same_shape("transfer_policy actor", &target.actor, &source.actor)?;
    check_same_shape("transfer_policy critic", &target.critic1, &source.critic1)?;
    target.actor = source.actor.clone();
    target.critic1 = source.critic1.clone();
    target.critic2 = source.critic2.clone();
    target.target1 = source.target1.clone();
    target.target2 = source.target2.clone();
    Ok(())
}

/// Same-domain transfer: identical state spaces, different action sets.
///
/// Copies the policy (actor plus critics) under `transfer_policy`, copies and
/// optionally freezes the transition model under `transfer_transition`, and
/// always reinitializes the action-embedding table at the target shape from
/// the target seed.
pub fn init_same_domain_target(
    source: &TraceArtifacts,
    target_action_count: usize,
    cfg: &TransferConfig,
    hp: &Hyperparameters,
    rng: &mut Rng,
) -> Result<TraceArtifacts> {
    cfg.validate()?;
    if !source.embedder.is_identity() || hp.state_embed_dim.is_some() {
        return Err(Error::Config(
            "same-domain transfer expects identity state embedders; use the cross-domain path"
                .into(),
        ));
    }
    let mut target = build_trace_artifacts(source.embedder.input_dim(), target_action_count, hp, rng)?;
    if cfg.transfer_policy {
        copy_policy(&mut target.agent, &source.agent)?;
    }
    if cfg.transfer_transition {
        if source.model.state_dim() != target.model.state_dim()
            || source.model.action_dim() != target.model.action_dim()
        {
            return Err(Error::Config(
                "transition model dimensions do not match the target task".into(),
            ));
        }
        target.model = source.model.clone();
        target.model.frozen = cfg.freeze_transition;
    }
    Ok(target)
}

/// Cross-domain transfer: different state and action spaces, bridged by
/// learned state embedders into a common feature space of fixed width.
///
/// The policy and transition model are copied; the state embedder and action
/// embeddings are reinitialized for the target task. The transition model is
/// finetuned by default; `freeze_transition` is honored for comparison runs
/// but is expected to destabilize training.
pub fn init_cross_domain_target(
    source: &TraceArtifacts,
    target_state_dim: usize,
    target_action_count: usize,
    cfg: &TransferConfig,
    hp: &Hyperparameters,
    rng: &mut Rng,
) -> Result<TraceArtifacts> {
    cfg.validate()?;
    let m = match hp.state_embed_dim {
        Some(m) => m,
        None => {
            return Err(Error::Config(
                "cross-domain transfer needs a learned state embedder (state_embed_dim)".into(),
            ))
        }
    };
    if source.embedder.is_identity() {
        return Err(Error::Config(
            "cross-domain transfer needs a learned source state embedder".into(),
        ));
    }
    if source.embedder.output_dim() != m {
        return Err(Error::DimensionMismatch {
            context: "common feature space width",
            expected: source.embedder.output_dim(),
            got: m,
        });
    }
    let mut target = build_trace_artifacts(target_state_dim, target_action_count, hp, rng)?;
    if cfg.transfer_policy {
        copy_policy(&mut target.agent, &source.agent)?;
    }
    if cfg.transfer_transition {
        target.model = source.model.clone();
        target.model.frozen = cfg.freeze_transition;
    }
    Ok(target)
}

/// Basic-transfer baseline: copy the hidden stacks of the source networks and
/// reinitialize the input and output layers at the target dimensions. The
/// whole network stays trainable and operates on raw states and actions.
pub fn init_bt_target(
    source: &DiscreteSacAgent,
    target_state_dim: usize,
    target_action_count: usize,
    hp: &Hyperparameters,
    rng: &mut Rng,
) -> Result<DiscreteSacAgent> {
    let mut target = DiscreteSacAgent::new(
        target_state_dim,
        target_action_count,
        &hp.ac_hiddens,
        hp.alpha,
        hp.gamma,
        hp.tau,
        rng,
    )?;
    let pairs: [(&mut Mlp, &Mlp); 5] = [
        (&mut target.actor, &source.actor),
        (&mut target.critic1, &source.critic1),
        (&mut target.critic2, &source.critic2),
        (&mut target.target1, &source.target1),
        (&mut target.target2, &source.target2),
    ];
    for (dst, src) in pairs {
        let src_sizes = src.layer_sizes().to_vec();
        let dst_sizes = dst.layer_sizes().to_vec();
        if src_sizes.len() != dst_sizes.len()
            || src_sizes[1..src_sizes.len() - 1] != dst_sizes[1..dst_sizes.len() - 1]
        {
            return Err(Error::Config(format!(
                "bt transfer needs matching hidden stacks (source {src_sizes:?}, target {dst_sizes:?})"
            )));
        }
        // Copy every layer except the first (input) and last (output head).
        let layers = src.num_layers();
        for layer in 1..layers.saturating_sub(1) {
            dst.weights_mut(layer).copy_from_slice(src.weights(layer));
            dst.biases_mut(layer).copy_from_slice(src.biases(layer));
        }
    }
    Ok(target)
}

/// Train initialized target artifacts on the target task. The loop is the
/// source-task loop verbatim; frozen components receive no updates.
pub fn run_transfer(
    env: &mut dyn Environment,
    arts: &mut TraceArtifacts,
    optim: &mut crate::agent::TraceOptim,
    cfg: &TrainLoopConfig,
    rng: &mut Rng,
) -> Result<Vec<EpisodeRecord>> {
    run_training(env, arts, optim, cfg, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::TraceOptim;
    use crate::env::{Gridworld, GridworldConfig};

    fn hp_small() -> Hyperparameters {
        Hyperparameters {
            ac_hiddens: vec![8, 8],
            transition_hiddens: vec![8],
            batch_size: 8,
            warmup_steps: 16,
            buffer_capacity: 300,
            ..Hyperparameters::default()
        }
    }

    fn mlp_bits(mlp: &Mlp) -> Vec<u64> {
        mlp.param_blocks()
            .iter()
            .flat_map(|b| b.iter().map(|v| v.to_bits()))
            .collect()
    }

    #[test]
    fn trace_pt_copies_model_frozen_and_reinitializes_the_table() {
        let hp = hp_small();
        let mut rng = Rng::seed_from_u64(1);
        let source = build_trace_artifacts(4, 16, &hp, &mut rng).unwrap();
        let cfg = TransferConfig {
            transfer_policy: true,
            transfer_transition: true,
            freeze_transition: true,
            baseline: Baseline::None,
        };
        let mut trng = Rng::seed_from_u64(2);
        let target = init_same_domain_target(&source, 4, &cfg, &hp, &mut trng).unwrap();
        assert_eq!(mlp_bits(&target.model.decoder), mlp_bits(&source.model.decoder));
        assert!(target.model.frozen);
        assert_eq!(mlp_bits(&target.agent.actor), mlp_bits(&source.agent.actor));
        assert_eq!(target.table.action_count(), 4);
        assert_ne!(
            target.table.as_flat()[..8],
            source.table.as_flat()[..8],
            "target table must be freshly random"
        );
    }

    #[test]
    fn trace_p_reinitializes_the_model_and_copies_the_policy() {
        let hp = hp_small();
        let mut rng = Rng::seed_from_u64(3);
        let source = build_trace_artifacts(4, 16, &hp, &mut rng).unwrap();
        let cfg = TransferConfig {
            transfer_policy: true,
            ..TransferConfig::default()
        };
        let mut trng = Rng::seed_from_u64(4);
        let target = init_same_domain_target(&source, 4, &cfg, &hp, &mut trng).unwrap();
        assert_eq!(mlp_bits(&target.agent.actor), mlp_bits(&source.agent.actor));
        assert_ne!(mlp_bits(&target.model.decoder), mlp_bits(&source.model.decoder));
        assert!(!target.model.frozen);
    }

    #[test]
    fn trace_t_copies_the_model_and_keeps_a_fresh_policy() {
        let hp = hp_small();
        let mut rng = Rng::seed_from_u64(5);
        let source = build_trace_artifacts(4, 16, &hp, &mut rng).unwrap();
        let cfg = TransferConfig {
            transfer_transition: true,
            ..TransferConfig::default()
        };
        let mut trng = Rng::seed_from_u64(6);
        let target = init_same_domain_target(&source, 4, &cfg, &hp, &mut trng).unwrap();
        assert_eq!(mlp_bits(&target.model.decoder), mlp_bits(&source.model.decoder));
        assert_ne!(mlp_bits(&target.agent.actor), mlp_bits(&source.agent.actor));
    }

    #[test]
    fn no_transfer_equals_scratch_bit_for_bit() {
        let hp = hp_small();
        let mut srng = Rng::seed_from_u64(7);
        let source = build_trace_artifacts(4, 16, &hp, &mut srng).unwrap();

        let seed = 11;
        let cfg = TransferConfig::default();
        let mut rng_a = Rng::seed_from_u64(seed);
        let mut target = init_same_domain_target(&source, 4, &cfg, &hp, &mut rng_a).unwrap();
        let mut rng_b = Rng::seed_from_u64(seed);
        let mut scratch = build_trace_artifacts(4, 4, &hp, &mut rng_b).unwrap();

        let loop_cfg = TrainLoopConfig {
            episodes: 10,
            batch_size: hp.batch_size,
            warmup_steps: hp.warmup_steps,
            buffer_capacity: hp.buffer_capacity,
            proto_bound_scale: hp.proto_bound_scale,
        };
        let mut env_a = Gridworld::new(GridworldConfig::default()).unwrap();
        let mut env_b = Gridworld::new(GridworldConfig::default()).unwrap();
        let mut opt_a = TraceOptim::new(&target, 1e-3, 1e-3, 1e-3);
        let mut opt_b = TraceOptim::new(&scratch, 1e-3, 1e-3, 1e-3);
        let curve_a =
            run_transfer(&mut env_a, &mut target, &mut opt_a, &loop_cfg, &mut rng_a).unwrap();
        let curve_b =
            run_training(&mut env_b, &mut scratch, &mut opt_b, &loop_cfg, &mut rng_b).unwrap();
        assert_eq!(curve_a, curve_b);
        assert_eq!(mlp_bits(&target.agent.actor), mlp_bits(&scratch.agent.actor));
        assert_eq!(target.table.as_flat(), scratch.table.as_flat());
    }

    #[test]
    fn frozen_model_is_bit_identical_across_a_full_run() {
        let hp = hp_small();
        let mut srng = Rng::seed_from_u64(9);
        let source = build_trace_artifacts(4, 16, &hp, &mut srng).unwrap();
        let cfg = TransferConfig {
            transfer_policy: true,
            transfer_transition: true,
            freeze_transition: true,
            baseline: Baseline::None,
        };
        let mut rng = Rng::seed_from_u64(10);
        let mut target = init_same_domain_target(&source, 4, &cfg, &hp, &mut rng).unwrap();
        let before = mlp_bits(&target.model.decoder);
        let mut env = Gridworld::new(GridworldConfig::default()).unwrap();
        let mut optim = TraceOptim::new(&target, 1e-3, 1e-3, 1e-3);
        let loop_cfg = TrainLoopConfig {
            episodes: 15,
            batch_size: hp.batch_size,
            warmup_steps: hp.warmup_steps,
            buffer_capacity: hp.buffer_capacity,
            proto_bound_scale: hp.proto_bound_scale,
        };
        run_transfer(&mut env, &mut target, &mut optim, &loop_cfg, &mut rng).unwrap();
        assert_eq!(mlp_bits(&target.model.decoder), before);
        // The table, by contrast, must have moved.
        assert!(target
            .table
            .as_flat()
            .iter()
            .any(|v| v.abs() > 0.1));
    }

    #[test]
    fn cross_domain_copies_model_unfrozen_and_resizes_the_embedder() {
        let hp = Hyperparameters {
            state_embed_dim: Some(5),
            state_embed_hiddens: vec![8],
            ..hp_small()
        };
        let mut srng = Rng::seed_from_u64(12);
        let source = build_trace_artifacts(4, 4, &hp, &mut srng).unwrap();
        let cfg = TransferConfig {
            transfer_policy: true,
            transfer_transition: true,
            freeze_transition: false,
            baseline: Baseline::None,
        };
        let mut trng = Rng::seed_from_u64(13);
        let target = init_cross_domain_target(&source, 44, 4, &cfg, &hp, &mut trng).unwrap();
        assert!(!target.model.frozen);
        assert_eq!(mlp_bits(&target.model.decoder), mlp_bits(&source.model.decoder));
        assert_eq!(target.embedder.input_dim(), 44);
        assert_eq!(target.embedder.output_dim(), 5);
        assert_ne!(
            mlp_bits(target.embedder.net().unwrap()),
            mlp_bits(source.embedder.net().unwrap())
        );
    }

    #[test]
    fn bt_copies_hidden_layers_and_resizes_the_ends() {
        let hp = hp_small();
        let mut srng = Rng::seed_from_u64(14);
        let source = DiscreteSacAgent::new(4, 16, &hp.ac_hiddens, 0.2, 0.99, 0.99, &mut srng)
            .unwrap();
        let mut trng = Rng::seed_from_u64(15);
        let target = init_bt_target(&source, 44, 4, &hp, &mut trng).unwrap();
        assert_eq!(target.actor.layer_sizes(), &[44, 8, 8, 4]);
        // The middle layer (8 -> 8) is bit-copied.
        assert_eq!(target.actor.weights(1), source.actor.weights(1));
        assert_eq!(target.actor.biases(1), source.actor.biases(1));
        // Input and output layers are fresh.
        assert_ne!(target.actor.weights(2), source.actor.weights(2));
    }

    #[test]
    fn transfer_config_invariants_are_enforced() {
        assert!(TransferConfig {
            freeze_transition: true,
            ..TransferConfig::default()
        }
        .validate()
        .is_err());
        assert!(TransferConfig {
            baseline: Baseline::Bt,
            transfer_policy: true,
            ..TransferConfig::default()
        }
        .validate()
        .is_err());
    }
}
