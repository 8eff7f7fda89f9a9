//! Soft actor-critic in action-embedding space, plus the discrete-action
//! baseline and the sequential training loop.

mod discrete;
mod replay;
mod sac;
mod training;

pub use discrete::{
    discrete_actor_loss, discrete_actor_loss_and_grads, discrete_critic_loss_and_grads,
    discrete_critic_regression_loss, discrete_critic_regression_loss_and_grads,
    discrete_critic_targets, discrete_sac_update, DiscreteSacAgent, DiscreteSacOptim,
};
pub use replay::ReplayBuffer;
pub use sac::{
    actor_loss, actor_loss_and_grads, critic_loss_and_grads, critic_regression_loss,
    critic_regression_loss_and_grads, critic_targets, effective_proto_bound, nearest_action,
    polyak_update,
    select_proto_action, sac_update, ActorGrads, CriticGrads, SacAgent, SacLossReport, SacOptim,
};
pub use training::{
    run_training, run_training_discrete, EpisodeRecord, TraceOptim, TrainLoopConfig,
};
