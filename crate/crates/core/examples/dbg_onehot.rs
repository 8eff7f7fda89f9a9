use trace_rl::agent::{run_training, TraceOptim, TrainLoopConfig};
use trace_rl::config::Hyperparameters;
use trace_rl::env::{Gridworld, GridworldConfig, StateEncoding};
use trace_rl::transfer::build_trace_artifacts;
use trace_rl::Rng;

fn main() {
    let variant: String = std::env::args().nth(1).unwrap_or_default();
    let mut hp = Hyperparameters {
        state_embed_dim: Some(5),
        state_embed_hiddens: vec![32],
        ac_hiddens: vec![32, 32],
        actor_lr: 3e-4,
        critic_lr: 1e-3,
        ..Hyperparameters::default()
    };
    let mut embed_lr = 1e-3;
    match variant.as_str() {
        "b" => hp.state_embed_hiddens = vec![64, 32],
        "c" => embed_lr = 3e-3,
        "d" => hp.alpha = 0.05,
        "e" => hp.actor_lr = 1e-3,
        "f" => hp.state_embed_dim = Some(8),
        "g" => {
            hp.state_embed_hiddens = vec![64, 32];
            embed_lr = 3e-3;
        }
        "h" => hp.state_embed_hiddens = vec![128, 64],
        "i" => {
            hp.state_embed_hiddens = vec![64, 32];
            hp.ac_hiddens = vec![64, 64];
        }
        _ => {}
    }
    let cfg_env = GridworldConfig {
        n_steps: 1,
        encoding: StateEncoding::Onehot,
        ..GridworldConfig::default()
    };
    let mut rng = Rng::seed_from_u64(7);
    let mut env = Gridworld::new(cfg_env).unwrap();
    let mut arts = build_trace_artifacts(44, 4, &hp, &mut rng).unwrap();
    let mut optim = TraceOptim::new(&arts, hp.actor_lr, hp.critic_lr, hp.transition_lr);
    if let Some(e) = optim.sac.embedder.as_mut() {
        e.lr = embed_lr;
    }
    let cfg = TrainLoopConfig {
        episodes: 3000,
        batch_size: hp.batch_size,
        warmup_steps: hp.warmup_steps,
        buffer_capacity: hp.buffer_capacity,
        proto_bound_scale: hp.proto_bound_scale,
    };
    let curve = run_training(&mut env, &mut arts, &mut optim, &cfg, &mut rng).unwrap();
    for lo in (0..curve.len()).step_by(400) {
        let chunk = &curve[lo..(lo + 400).min(curve.len())];
        let mean: f64 = chunk.iter().map(|r| r.ret).sum::<f64>() / chunk.len() as f64;
        println!("{variant} ep {lo:4}-{:4}: mean {mean:7.3}", lo + chunk.len());
    }
}
