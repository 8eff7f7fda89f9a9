use trace_rl::agent::{run_training, TraceOptim, TrainLoopConfig};
use trace_rl::config::Hyperparameters;
use trace_rl::env::{Gridworld, GridworldConfig, StateEncoding};
use trace_rl::transfer::{build_trace_artifacts, init_cross_domain_target, TransferConfig};
use trace_rl::Rng;

fn hp() -> Hyperparameters {
    Hyperparameters {
        state_embed_dim: Some(5),
        state_embed_hiddens: vec![64, 32],
        ac_hiddens: vec![32, 32],
        actor_lr: 3e-4,
        critic_lr: 1e-3,
        action_embed_dim: 2,
        ..Hyperparameters::default()
    }
}

fn loop_cfg(hp: &Hyperparameters, episodes: usize) -> TrainLoopConfig {
    TrainLoopConfig {
        episodes,
        batch_size: hp.batch_size,
        warmup_steps: hp.warmup_steps,
        buffer_capacity: hp.buffer_capacity,
        proto_bound_scale: hp.proto_bound_scale,
    }
}

fn main() {
    let seed: u64 = std::env::args().nth(1).unwrap().parse().unwrap();
    let budget: usize = std::env::args()
        .nth(2)
        .map(|v| v.parse().unwrap())
        .unwrap_or(2000);
    let hp = hp();
    let mut rng = Rng::seed_from_u64(60 + seed);
    let mut source_env = Gridworld::new(GridworldConfig::default()).unwrap();
    let mut source = build_trace_artifacts(4, 4, &hp, &mut rng).unwrap();
    let mut optim = TraceOptim::new(&source, hp.actor_lr, hp.critic_lr, hp.transition_lr);
    run_training(&mut source_env, &mut source, &mut optim, &loop_cfg(&hp, 1200), &mut rng).unwrap();

    let onehot = GridworldConfig {
        encoding: StateEncoding::Onehot,
        ..GridworldConfig::default()
    };
    for (name, policy, transition) in [("pt", true, true), ("none", false, false)] {
        let cfg = TransferConfig {
            transfer_policy: policy,
            transfer_transition: transition,
            freeze_transition: false,
            baseline: Default::default(),
        };
        let mut trng = Rng::seed_from_u64(160 + seed);
        let mut env = Gridworld::new(onehot.clone()).unwrap();
        let mut target = init_cross_domain_target(&source, 44, 4, &cfg, &hp, &mut trng).unwrap();
        let mut topt = TraceOptim::new(&target, hp.actor_lr, hp.critic_lr, hp.transition_lr);
        let curve =
            run_training(&mut env, &mut target, &mut topt, &loop_cfg(&hp, budget), &mut trng)
                .unwrap();
        let rets: Vec<f64> = curve.iter().map(|r| r.ret).collect();
        let win100 = |e: usize| rets[e - 100..e].iter().sum::<f64>() / 100.0;
        let marks: Vec<(usize, f64)> = (400..=budget)
            .step_by(400)
            .map(|e| (e, (win100(e) * 100.0).round() / 100.0))
            .collect();
        println!("seed {seed} {name}: window-100 means {marks:?}");
    }
}
