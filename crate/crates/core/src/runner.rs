//! Multi-seed experiment orchestration and result export.
//!
//! Each seed is an independent run: one curve CSV and one checkpoint. A
//! manifest recording the resolved configuration is written next to the
//! results; re-running any command from its manifest reproduces every output
//! byte for byte.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{
    run_training, run_training_discrete, DiscreteSacAgent, DiscreteSacOptim, EpisodeRecord,
    TrainLoopConfig, TraceOptim,
};
use crate::analysis::{bootstrap_band, cluster_quality, episodes_to_threshold, monotonicity_check, pca_project};
use crate::checkpoint::{
    discrete_checkpoint, restore_discrete_agent, restore_trace_artifacts, trace_checkpoint,
    Checkpoint,
};
use crate::config::{Algorithm, ExperimentConfig};
use crate::embedding::{fit_embeddings_offline, ActionEmbeddingTable, TransitionModel};
use crate::env::{collect_random_transitions, net_displacement, write_transitions};
use crate::rng::Rng;
use crate::transfer::{
    build_trace_artifacts, init_bt_target, init_cross_domain_target, init_same_domain_target,
    StateEmbedder,
};
use crate::{Error, Result};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// Provenance record written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format_version: u32,
    pub command: String,
    pub config: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_checkpoint: Option<PathBuf>,
}

/// Cap on concurrent seed workers, from `TRACE_RL_THREADS` (default: all
/// available cores, at most the seed count).
pub fn worker_cap(seeds: usize) -> usize {
    let from_env = std::env::var("TRACE_RL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1);
    let cores = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    from_env.unwrap_or(cores).min(seeds.max(1))
}

/// Run `f` once per seed, at most `cap` workers at a time. Results come back
/// in seed order regardless of scheduling.
pub fn map_seeds<T, F>(seeds: &[u64], cap: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let f = &f;
    let mut out = Vec::with_capacity(seeds.len());
    for chunk in seeds.chunks(cap.max(1)) {
        let mut results: Vec<Option<Result<T>>> = (0..chunk.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for &seed in chunk {
                handles.push(scope.spawn(move || f(seed)));
            }
            for (slot, handle) in results.iter_mut().zip(handles) {
                *slot = Some(handle.join().expect("seed worker panicked"));
            }
        });
        for r in results {
            out.push(r.expect("worker result present")?);
        }
    }
    Ok(out)
}

pub fn write_curve_csv(path: &Path, curve: &[EpisodeRecord]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(b"episode,return,steps\n")?;
    let mut body = String::new();
    for (i, rec) in curve.iter().enumerate() {
        body.push_str(&format!("{},{},{}\n", i + 1, rec.ret, rec.steps));
    }
    file.write_all(body.as_bytes())?;
    Ok(())
}

/// Parse the `return` column of a curve CSV.
pub fn read_curve_csv(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{}: empty curve file", path.display())))?;
    let col = header
        .split(',')
        .position(|c| c.trim() == "return")
        .ok_or_else(|| Error::Config(format!("{}: no `return` column", path.display())))?;
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let field = line.split(',').nth(col).ok_or_else(|| {
            Error::Config(format!("{}: short row on line {}", path.display(), lineno + 2))
        })?;
        out.push(field.trim().parse::<f64>().map_err(|e| {
            Error::Config(format!("{}: bad return on line {}: {e}", path.display(), lineno + 2))
        })?);
    }
    Ok(out)
}

fn write_loss_csv(path: &Path, losses: &[f64]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(b"epoch,loss\n")?;
    let mut body = String::new();
    for (i, l) in losses.iter().enumerate() {
        body.push_str(&format!("{},{}\n", i + 1, l));
    }
    file.write_all(body.as_bytes())?;
    Ok(())
}

fn loop_config(config: &ExperimentConfig) -> TrainLoopConfig {
    let hp = &config.hyperparameters;
    TrainLoopConfig {
        episodes: config.budget,
        batch_size: hp.batch_size,
        warmup_steps: hp.warmup_steps,
        buffer_capacity: hp.buffer_capacity,
        proto_bound_scale: hp.proto_bound_scale,
    }
}

fn curve_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("curve_seed{seed}.csv"))
}

fn checkpoint_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("checkpoint_seed{seed}.bin"))
}

fn final_window_mean(curve: &[EpisodeRecord], window: usize) -> f64 {
    if curve.is_empty() {
        return 0.0;
    }
    let tail = &curve[curve.len().saturating_sub(window)..];
    tail.iter().map(|r| r.ret).sum::<f64>() / tail.len() as f64
}

fn write_manifest(
    dir: &Path,
    command: &str,
    config: &ExperimentConfig,
    source: Option<&Path>,
) -> Result<()> {
    let manifest = RunManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        command: command.to_string(),
        config: config.clone(),
        source_checkpoint: source.map(|p| p.to_path_buf()),
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

/// One source-training run (Algorithm 1) per seed.
pub fn cmd_train(config: &ExperimentConfig, quiet: bool) -> Result<()> {
    config.validate()?;
    if config.algorithm == Algorithm::Bt {
        return Err(Error::Config(
            "the bt baseline needs a source checkpoint; use the transfer command".into(),
        ));
    }
    std::fs::create_dir_all(&config.output_dir)?;
    let spec = config.env.spec()?;
    let cap = worker_cap(config.seeds.len());
    let results = map_seeds(&config.seeds, cap, |seed| -> Result<(Vec<EpisodeRecord>, Checkpoint)> {
        let mut rng = Rng::seed_from_u64(seed);
        let mut env = config.env.build()?;
        let hp = &config.hyperparameters;
        match config.algorithm {
            Algorithm::Trace | Algorithm::TraceNoTransfer => {
                let mut arts = build_trace_artifacts(spec.state_dim, spec.action_count, hp, &mut rng)?;
                let mut optim =
                    TraceOptim::new(&arts, hp.actor_lr, hp.critic_lr, hp.transition_lr);
                let curve =
                    run_training(env.as_mut(), &mut arts, &mut optim, &loop_config(config), &mut rng)?;
                let ck = trace_checkpoint(config, seed, curve.len() as u64, &rng, &arts)?;
                Ok((curve, ck))
            }
            Algorithm::SacDiscrete => {
                let mut agent = DiscreteSacAgent::new(
                    spec.state_dim,
                    spec.action_count,
                    &hp.ac_hiddens,
                    hp.alpha,
                    hp.gamma,
                    hp.tau,
                    &mut rng,
                )?;
                let mut optim = DiscreteSacOptim::new(&agent, hp.actor_lr, hp.critic_lr);
                let curve = run_training_discrete(
                    env.as_mut(),
                    &mut agent,
                    &mut optim,
                    &loop_config(config),
                    &mut rng,
                )?;
                let ck = discrete_checkpoint(config, seed, curve.len() as u64, &rng, &agent)?;
                Ok((curve, ck))
            }
            Algorithm::Bt => unreachable!("rejected above"),
        }
    })?;

    for (seed, (curve, ck)) in config.seeds.iter().zip(&results) {
        write_curve_csv(&curve_path(&config.output_dir, *seed), curve)?;
        ck.save(&checkpoint_path(&config.output_dir, *seed))?;
        if !quiet {
            println!(
                "seed {seed}: {} episodes, final-100 mean return {:.3}",
                curve.len(),
                final_window_mean(curve, 100)
            );
        }
    }
    write_manifest(&config.output_dir, "train", config, None)?;
    Ok(())
}

/// Target-task training initialized from a source checkpoint (Algorithm 2,
/// the ablations, and the basic-transfer baseline).
pub fn cmd_transfer(config: &ExperimentConfig, source_path: &Path, quiet: bool) -> Result<()> {
    config.validate()?;
    let source_ck = Checkpoint::load(source_path)?;
    let source_config = &source_ck.header.config;
    if source_config.env.family() != config.env.family() {
        return Err(Error::Config(format!(
            "source env family {} does not match target {}",
            source_config.env.family(),
            config.env.family()
        )));
    }
    std::fs::create_dir_all(&config.output_dir)?;
    let spec = config.env.spec()?;
    let source_spec = source_config.env.spec()?;
    let hp = &config.hyperparameters;
    let cap = worker_cap(config.seeds.len());

    let results = map_seeds(&config.seeds, cap, |seed| -> Result<(Vec<EpisodeRecord>, Checkpoint)> {
        let mut rng = Rng::seed_from_u64(seed);
        let mut env = config.env.build()?;
        match config.algorithm {
            Algorithm::Trace | Algorithm::TraceNoTransfer => {
                let source = restore_trace_artifacts(&source_ck)?;
                let same_domain =
                    source.embedder.is_identity() && hp.state_embed_dim.is_none();
                let mut arts = if same_domain {
                    if source_spec.state_dim != spec.state_dim {
                        return Err(Error::Config(format!(
                            "state dims differ ({} vs {}); use learned state embedders for \
                             cross-domain transfer",
                            source_spec.state_dim, spec.state_dim
                        )));
                    }
                    init_same_domain_target(&source, spec.action_count, &config.transfer, hp, &mut rng)?
                } else {
                    init_cross_domain_target(
                        &source,
                        spec.state_dim,
                        spec.action_count,
                        &config.transfer,
                        hp,
                        &mut rng,
                    )?
                };
                let mut optim =
                    TraceOptim::new(&arts, hp.actor_lr, hp.critic_lr, hp.transition_lr);
                let curve =
                    run_training(env.as_mut(), &mut arts, &mut optim, &loop_config(config), &mut rng)?;
                let ck = trace_checkpoint(config, seed, curve.len() as u64, &rng, &arts)?;
                Ok((curve, ck))
            }
            Algorithm::Bt => {
                match source_config.algorithm {
                    Algorithm::SacDiscrete | Algorithm::Bt => {}
                    _ => {
                        return Err(Error::Config(
                            "bt transfer needs a sac-discrete (or bt) source checkpoint".into(),
                        ))
                    }
                }
                let source = restore_discrete_agent(&source_ck)?;
                let mut agent =
                    init_bt_target(&source, spec.state_dim, spec.action_count, hp, &mut rng)?;
                let mut optim = DiscreteSacOptim::new(&agent, hp.actor_lr, hp.critic_lr);
                let curve = run_training_discrete(
                    env.as_mut(),
                    &mut agent,
                    &mut optim,
                    &loop_config(config),
                    &mut rng,
                )?;
                let ck = discrete_checkpoint(config, seed, curve.len() as u64, &rng, &agent)?;
                Ok((curve, ck))
            }
            Algorithm::SacDiscrete => Err(Error::Config(
                "sac-discrete trains from scratch; use the train command".into(),
            )),
        }
    })?;

    for (seed, (curve, ck)) in config.seeds.iter().zip(&results) {
        write_curve_csv(&curve_path(&config.output_dir, *seed), curve)?;
        ck.save(&checkpoint_path(&config.output_dir, *seed))?;
        if !quiet {
            println!(
                "seed {seed}: {} episodes, final-100 mean return {:.3}",
                curve.len(),
                final_window_mean(curve, 100)
            );
        }
    }
    write_manifest(&config.output_dir, "transfer", config, Some(source_path))?;
    Ok(())
}

/// Offline embedding learning: random-policy data, then minibatch epochs of
/// the embedding objective. Exports the table and the loss history per seed.
pub fn cmd_embed(config: &ExperimentConfig, quiet: bool) -> Result<()> {
    config.validate()?;
    std::fs::create_dir_all(&config.output_dir)?;
    let spec = config.env.spec()?;
    let hp = &config.hyperparameters;
    let cap = worker_cap(config.seeds.len());

    let results = map_seeds(
        &config.seeds,
        cap,
        |seed| -> Result<(ActionEmbeddingTable, Vec<f64>, Option<Vec<crate::env::Transition>>)> {
            let mut rng = Rng::seed_from_u64(seed);
            let mut env = config.env.build()?;
            let data = collect_random_transitions(env.as_mut(), hp.embed_samples, &mut rng, None)?;
            let embedder = match hp.state_embed_dim {
                None => StateEmbedder::identity(spec.state_dim),
                Some(m) => {
                    StateEmbedder::learned(spec.state_dim, &hp.state_embed_hiddens, m, &mut rng)?
                }
            };
            let mut table =
                ActionEmbeddingTable::init_uniform(spec.action_count, hp.action_embed_dim, &mut rng)?;
            let m = embedder.output_dim();
            let mut model = if hp.latent_transition {
                TransitionModel::new_latent(
                    m,
                    hp.action_embed_dim,
                    hp.z_dim,
                    &hp.z_hiddens,
                    &hp.transition_hiddens,
                    hp.beta,
                    &mut rng,
                )?
            } else {
                TransitionModel::new_deterministic(
                    m,
                    hp.action_embed_dim,
                    &hp.transition_hiddens,
                    &mut rng,
                )?
            };
            let history = fit_embeddings_offline(
                &mut model,
                &mut table,
                &data,
                &embedder,
                hp.embed_epochs,
                hp.batch_size,
                hp.transition_lr,
                &mut rng,
            )?;
            let saved = hp.save_transitions.then_some(data);
            Ok((table, history, saved))
        },
    )?;

    for (seed, (table, history, data)) in config.seeds.iter().zip(&results) {
        table.export_csv(&config.output_dir.join(format!("embeddings_seed{seed}.csv")))?;
        write_loss_csv(
            &config.output_dir.join(format!("embed_loss_seed{seed}.csv")),
            history,
        )?;
        if let Some(data) = data {
            write_transitions(
                &config.output_dir.join(format!("transitions_seed{seed}.jsonl")),
                data,
            )?;
        }
        if !quiet {
            let first = history.first().copied().unwrap_or(0.0);
            let last = history.last().copied().unwrap_or(0.0);
            println!("seed {seed}: embedding loss {first:.5} -> {last:.5}");
        }
    }
    write_manifest(&config.output_dir, "embed", config, None)?;
    Ok(())
}

/// What `analyze` should compute.
#[derive(Debug, Clone)]
pub enum AnalyzeTask {
    /// Net-displacement cluster quality and a 2-D PCA projection of a
    /// gridworld embedding table.
    Clusters { table: PathBuf, n_steps: usize },
    /// Rank correlation between action order and the 1-D PCA projection.
    Monotonicity { table: PathBuf },
    /// Compositionality probe: nearest action of sum(plus) - sum(minus).
    Analogy {
        table: PathBuf,
        n_steps: usize,
        plus: Vec<usize>,
        minus: Vec<usize>,
        expected: (i64, i64),
    },
    /// Episodes-to-threshold and a bootstrap band over curve files.
    Curves {
        curves: Vec<PathBuf>,
        threshold: f64,
        window: usize,
        confidence: f64,
        resamples: usize,
        seed: u64,
    },
}

#[derive(Debug, Serialize)]
struct ClustersReport {
    intra_mean: f64,
    inter_mean: f64,
    ratio: f64,
    group_count: usize,
}

#[derive(Debug, Serialize)]
struct MonotonicityReport {
    spearman_abs: f64,
}

#[derive(Debug, Serialize)]
struct AnalogyReport {
    nearest_action: usize,
    nearest_group: (i64, i64),
    expected_group: (i64, i64),
    passed: bool,
}

#[derive(Debug, Serialize)]
struct CurvesReport {
    episodes_to_threshold: Vec<Option<usize>>,
    median_episodes_to_threshold: Option<usize>,
    threshold: f64,
    window: usize,
    seeds: usize,
}

/// Median with `None` treated as "never" (later than everything).
pub fn median_episodes(values: &[Option<usize>]) -> Option<usize> {
    let mut xs: Vec<u64> = values
        .iter()
        .map(|v| v.map(|x| x as u64).unwrap_or(u64::MAX))
        .collect();
    xs.sort_unstable();
    let mid = xs[xs.len() / 2];
    (mid != u64::MAX).then_some(mid as usize)
}

/// Run one analysis task, writing `report.json` (plus CSVs) under `out_dir`.
pub fn cmd_analyze(task: &AnalyzeTask, out_dir: &Path, quiet: bool) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let report_json = match task {
        AnalyzeTask::Clusters { table, n_steps } => {
            let table = ActionEmbeddingTable::import_csv(table)?;
            let rows = table.rows();
            let labels = displacement_labels(rows.len(), *n_steps)?;
            let q = cluster_quality(&rows, &labels)?;
            let distinct: std::collections::BTreeSet<i64> = labels.iter().copied().collect();
            let proj = pca_project(&rows, 2.min(table.dim()))?;
            let mut csv = String::from("action_index,dx,dy,p0,p1\n");
            for (i, p) in proj.projected.iter().enumerate() {
                let (dx, dy) = net_displacement(*n_steps, i)?;
                let p1 = if p.len() > 1 { p[1] } else { 0.0 };
                csv.push_str(&format!("{i},{dx},{dy},{},{}\n", p[0], p1));
            }
            std::fs::write(out_dir.join("projected.csv"), csv)?;
            serde_json::to_string_pretty(&ClustersReport {
                intra_mean: q.intra_mean,
                inter_mean: q.inter_mean,
                ratio: q.ratio,
                group_count: distinct.len(),
            })?
        }
        AnalyzeTask::Monotonicity { table } => {
            let table = ActionEmbeddingTable::import_csv(table)?;
            serde_json::to_string_pretty(&MonotonicityReport {
                spearman_abs: monotonicity_check(&table)?,
            })?
        }
        AnalyzeTask::Analogy {
            table,
            n_steps,
            plus,
            minus,
            expected,
        } => {
            let table = ActionEmbeddingTable::import_csv(table)?;
            let mut v = vec![0.0; table.dim()];
            for &i in plus {
                for (acc, x) in v.iter_mut().zip(table.row(i)?) {
                    *acc += x;
                }
            }
            for &i in minus {
                for (acc, x) in v.iter_mut().zip(table.row(i)?) {
                    *acc -= x;
                }
            }
            let nearest = crate::agent::nearest_action(&table, &v)?;
            let group = net_displacement(*n_steps, nearest)?;
            serde_json::to_string_pretty(&AnalogyReport {
                nearest_action: nearest,
                nearest_group: group,
                expected_group: *expected,
                passed: group == *expected,
            })?
        }
        AnalyzeTask::Curves {
            curves,
            threshold,
            window,
            confidence,
            resamples,
            seed,
        } => {
            if curves.is_empty() {
                return Err(Error::Config("no curve files given".into()));
            }
            let data: Result<Vec<Vec<f64>>> = curves.iter().map(|p| read_curve_csv(p)).collect();
            let data = data?;
            let episodes: Vec<Option<usize>> = data
                .iter()
                .map(|c| episodes_to_threshold(c, *threshold, *window))
                .collect();
            let band = bootstrap_band(&data, *confidence, *resamples, *seed)?;
            let mut csv = String::from("episode,mean,low,high\n");
            for e in 0..band.mean.len() {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    e + 1,
                    band.mean[e],
                    band.low[e],
                    band.high[e]
                ));
            }
            std::fs::write(out_dir.join("band.csv"), csv)?;
            serde_json::to_string_pretty(&CurvesReport {
                median_episodes_to_threshold: median_episodes(&episodes),
                episodes_to_threshold: episodes,
                threshold: *threshold,
                window: *window,
                seeds: data.len(),
            })?
        }
    };
    std::fs::write(out_dir.join("report.json"), report_json.clone() + "\n")?;
    if !quiet {
        println!("{report_json}");
    }
    Ok(())
}

/// Group labels by free-space net displacement, encoded as a single integer.
pub fn displacement_labels(action_count: usize, n_steps: usize) -> Result<Vec<i64>> {
    if action_count != 4usize.pow(n_steps as u32) {
        return Err(Error::Config(format!(
            "table has {action_count} rows; a {n_steps}-step gridworld needs {}",
            4usize.pow(n_steps as u32)
        )));
    }
    (0..action_count)
        .map(|i| {
            let (dx, dy) = net_displacement(n_steps, i)?;
            Ok((dx + 10) * 100 + (dy + 10))
        })
        .collect()
}
