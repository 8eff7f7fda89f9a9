//! Python bindings for the action-embedding RL toolkit.
//!
//! Exposes the environments, offline embedding learning, nearest-neighbor
//! lookup, the analysis operations, and the experiment commands. Build with
//! `cargo build -p trace-rl-py --release` and rename the produced
//! `libtrace_rl_py.so` to `trace_rl_py.so` somewhere on `sys.path`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use trace_rl::analysis;
use trace_rl::config::ExperimentConfig;
use trace_rl::embedding::{fit_embeddings_offline, ActionEmbeddingTable, TransitionModel};
use trace_rl::env::{
    self, decode_action, CartPoleConfig, Environment, GridworldConfig, StateEncoding,
};
use trace_rl::runner;
use trace_rl::transfer::StateEmbedder;
use trace_rl::Rng;

fn to_py_err(err: trace_rl::Error) -> PyErr {
    match &err {
        trace_rl::Error::Config(_) | trace_rl::Error::Json(_) => {
            PyValueError::new_err(err.to_string())
        }
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn parse_encoding(encoding: &str) -> PyResult<StateEncoding> {
    match encoding {
        "coords" => Ok(StateEncoding::Coords),
        "onehot" => Ok(StateEncoding::Onehot),
        other => Err(PyValueError::new_err(format!(
            "unknown encoding {other:?} (coords | onehot)"
        ))),
    }
}

/// Seeded n-step gridworld.
#[pyclass]
struct Gridworld {
    env: env::Gridworld,
    rng: Rng,
}

#[pymethods]
impl Gridworld {
    #[new]
    #[pyo3(signature = (n_steps=1, encoding="coords", seed=0, grid_size=11))]
    fn new(n_steps: usize, encoding: &str, seed: u64, grid_size: usize) -> PyResult<Self> {
        let cfg = GridworldConfig {
            n_steps,
            grid_size,
            encoding: parse_encoding(encoding)?,
            ..GridworldConfig::default()
        };
        Ok(Self {
            env: env::Gridworld::new(cfg).map_err(to_py_err)?,
            rng: Rng::seed_from_u64(seed),
        })
    }

    #[getter]
    fn action_count(&self) -> usize {
        self.env.spec().action_count
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.env.spec().state_dim
    }

    fn seed(&mut self, seed: u64) {
        self.rng = Rng::seed_from_u64(seed);
    }

    fn reset(&mut self) -> Vec<f64> {
        self.env.reset(&mut self.rng)
    }

    fn step(&mut self, action_index: usize) -> PyResult<(Vec<f64>, f64, bool)> {
        let out = self.env.step(action_index).map_err(to_py_err)?;
        Ok((out.next_state, out.reward, out.done))
    }

    /// Atomic move names of a combo-action index.
    #[staticmethod]
    fn decode(n_steps: usize, index: usize) -> PyResult<Vec<String>> {
        Ok(decode_action(n_steps, index)
            .map_err(to_py_err)?
            .into_iter()
            .map(|m| m.name().to_string())
            .collect())
    }

    /// Free-space net displacement (dx, dy) of a combo-action index.
    #[staticmethod]
    fn net_displacement(n_steps: usize, index: usize) -> PyResult<(i64, i64)> {
        env::net_displacement(n_steps, index).map_err(to_py_err)
    }
}

/// Seeded cartpole with a discretized force input.
#[pyclass]
struct CartPole {
    env: env::CartPole,
    rng: Rng,
}

#[pymethods]
impl CartPole {
    #[new]
    #[pyo3(signature = (force_levels=21, seed=0))]
    fn new(force_levels: usize, seed: u64) -> PyResult<Self> {
        let cfg = CartPoleConfig {
            force_levels,
            ..CartPoleConfig::default()
        };
        Ok(Self {
            env: env::CartPole::new(cfg).map_err(to_py_err)?,
            rng: Rng::seed_from_u64(seed),
        })
    }

    #[getter]
    fn action_count(&self) -> usize {
        self.env.spec().action_count
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.env.spec().state_dim
    }

    fn seed(&mut self, seed: u64) {
        self.rng = Rng::seed_from_u64(seed);
    }

    fn reset(&mut self) -> Vec<f64> {
        self.env.reset(&mut self.rng)
    }

    fn step(&mut self, action_index: usize) -> PyResult<(Vec<f64>, f64, bool)> {
        let out = self.env.step(action_index).map_err(to_py_err)?;
        Ok((out.next_state, out.reward, out.done))
    }

    /// Force in newtons applied by an action index.
    fn force_for(&self, index: usize) -> f64 {
        self.env.config().force_for(index)
    }
}

/// Learn action embeddings offline from random-policy transitions.
///
/// `env_json` is the same environment object the CLI configs use, e.g.
/// `{"gridworld": {"n_steps": 3}}`. Returns (table rows, per-epoch loss).
#[pyfunction]
#[pyo3(signature = (env_json, embed_dim, samples=10_000, epochs=30, batch_size=128, lr=1e-3, seed=0, latent=false))]
#[allow(clippy::too_many_arguments)]
fn fit_action_embeddings(
    env_json: &str,
    embed_dim: usize,
    samples: usize,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
    latent: bool,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let env_cfg: trace_rl::config::EnvConfig =
        serde_json::from_str(env_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let mut env = env_cfg.build().map_err(to_py_err)?;
    let spec = env.spec();
    let mut rng = Rng::seed_from_u64(seed);
    let data =
        env::collect_random_transitions(env.as_mut(), samples, &mut rng, None).map_err(to_py_err)?;
    let embedder = StateEmbedder::identity(spec.state_dim);
    let mut table =
        ActionEmbeddingTable::init_uniform(spec.action_count, embed_dim, &mut rng).map_err(to_py_err)?;
    let mut model = if latent {
        TransitionModel::new_latent(spec.state_dim, embed_dim, 8, &[32], &[64, 32], 1e-2, &mut rng)
            .map_err(to_py_err)?
    } else {
        TransitionModel::new_deterministic(spec.state_dim, embed_dim, &[64, 32], &mut rng)
            .map_err(to_py_err)?
    };
    let history = fit_embeddings_offline(
        &mut model, &mut table, &data, &embedder, epochs, batch_size, lr, &mut rng,
    )
    .map_err(to_py_err)?;
    Ok((table.rows(), history))
}

/// Index of the embedding row nearest to a proto-action (L2, lowest index on
/// ties).
#[pyfunction]
fn nearest_action(table: Vec<Vec<f64>>, proto: Vec<f64>) -> PyResult<usize> {
    let table = ActionEmbeddingTable::from_rows(table).map_err(to_py_err)?;
    trace_rl::agent::nearest_action(&table, &proto).map_err(to_py_err)
}

/// PCA via power iteration: (components, projected, explained_variance_ratio).
#[pyfunction]
#[pyo3(signature = (points, k=2))]
fn pca_project(
    points: Vec<Vec<f64>>,
    k: usize,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>)> {
    let res = analysis::pca_project(&points, k).map_err(to_py_err)?;
    Ok((res.components, res.projected, res.explained_variance_ratio))
}

/// Mean within-group / across-group distances: (intra, inter, ratio).
#[pyfunction]
fn cluster_quality(points: Vec<Vec<f64>>, labels: Vec<i64>) -> PyResult<(f64, f64, f64)> {
    let q = analysis::cluster_quality(&points, &labels).map_err(to_py_err)?;
    Ok((q.intra_mean, q.inter_mean, q.ratio))
}

/// |Spearman| between row order and the 1-D PCA projection of the table.
#[pyfunction]
fn monotonicity(table: Vec<Vec<f64>>) -> PyResult<f64> {
    let table = ActionEmbeddingTable::from_rows(table).map_err(to_py_err)?;
    analysis::monotonicity_check(&table).map_err(to_py_err)
}

/// First episode (1-based) whose trailing-window mean reaches the threshold.
#[pyfunction]
#[pyo3(signature = (curve, threshold, window=100))]
fn episodes_to_threshold(curve: Vec<f64>, threshold: f64, window: usize) -> Option<usize> {
    analysis::episodes_to_threshold(&curve, threshold, window)
}

/// Bootstrap confidence band over per-seed curves: (mean, low, high).
#[pyfunction]
#[pyo3(signature = (curves, confidence=0.95, resamples=1000, seed=0))]
fn bootstrap_band(
    curves: Vec<Vec<f64>>,
    confidence: f64,
    resamples: usize,
    seed: u64,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let band = analysis::bootstrap_band(&curves, confidence, resamples, seed).map_err(to_py_err)?;
    Ok((band.mean, band.low, band.high))
}

fn parse_config(config_json: &str) -> PyResult<ExperimentConfig> {
    ExperimentConfig::from_json_str(config_json).map_err(to_py_err)
}

/// Run the training command on a JSON experiment config (same schema as the
/// CLI). Writes curves, checkpoints, and the manifest to the config's
/// output_dir.
#[pyfunction]
#[pyo3(signature = (config_json, quiet=true))]
fn train(config_json: &str, quiet: bool) -> PyResult<()> {
    runner::cmd_train(&parse_config(config_json)?, quiet).map_err(to_py_err)
}

/// Run the transfer command from a source checkpoint.
#[pyfunction]
#[pyo3(signature = (config_json, source_checkpoint, quiet=true))]
fn transfer(config_json: &str, source_checkpoint: &str, quiet: bool) -> PyResult<()> {
    runner::cmd_transfer(
        &parse_config(config_json)?,
        std::path::Path::new(source_checkpoint),
        quiet,
    )
    .map_err(to_py_err)
}

/// Run the offline embedding command.
#[pyfunction]
#[pyo3(signature = (config_json, quiet=true))]
fn embed(config_json: &str, quiet: bool) -> PyResult<()> {
    runner::cmd_embed(&parse_config(config_json)?, quiet).map_err(to_py_err)
}

#[pymodule]
fn trace_rl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Gridworld>()?;
    m.add_class::<CartPole>()?;
    m.add_function(wrap_pyfunction!(fit_action_embeddings, m)?)?;
    m.add_function(wrap_pyfunction!(nearest_action, m)?)?;
    m.add_function(wrap_pyfunction!(pca_project, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_quality, m)?)?;
    m.add_function(wrap_pyfunction!(monotonicity, m)?)?;
    m.add_function(wrap_pyfunction!(episodes_to_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_band, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(transfer, m)?)?;
    m.add_function(wrap_pyfunction!(embed, m)?)?;
    Ok(())
}
