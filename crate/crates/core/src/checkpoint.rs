//! Single-file checkpoints: one JSON header line followed by raw
//! little-endian f64 arrays in declaration order.
//!
//! The byte layout is deterministic, so save -> load -> save reproduces the
//! file exactly.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::DiscreteSacAgent;
use crate::config::{Algorithm, ExperimentConfig, Hyperparameters};
use crate::nn::Mlp;
use crate::rng::Rng;
use crate::transfer::{build_trace_artifacts, StateEmbedder, TraceArtifacts};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    /// Snapshot of the producing experiment's configuration.
    pub config: ExperimentConfig,
    pub seed: u64,
    pub episode: u64,
    pub rng_state: [u64; 4],
    /// Proto-action squash bound fixed at agent construction (0 for the
    /// discrete baseline).
    pub proto_bound: f64,
    pub arrays: Vec<ArraySpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    arrays: Vec<Vec<f64>>,
}

impl Checkpoint {
    pub fn new(header: CheckpointHeader, arrays: Vec<Vec<f64>>) -> Result<Self> {
        if header.arrays.len() != arrays.len() {
            return Err(Error::Checkpoint(format!(
                "manifest lists {} arrays, got {}",
                header.arrays.len(),
                arrays.len()
            )));
        }
        for (spec, data) in header.arrays.iter().zip(&arrays) {
            let want: usize = spec.shape.iter().product();
            if want != data.len() {
                return Err(Error::Checkpoint(format!(
                    "array {} has {} values, shape {:?} wants {want}",
                    spec.name,
                    data.len(),
                    spec.shape
                )));
            }
        }
        Ok(Self { header, arrays })
    }

    pub fn array(&self, name: &str) -> Result<&[f64]> {
        self.header
            .arrays
            .iter()
            .position(|a| a.name == name)
            .map(|i| self.arrays[i].as_slice())
            .ok_or_else(|| Error::Checkpoint(format!("missing array {name}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        let header = serde_json::to_string(&self.header)?;
        file.write_all(header.as_bytes())?;
        file.write_all(b"\n")?;
        for data in &self.arrays {
            let mut bytes = Vec::with_capacity(data.len() * 8);
            for v in data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            file.write_all(&bytes)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Checkpoint("missing header line".into()))?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[..newline])?;
        if header.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                header.format_version
            )));
        }
        let mut offset = newline + 1;
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for spec in &header.arrays {
            let len: usize = spec.shape.iter().product();
            let end = offset + len * 8;
            if end > bytes.len() {
                return Err(Error::Checkpoint(format!(
                    "truncated payload for array {}",
                    spec.name
                )));
            }
            let mut data = Vec::with_capacity(len);
            for chunk in bytes[offset..end].chunks_exact(8) {
                data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
            arrays.push(data);
            offset = end;
        }
        if offset != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after payload".into()));
        }
        Checkpoint::new(header, arrays)
    }
}

fn push_mlp(prefix: &str, mlp: &Mlp, specs: &mut Vec<ArraySpec>, arrays: &mut Vec<Vec<f64>>) {
    let sizes = mlp.layer_sizes();
    for layer in 0..mlp.num_layers() {
        specs.push(ArraySpec {
            name: format!("{prefix}.w{layer}"),
            shape: vec![sizes[layer + 1], sizes[layer]],
        });
        arrays.push(mlp.weights(layer).to_vec());
        specs.push(ArraySpec {
            name: format!("{prefix}.b{layer}"),
            shape: vec![sizes[layer + 1]],
        });
        arrays.push(mlp.biases(layer).to_vec());
    }
}

fn load_mlp(prefix: &str, mlp: &mut Mlp, ck: &Checkpoint) -> Result<()> {
    for layer in 0..mlp.num_layers() {
        let w = ck.array(&format!("{prefix}.w{layer}"))?;
        if w.len() != mlp.weights(layer).len() {
            return Err(Error::Checkpoint(format!(
                "array {prefix}.w{layer} length mismatch"
            )));
        }
        mlp.weights_mut(layer).copy_from_slice(w);
        let b = ck.array(&format!("{prefix}.b{layer}"))?;
        if b.len() != mlp.biases(layer).len() {
            return Err(Error::Checkpoint(format!(
                "array {prefix}.b{layer} length mismatch"
            )));
        }
        mlp.biases_mut(layer).copy_from_slice(b);
    }
    Ok(())
}

/// Capture a full TRACE artifact set.
pub fn trace_checkpoint(
    config: &ExperimentConfig,
    seed: u64,
    episode: u64,
    rng: &Rng,
    arts: &TraceArtifacts,
) -> Result<Checkpoint> {
    let mut specs = Vec::new();
    let mut arrays = Vec::new();
    push_mlp("actor", &arts.agent.actor, &mut specs, &mut arrays);
    push_mlp("critic1", &arts.agent.critic1, &mut specs, &mut arrays);
    push_mlp("critic2", &arts.agent.critic2, &mut specs, &mut arrays);
    push_mlp("target1", &arts.agent.target1, &mut specs, &mut arrays);
    push_mlp("target2", &arts.agent.target2, &mut specs, &mut arrays);
    if let Some(enc) = &arts.model.encoder {
        push_mlp("transition.encoder", enc, &mut specs, &mut arrays);
    }
    push_mlp("transition.decoder", &arts.model.decoder, &mut specs, &mut arrays);
    specs.push(ArraySpec {
        name: "w_ae".into(),
        shape: vec![arts.table.action_count(), arts.table.dim()],
    });
    arrays.push(arts.table.as_flat().to_vec());
    if let Some(net) = arts.embedder.net() {
        push_mlp("state_embedder", net, &mut specs, &mut arrays);
    }
    let header = CheckpointHeader {
        format_version: CHECKPOINT_FORMAT_VERSION,
        config: config.clone(),
        seed,
        episode,
        rng_state: rng.state(),
        proto_bound: arts.agent.proto_bound,
        arrays: specs,
    };
    Checkpoint::new(header, arrays)
}

/// Rebuild TRACE artifacts from a checkpoint produced by [`trace_checkpoint`].
pub fn restore_trace_artifacts(ck: &Checkpoint) -> Result<TraceArtifacts> {
    let spec = ck.header.config.env.spec()?;
    let hp: &Hyperparameters = &ck.header.config.hyperparameters;
    // Build skeletons with a throwaway generator, then overwrite every array.
    let mut scratch_rng = Rng::seed_from_u64(0);
    let mut arts = build_trace_artifacts(spec.state_dim, spec.action_count, hp, &mut scratch_rng)?;
    load_mlp("actor", &mut arts.agent.actor, ck)?;
    load_mlp("critic1", &mut arts.agent.critic1, ck)?;
    load_mlp("critic2", &mut arts.agent.critic2, ck)?;
    load_mlp("target1", &mut arts.agent.target1, ck)?;
    load_mlp("target2", &mut arts.agent.target2, ck)?;
    if let Some(enc) = arts.model.encoder.as_mut() {
        load_mlp("transition.encoder", enc, ck)?;
    }
    load_mlp("transition.decoder", &mut arts.model.decoder, ck)?;
    let table = ck.array("w_ae")?;
    if table.len() != arts.table.as_flat().len() {
        return Err(Error::Checkpoint("w_ae shape mismatch".into()));
    }
    arts.table.as_flat_mut().copy_from_slice(table);
    if let Some(net) = arts.embedder.net_mut() {
        load_mlp("state_embedder", net, ck)?;
    }
    arts.agent.proto_bound = ck.header.proto_bound;
    Ok(arts)
}

/// Capture the discrete baseline's networks.
pub fn discrete_checkpoint(
    config: &ExperimentConfig,
    seed: u64,
    episode: u64,
    rng: &Rng,
    agent: &DiscreteSacAgent,
) -> Result<Checkpoint> {
    let mut specs = Vec::new();
    let mut arrays = Vec::new();
    push_mlp("actor", &agent.actor, &mut specs, &mut arrays);
    push_mlp("critic1", &agent.critic1, &mut specs, &mut arrays);
    push_mlp("critic2", &agent.critic2, &mut specs, &mut arrays);
    push_mlp("target1", &agent.target1, &mut specs, &mut arrays);
    push_mlp("target2", &agent.target2, &mut specs, &mut arrays);
    let header = CheckpointHeader {
        format_version: CHECKPOINT_FORMAT_VERSION,
        config: config.clone(),
        seed,
        episode,
        rng_state: rng.state(),
        proto_bound: 0.0,
        arrays: specs,
    };
    Checkpoint::new(header, arrays)
}

/// Rebuild the discrete baseline agent from a checkpoint.
pub fn restore_discrete_agent(ck: &Checkpoint) -> Result<DiscreteSacAgent> {
    let spec = ck.header.config.env.spec()?;
    let hp = &ck.header.config.hyperparameters;
    let mut rng = Rng::seed_from_u64(0);
    let mut agent = DiscreteSacAgent::new(
        spec.state_dim,
        spec.action_count,
        &hp.ac_hiddens,
        hp.alpha,
        hp.gamma,
        hp.tau,
        &mut rng,
    )?;
    load_mlp("actor", &mut agent.actor, ck)?;
    load_mlp("critic1", &mut agent.critic1, ck)?;
    load_mlp("critic2", &mut agent.critic2, ck)?;
    load_mlp("target1", &mut agent.target1, ck)?;
    load_mlp("target2", &mut agent.target2, ck)?;
    Ok(agent)
}

/// True when the checkpointed artifacts used the identity state embedder.
pub fn checkpoint_uses_identity_embedder(ck: &Checkpoint) -> bool {
    ck.header.config.hyperparameters.state_embed_dim.is_none()
}

/// Width of the common feature space recorded in the checkpoint, when learned.
pub fn checkpoint_embed_dim(ck: &Checkpoint) -> Option<usize> {
    ck.header.config.hyperparameters.state_embed_dim
}

/// Convenience: the embedder the checkpoint's agent expects for evaluation.
pub fn checkpoint_state_embedder(ck: &Checkpoint) -> Result<StateEmbedder> {
    let arts = restore_trace_artifacts(ck)?;
    Ok(arts.embedder)
}

/// Checkpoints written by non-TRACE algorithms hold only the agent networks.
pub fn checkpoint_algorithm(ck: &Checkpoint) -> Algorithm {
    ck.header.config.algorithm
}
