//! Action embeddings learned through a forward transition model.
//!
//! Each discrete action owns a row of [`ActionEmbeddingTable`]; the
//! [`TransitionModel`] predicts the next state embedding from the current
//! state embedding and the acting row. Minimizing the prediction error (plus
//! an optional KL penalty on a latent variable for stochastic tasks) shapes
//! the rows so that actions with similar effects end up close together.

use std::io::Write;
use std::path::Path;

use crate::nn::{
    clamp_log_sigma, gaussian_reparameterize, AdamState, Activation, Mlp, ParamBlocks, ParamGrads,
};
use crate::rng::Rng;
use crate::transfer::StateEmbedder;
use crate::env::Transition;
use crate::{Error, Result};

/// The matrix of per-action embedding vectors, one row per action.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionEmbeddingTable {
    data: Vec<f64>,
    action_count: usize,
    dim: usize,
    pub frozen: bool,
}

impl ActionEmbeddingTable {
    /// Rows initialized uniformly in ±0.1.
    pub fn init_uniform(action_count: usize, dim: usize, rng: &mut Rng) -> Result<Self> {
        if action_count == 0 || dim == 0 {
            return Err(Error::Config(
                "embedding table needs at least one action and one dimension".into(),
            ));
        }
        let data = (0..action_count * dim)
            .map(|_| rng.uniform(-0.1, 0.1))
            .collect();
        Ok(Self {
            data,
            action_count,
            dim,
            frozen: false,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::Empty {
                what: "embedding table rows",
            });
        }
        let dim = rows[0].len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                context: "embedding table row width",
                expected: dim,
                got: rows.iter().map(|r| r.len()).find(|&l| l != dim).unwrap(),
            });
        }
        let action_count = rows.len();
        Ok(Self {
            data: rows.into_iter().flatten().collect(),
            action_count,
            dim,
            frozen: false,
        })
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Copy of the embedding row for an action.
    pub fn lookup(&self, action_index: usize) -> Result<Vec<f64>> {
        Ok(self.row(action_index)?.to_vec())
    }

    pub fn row(&self, action_index: usize) -> Result<&[f64]> {
        if action_index >= self.action_count {
            return Err(Error::IndexOutOfRange {
                what: "embedding table row",
                index: action_index,
                len: self.action_count,
            });
        }
        Ok(&self.data[action_index * self.dim..(action_index + 1) * self.dim])
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.action_count)
            .map(|i| self.row(i).unwrap().to_vec())
            .collect()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// CSV export: `action_index,e_0,...,e_{d-1}`, one row per action.
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        let mut header = String::from("action_index");
        for j in 0..self.dim {
            header.push_str(&format!(",e_{j}"));
        }
        header.push('\n');
        file.write_all(header.as_bytes())?;
        for i in 0..self.action_count {
            let mut line = i.to_string();
            for v in self.row(i)? {
                line.push(',');
                line.push_str(&format!("{v}"));
            }
            line.push('\n');
            file.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn import_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let idx: usize = fields
                .next()
                .ok_or_else(|| Error::Config(format!("bad table csv line {}", lineno + 1)))?
                .trim()
                .parse()
                .map_err(|e| Error::Config(format!("bad action index on line {}: {e}", lineno + 1)))?;
            let vals: std::result::Result<Vec<f64>, _> =
                fields.map(|f| f.trim().parse::<f64>()).collect();
            let vals =
                vals.map_err(|e| Error::Config(format!("bad value on line {}: {e}", lineno + 1)))?;
            rows.push((idx, vals));
        }
        rows.sort_by_key(|(i, _)| *i);
        ActionEmbeddingTable::from_rows(rows.into_iter().map(|(_, v)| v).collect())
    }
}

impl ParamBlocks for ActionEmbeddingTable {
    fn param_blocks(&self) -> Vec<&[f64]> {
        vec![&self.data]
    }
    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.data]
    }
}

/// Prediction mode of the transition model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionMode {
    /// Pure regression: decoder(state ⊕ action) with no latent branch.
    Deterministic,
    /// Latent-variable model: an encoder emits (mu, log_sigma) for z, the
    /// decoder conditions on (state ⊕ action ⊕ z), and the loss carries a
    /// KL penalty against the standard normal scaled by `beta`.
    Latent,
}

/// Parametric next-state predictor over state and action embeddings.
#[derive(Debug, Clone)]
pub struct TransitionModel {
    pub mode: TransitionMode,
    pub encoder: Option<Mlp>,
    pub decoder: Mlp,
    pub z_dim: usize,
    pub beta: f64,
    pub frozen: bool,
    state_dim: usize,
    action_dim: usize,
}

/// Output of [`TransitionModel::predict_next`].
#[derive(Debug, Clone)]
pub struct Prediction {
    pub next_state_emb: Vec<f64>,
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

impl TransitionModel {
    pub fn new_deterministic(
        state_dim: usize,
        action_dim: usize,
        hiddens: &[usize],
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend_from_slice(hiddens);
        sizes.push(state_dim);
        Ok(Self {
            mode: TransitionMode::Deterministic,
            encoder: None,
            decoder: Mlp::glorot(&sizes, Activation::Relu, Activation::Linear, rng)?,
            z_dim: 0,
            beta: 0.0,
            frozen: false,
            state_dim,
            action_dim,
        })
    }

    pub fn new_latent(
        state_dim: usize,
        action_dim: usize,
        z_dim: usize,
        encoder_hiddens: &[usize],
        decoder_hiddens: &[usize],
        beta: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if z_dim == 0 {
            return Err(Error::Config("latent mode needs z_dim >= 1".into()));
        }
        let mut enc_sizes = vec![state_dim + action_dim];
        enc_sizes.extend_from_slice(encoder_hiddens);
        enc_sizes.push(2 * z_dim);
        let mut dec_sizes = vec![state_dim + action_dim + z_dim];
        dec_sizes.extend_from_slice(decoder_hiddens);
        dec_sizes.push(state_dim);
        Ok(Self {
            mode: TransitionMode::Latent,
            encoder: Some(Mlp::glorot(
                &enc_sizes,
                Activation::Relu,
                Activation::Linear,
                rng,
            )?),
            decoder: Mlp::glorot(&dec_sizes, Activation::Relu, Activation::Linear, rng)?,
            z_dim,
            beta,
            frozen: false,
            state_dim,
            action_dim,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Deterministic model sharing this latent model's decoder with the z
    /// input columns dropped. Feeding the latent decoder z = 0 produces
    /// exactly the same outputs, which is what makes the latent loss with
    /// beta = 0 collapse to the deterministic MSE loss.
    pub fn deterministic_twin(&self) -> Result<TransitionModel> {
        if self.mode != TransitionMode::Latent {
            return Err(Error::Config(
                "deterministic_twin requires a latent-mode model".into(),
            ));
        }
        let src = &self.decoder;
        let sizes = src.layer_sizes().to_vec();
        let mut twin_sizes = sizes.clone();
        twin_sizes[0] = self.state_dim + self.action_dim;
        let mut twin = Mlp::zeros(&twin_sizes, Activation::Relu, Activation::Linear)?;
        for layer in 0..src.num_layers() {
            let in_dim = sizes[layer];
            let out_dim = sizes[layer + 1];
            if layer == 0 {
                let keep = self.state_dim + self.action_dim;
                let w = src.weights(0);
                let tw = twin.weights_mut(0);
                for o in 0..out_dim {
                    tw[o * keep..(o + 1) * keep]
                        .copy_from_slice(&w[o * in_dim..o * in_dim + keep]);
                }
            } else {
                twin.weights_mut(layer).copy_from_slice(src.weights(layer));
            }
            twin.biases_mut(layer).copy_from_slice(src.biases(layer));
        }
        Ok(TransitionModel {
            mode: TransitionMode::Deterministic,
            encoder: None,
            decoder: twin,
            z_dim: 0,
            beta: 0.0,
            frozen: false,
            state_dim: self.state_dim,
            action_dim: self.action_dim,
        })
    }

    /// Predict the next state embedding. Latent mode draws z through the
    /// reparameterization with the supplied `noise`; deterministic mode
    /// ignores `noise` entirely.
    pub fn predict_next(
        &self,
        state_emb: &[f64],
        action_emb: &[f64],
        noise: &[f64],
    ) -> Result<Prediction> {
        self.check_widths(state_emb, action_emb)?;
        match self.mode {
            TransitionMode::Deterministic => {
                let mut input = Vec::with_capacity(self.state_dim + self.action_dim);
                input.extend_from_slice(state_emb);
                input.extend_from_slice(action_emb);
                Ok(Prediction {
                    next_state_emb: self.decoder.forward(&input)?,
                    mu: Vec::new(),
                    log_sigma: Vec::new(),
                })
            }
            TransitionMode::Latent => {
                if noise.len() != self.z_dim {
                    return Err(Error::DimensionMismatch {
                        context: "latent noise width",
                        expected: self.z_dim,
                        got: noise.len(),
                    });
                }
                let encoder = self.encoder.as_ref().expect("latent mode has an encoder");
                let mut enc_in = Vec::with_capacity(self.state_dim + self.action_dim);
                enc_in.extend_from_slice(state_emb);
                enc_in.extend_from_slice(action_emb);
                let enc_out = encoder.forward(&enc_in)?;
                let mu = enc_out[..self.z_dim].to_vec();
                let log_sigma: Vec<f64> = enc_out[self.z_dim..]
                    .iter()
                    .map(|&v| clamp_log_sigma(v))
                    .collect();
                let (z, _) = gaussian_reparameterize(&mu, &log_sigma, noise)?;
                let mut dec_in =
                    Vec::with_capacity(self.state_dim + self.action_dim + self.z_dim);
                dec_in.extend_from_slice(state_emb);
                dec_in.extend_from_slice(action_emb);
                dec_in.extend_from_slice(&z);
                Ok(Prediction {
                    next_state_emb: self.decoder.forward(&dec_in)?,
                    mu,
                    log_sigma,
                })
            }
        }
    }

    fn check_widths(&self, state_emb: &[f64], action_emb: &[f64]) -> Result<()> {
        if state_emb.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                context: "transition model state width",
                expected: self.state_dim,
                got: state_emb.len(),
            });
        }
        if action_emb.len() != self.action_dim {
            return Err(Error::DimensionMismatch {
                context: "transition model action width",
                expected: self.action_dim,
                got: action_emb.len(),
            });
        }
        Ok(())
    }
}

impl ParamBlocks for TransitionModel {
    fn param_blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        if let Some(enc) = &self.encoder {
            out.extend(enc.param_blocks());
        }
        out.extend(self.decoder.param_blocks());
        out
    }
    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        if let Some(enc) = &mut self.encoder {
            out.extend(enc.param_blocks_mut());
        }
        out.extend(self.decoder.param_blocks_mut());
        out
    }
}

/// One training sample for the embedding objective. State embeddings arrive
/// precomputed and detached: no gradient flows back into the state embedder.
#[derive(Debug, Clone)]
pub struct EmbedSample {
    pub state_emb: Vec<f64>,
    pub action_index: usize,
    pub next_state_emb: Vec<f64>,
}

impl EmbedSample {
    pub fn from_transition(t: &Transition, embedder: &StateEmbedder) -> EmbedSample {
        EmbedSample {
            state_emb: embedder.forward(&t.state),
            action_index: t.action_index,
            next_state_emb: embedder.forward(&t.next_state),
        }
    }
}

/// Gradients produced by [`embedding_loss_and_grads`].
#[derive(Debug, Clone)]
pub struct EmbeddingGrads {
    pub encoder: Option<ParamGrads>,
    pub decoder: ParamGrads,
    /// Flat table gradient, row-major like the table itself.
    pub table: Vec<f64>,
}

fn kl_standard_normal(mu: &[f64], log_sigma: &[f64]) -> f64 {
    mu.iter()
        .zip(log_sigma)
        .map(|(&m, &ls)| 0.5 * (m * m + (2.0 * ls).exp() - 1.0 - 2.0 * ls))
        .sum()
}

/// Batch-mean embedding objective: squared prediction error plus (latent mode
/// only) `beta` times the closed-form KL against the standard normal.
pub fn embedding_loss(
    model: &TransitionModel,
    table: &ActionEmbeddingTable,
    batch: &[EmbedSample],
    noise: &[Vec<f64>],
) -> Result<f64> {
    embedding_loss_impl(model, table, batch, noise, None)
}

/// Loss plus exact gradients for the transition model and the table rows
/// touched by the batch.
pub fn embedding_loss_and_grads(
    model: &TransitionModel,
    table: &ActionEmbeddingTable,
    batch: &[EmbedSample],
    noise: &[Vec<f64>],
) -> Result<(f64, EmbeddingGrads)> {
    let mut grads = EmbeddingGrads {
        encoder: model.encoder.as_ref().map(ParamGrads::zeros_like),
        decoder: ParamGrads::zeros_like(&model.decoder),
        table: vec![0.0; table.action_count() * table.dim()],
    };
    let loss = embedding_loss_impl(model, table, batch, noise, Some(&mut grads))?;
    Ok((loss, grads))
}

fn embedding_loss_impl(
    model: &TransitionModel,
    table: &ActionEmbeddingTable,
    batch: &[EmbedSample],
    noise: &[Vec<f64>],
    mut grads: Option<&mut EmbeddingGrads>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty {
            what: "embedding batch",
        });
    }
    if model.mode == TransitionMode::Latent && noise.len() != batch.len() {
        return Err(Error::DimensionMismatch {
            context: "embedding noise batch",
            expected: batch.len(),
            got: noise.len(),
        });
    }
    let inv_n = 1.0 / batch.len() as f64;
    let d = table.dim();
    let mut total = 0.0;

    for (i, sample) in batch.iter().enumerate() {
        let action_emb = table.row(sample.action_index)?;
        model.check_widths(&sample.state_emb, action_emb)?;
        if sample.next_state_emb.len() != model.state_dim {
            return Err(Error::DimensionMismatch {
                context: "embedding target width",
                expected: model.state_dim,
                got: sample.next_state_emb.len(),
            });
        }

        match model.mode {
            TransitionMode::Deterministic => {
                let mut dec_in = Vec::with_capacity(model.state_dim + d);
                dec_in.extend_from_slice(&sample.state_emb);
                dec_in.extend_from_slice(action_emb);
                let trace = model.decoder.forward_trace(&dec_in);
                let pred = trace.last().unwrap();
                let err: Vec<f64> = pred
                    .iter()
                    .zip(&sample.next_state_emb)
                    .map(|(p, t)| p - t)
                    .collect();
                total += err.iter().map(|e| e * e).sum::<f64>();
                if let Some(g) = grads.as_deref_mut() {
                    let upstream: Vec<f64> = err.iter().map(|e| 2.0 * e * inv_n).collect();
                    let dec_in_grad = model.decoder.backward_from_trace(
                        &dec_in,
                        &trace,
                        &upstream,
                        &mut g.decoder,
                    );
                    let row_grad =
                        &mut g.table[sample.action_index * d..(sample.action_index + 1) * d];
                    for (rg, ig) in row_grad.iter_mut().zip(&dec_in_grad[model.state_dim..]) {
                        *rg += *ig;
                    }
                }
            }
            TransitionMode::Latent => {
                let eps = &noise[i];
                if eps.len() != model.z_dim {
                    return Err(Error::DimensionMismatch {
                        context: "latent noise width",
                        expected: model.z_dim,
                        got: eps.len(),
                    });
                }
                let encoder = model.encoder.as_ref().expect("latent mode has an encoder");
                let mut enc_in = Vec::with_capacity(model.state_dim + d);
                enc_in.extend_from_slice(&sample.state_emb);
                enc_in.extend_from_slice(action_emb);
                let enc_trace = encoder.forward_trace(&enc_in);
                let enc_out = enc_trace.last().unwrap().clone();
                let mu = &enc_out[..model.z_dim];
                let ls_raw = &enc_out[model.z_dim..];
                let ls: Vec<f64> = ls_raw.iter().map(|&v| clamp_log_sigma(v)).collect();
                let (z, _) = gaussian_reparameterize(mu, &ls, eps)?;

                let mut dec_in = Vec::with_capacity(model.state_dim + d + model.z_dim);
                dec_in.extend_from_slice(&sample.state_emb);
                dec_in.extend_from_slice(action_emb);
                dec_in.extend_from_slice(&z);
                let dec_trace = model.decoder.forward_trace(&dec_in);
                let pred = dec_trace.last().unwrap();
                let err: Vec<f64> = pred
                    .iter()
                    .zip(&sample.next_state_emb)
                    .map(|(p, t)| p - t)
                    .collect();
                total += err.iter().map(|e| e * e).sum::<f64>();
                total += model.beta * kl_standard_normal(mu, &ls);

                if let Some(g) = grads.as_deref_mut() {
                    let upstream: Vec<f64> = err.iter().map(|e| 2.0 * e * inv_n).collect();
                    let dec_in_grad = model.decoder.backward_from_trace(
                        &dec_in,
                        &dec_trace,
                        &upstream,
                        &mut g.decoder,
                    );
                    let row_from_dec = &dec_in_grad[model.state_dim..model.state_dim + d];
                    let z_grad = &dec_in_grad[model.state_dim + d..];

                    // Upstream into the encoder outputs: z = mu + exp(ls) eps,
                    // KL adds beta*mu on mu and beta*(exp(2 ls) - 1) on ls.
                    // Clamped log-sigma entries pass no gradient.
                    let mut enc_upstream = vec![0.0; 2 * model.z_dim];
                    for j in 0..model.z_dim {
                        enc_upstream[j] = z_grad[j] + model.beta * inv_n * mu[j];
                        let in_range = ls_raw[j] > crate::nn::LOG_SIGMA_MIN
                            && ls_raw[j] < crate::nn::LOG_SIGMA_MAX;
                        if in_range {
                            enc_upstream[model.z_dim + j] = z_grad[j] * ls[j].exp() * eps[j]
                                + model.beta * inv_n * ((2.0 * ls[j]).exp() - 1.0);
                        }
                    }
                    let enc_grads = g.encoder.as_mut().expect("latent grads have encoder");
                    let enc_in_grad = encoder.backward_from_trace(
                        &enc_in,
                        &enc_trace,
                        &enc_upstream,
                        enc_grads,
                    );
                    let row_grad =
                        &mut g.table[sample.action_index * d..(sample.action_index + 1) * d];
                    for ((rg, a), b) in row_grad
                        .iter_mut()
                        .zip(row_from_dec)
                        .zip(&enc_in_grad[model.state_dim..])
                    {
                        *rg += a + b;
                    }
                }
            }
        }
    }
    Ok(total * inv_n)
}

/// Optimizer pair for the embedding objective.
#[derive(Debug, Clone)]
pub struct EmbedOptim {
    pub model: AdamState,
    pub table: AdamState,
}

impl EmbedOptim {
    pub fn new(model: &TransitionModel, table: &ActionEmbeddingTable, lr: f64) -> Self {
        let model_lens: Vec<usize> = model.param_blocks().iter().map(|b| b.len()).collect();
        Self {
            model: AdamState::new(&model_lens, lr),
            table: AdamState::new(&[table.action_count() * table.dim()], lr),
        }
    }
}

/// One optimizer step on the transition model and the embedding table.
///
/// Frozen components are left untouched (bit-identical); with both frozen the
/// call degenerates to a loss evaluation.
pub fn train_embeddings_step(
    model: &mut TransitionModel,
    table: &mut ActionEmbeddingTable,
    batch: &[EmbedSample],
    noise: &[Vec<f64>],
    optim: &mut EmbedOptim,
) -> Result<f64> {
    let (loss, grads) = embedding_loss_and_grads(model, table, batch, noise)?;
    if !model.frozen {
        let mut blocks = model.param_blocks_mut();
        let mut grad_blocks: Vec<&[f64]> = Vec::new();
        if let Some(enc) = &grads.encoder {
            grad_blocks.extend(enc.blocks());
        }
        grad_blocks.extend(grads.decoder.blocks());
        optim.model.step(&mut blocks, &grad_blocks)?;
    }
    if !table.frozen {
        optim
            .table
            .step(&mut table.param_blocks_mut(), &[&grads.table])?;
    }
    Ok(loss)
}

/// Shuffled minibatch epochs of [`train_embeddings_step`] over a fixed
/// dataset. Returns the per-epoch mean loss (pre-step losses). Zero epochs
/// leave every parameter untouched and return an empty history.
pub fn fit_embeddings_offline(
    model: &mut TransitionModel,
    table: &mut ActionEmbeddingTable,
    dataset: &[Transition],
    embedder: &StateEmbedder,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if dataset.is_empty() {
        return Err(Error::Empty {
            what: "embedding dataset",
        });
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let samples: Vec<EmbedSample> = dataset
        .iter()
        .map(|t| EmbedSample::from_transition(t, embedder))
        .collect();
    let mut optim = EmbedOptim::new(model, table, lr);
    let mut history = Vec::with_capacity(epochs);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for _ in 0..epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<EmbedSample> = chunk.iter().map(|&i| samples[i].clone()).collect();
            let noise: Vec<Vec<f64>> = match model.mode {
                TransitionMode::Latent => {
                    (0..batch.len()).map(|_| rng.normal_vec(model.z_dim)).collect()
                }
                TransitionMode::Deterministic => vec![Vec::new(); batch.len()],
            };
            let loss = train_embeddings_step(model, table, &batch, &noise, &mut optim)?;
            epoch_loss += loss * batch.len() as f64;
        }
        history.push(epoch_loss / samples.len() as f64);
    }
    Ok(history)
}
