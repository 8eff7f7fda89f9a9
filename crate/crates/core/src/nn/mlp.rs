use crate::nn::gradcheck::ParamBlocks;
use crate::rng::Rng;
use crate::{Error, Result};

/// Activation applied after a dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the post-activation value.
    #[inline]
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

/// Feed-forward multilayer perceptron with one activation for hidden layers
/// and one for the output layer.
///
/// Weight matrices are stored row-major with shape `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    hidden_activation: Activation,
    output_activation: Activation,
}

/// Parameter gradients mirroring an [`Mlp`]'s weight and bias shapes.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            weights: mlp.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: mlp.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            for v in w.iter_mut() {
                *v *= factor;
            }
        }
        for b in &mut self.biases {
            for v in b.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub fn add(&mut self, other: &ParamGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    /// Gradient blocks in the same order as [`Mlp::param_blocks`].
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.weights.len() * 2);
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice());
            out.push(b.as_slice());
        }
        out
    }
}

impl Mlp {
    fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(
                "an MLP needs at least an input and an output width".into(),
            ));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        Ok(())
    }

    /// All-zero parameters.
    pub fn zeros(
        layer_sizes: &[usize],
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        Self::validate_sizes(layer_sizes)?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_sizes.windows(2) {
            weights.push(vec![0.0; pair[0] * pair[1]]);
            biases.push(vec![0.0; pair[1]]);
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            hidden_activation,
            output_activation,
        })
    }

    /// Glorot-uniform weights (`±sqrt(6/(fan_in+fan_out))`), zero biases.
    pub fn glorot(
        layer_sizes: &[usize],
        hidden_activation: Activation,
        output_activation: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut mlp = Self::zeros(layer_sizes, hidden_activation, output_activation)?;
        for (l, w) in mlp.weights.iter_mut().enumerate() {
            let fan_in = mlp.layer_sizes[l];
            let fan_out = mlp.layer_sizes[l + 1];
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in w.iter_mut() {
                *v = rng.uniform(-limit, limit);
            }
        }
        Ok(mlp)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.weights[layer]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut Vec<f64> {
        &mut self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut Vec<f64> {
        &mut self.biases[layer]
    }

    fn activation_for(&self, layer: usize) -> Activation {
        if layer + 1 == self.weights.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    /// Forward pass. Pure: identical parameters and input give bit-identical
    /// output.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "mlp forward input",
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let trace = self.forward_trace(input);
        Ok(trace.into_iter().last().unwrap())
    }

    /// Post-activation outputs of every layer, for use by [`Self::backward_from_trace`].
    pub(crate) fn forward_trace(&self, input: &[f64]) -> Vec<Vec<f64>> {
        debug_assert_eq!(input.len(), self.input_dim());
        let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(self.weights.len());
        for layer in 0..self.weights.len() {
            let x: &[f64] = if layer == 0 {
                input
            } else {
                &outputs[layer - 1]
            };
            let in_dim = self.layer_sizes[layer];
            let out_dim = self.layer_sizes[layer + 1];
            let act = self.activation_for(layer);
            let w = &self.weights[layer];
            let b = &self.biases[layer];
            let mut y = Vec::with_capacity(out_dim);
            for o in 0..out_dim {
                let row = &w[o * in_dim..(o + 1) * in_dim];
                let mut z = b[o];
                for (wi, xi) in row.iter().zip(x) {
                    z += wi * xi;
                }
                y.push(act.apply(z));
            }
            outputs.push(y);
        }
        outputs
    }

    /// Exact gradients of `upstream · output` with respect to parameters and
    /// the input. Recomputes activations internally.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(ParamGrads, Vec<f64>)> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "mlp backward input",
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        if upstream.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "mlp backward upstream",
                expected: self.output_dim(),
                got: upstream.len(),
            });
        }
        let trace = self.forward_trace(input);
        let mut grads = ParamGrads::zeros_like(self);
        let input_grad = self.backward_from_trace(input, &trace, upstream, &mut grads);
        Ok((grads, input_grad))
    }

    /// Backprop using cached activations, accumulating into `grads`.
    /// Returns the gradient with respect to the input.
    pub(crate) fn backward_from_trace(
        &self,
        input: &[f64],
        trace: &[Vec<f64>],
        upstream: &[f64],
        grads: &mut ParamGrads,
    ) -> Vec<f64> {
        debug_assert_eq!(trace.len(), self.weights.len());
        debug_assert_eq!(upstream.len(), self.output_dim());

        // dL/dz for the current layer, walking backwards.
        let mut dz: Vec<f64> = Vec::new();
        for layer in (0..self.weights.len()).rev() {
            let act = self.activation_for(layer);
            let y = &trace[layer];
            let dy: &[f64] = if layer + 1 == self.weights.len() {
                upstream
            } else {
                &dz
            };
            let cur: Vec<f64> = dy
                .iter()
                .zip(y)
                .map(|(g, yo)| g * act.grad_from_output(*yo))
                .collect();

            let in_dim = self.layer_sizes[layer];
            let x: &[f64] = if layer == 0 { input } else { &trace[layer - 1] };

            let dw = &mut grads.weights[layer];
            let db = &mut grads.biases[layer];
            for (o, g) in cur.iter().enumerate() {
                db[o] += *g;
                let row = &mut dw[o * in_dim..(o + 1) * in_dim];
                for (w, xi) in row.iter_mut().zip(x) {
                    *w += g * xi;
                }
            }

            // dL/dx = W^T dz
            let w = &self.weights[layer];
            let mut dx = vec![0.0; in_dim];
            for (o, g) in cur.iter().enumerate() {
                let row = &w[o * in_dim..(o + 1) * in_dim];
                for (d, wi) in dx.iter_mut().zip(row) {
                    *d += g * wi;
                }
            }
            if layer == 0 {
                return dx;
            }
            dz = dx;
        }
        unreachable!("mlp has at least one layer");
    }

    /// Gradient with respect to the input only, skipping parameter gradients.
    /// Used where a network acts as a fixed differentiable function.
    pub(crate) fn input_grad_from_trace(
        &self,
        input: &[f64],
        trace: &[Vec<f64>],
        upstream: &[f64],
    ) -> Vec<f64> {
        let mut dz: Vec<f64> = Vec::new();
        for layer in (0..self.weights.len()).rev() {
            let act = self.activation_for(layer);
            let y = &trace[layer];
            let dy: &[f64] = if layer + 1 == self.weights.len() {
                upstream
            } else {
                &dz
            };
            let cur: Vec<f64> = dy
                .iter()
                .zip(y)
                .map(|(g, yo)| g * act.grad_from_output(*yo))
                .collect();
            let in_dim = self.layer_sizes[layer];
            let w = &self.weights[layer];
            let mut dx = vec![0.0; in_dim];
            for (o, g) in cur.iter().enumerate() {
                let row = &w[o * in_dim..(o + 1) * in_dim];
                for (d, wi) in dx.iter_mut().zip(row) {
                    *d += g * wi;
                }
            }
            if layer == 0 {
                let _ = input;
                return dx;
            }
            dz = dx;
        }
        unreachable!("mlp has at least one layer");
    }

    /// Flat parameter views interleaved as `w0, b0, w1, b1, ...`, matching
    /// [`ParamGrads::blocks`].
    pub fn param_block_lens(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.weights.len() * 2);
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.len());
            out.push(b.len());
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.param_block_lens().iter().sum()
    }
}

impl ParamBlocks for Mlp {
    fn param_blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.weights.len() * 2);
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice());
            out.push(b.as_slice());
        }
        out
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.weights.len() * 2);
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_mut_slice());
            out.push(b.as_mut_slice());
        }
        out
    }
}
