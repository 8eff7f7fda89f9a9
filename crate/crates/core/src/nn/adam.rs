use crate::nn::mlp::{Mlp, ParamGrads};
use crate::nn::ParamBlocks;
use crate::{Error, Result};

/// Bias-corrected Adam over a fixed set of parameter blocks.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(block_lens: &[usize], lr: f64) -> Self {
        assert!(lr > 0.0 && lr.is_finite(), "learning rate must be positive");
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: block_lens.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: block_lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_mlp(mlp: &Mlp, lr: f64) -> Self {
        Self::new(&mlp.param_block_lens(), lr)
    }

    /// One optimizer step over all blocks. Rejects non-finite gradients before
    /// touching any parameter and verifies parameters stay finite afterwards.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != self.first_moment.len() {
            return Err(Error::DimensionMismatch {
                context: "adam block count",
                expected: self.first_moment.len(),
                got: params.len().min(grads.len()),
            });
        }
        for (k, g) in grads.iter().enumerate() {
            if g.len() != self.first_moment[k].len() {
                return Err(Error::DimensionMismatch {
                    context: "adam block length",
                    expected: self.first_moment[k].len(),
                    got: g.len(),
                });
            }
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    block: "adam gradient block",
                    index: i,
                });
            }
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(&mut self.second_moment))
        {
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
                if !p[i].is_finite() {
                    return Err(Error::NonFiniteParam {
                        block: "adam parameter block",
                        index: i,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Convenience wrapper: apply one Adam step to an MLP's parameters.
pub fn adam_step(mlp: &mut Mlp, grads: &ParamGrads, state: &mut AdamState) -> Result<()> {
    let mut blocks = mlp.param_blocks_mut();
    state.step(&mut blocks, &grads.blocks())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut p = vec![1.5, -2.0];
        let mut state = AdamState::new(&[2], 0.1);
        let g = vec![0.0, 0.0];
        state.step(&mut [&mut p], &[&g]).unwrap();
        assert_eq!(p, vec![1.5, -2.0]);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn first_step_matches_hand_evaluation() {
        // param 0, grad 4, lr 0.1: bias corrections make the first step
        // lr * sign(g) up to epsilon.
        let mut p = vec![0.0];
        let mut state = AdamState::new(&[1], 0.1);
        let g = vec![4.0];
        state.step(&mut [&mut p], &[&g]).unwrap();
        assert!((p[0] + 0.1).abs() < 1e-8, "got {}", p[0]);
    }

    #[test]
    fn constant_gradient_descends_monotonically() {
        let mut p = vec![0.3];
        let mut state = AdamState::new(&[1], 0.05);
        let g = vec![2.0];
        let mut prev = p[0];
        for _ in 0..2 {
            state.step(&mut [&mut p], &[&g]).unwrap();
            assert!(p[0] < prev);
            prev = p[0];
        }
    }

    #[test]
    fn non_finite_gradients_are_rejected_without_update() {
        let mut p = vec![1.0];
        let mut state = AdamState::new(&[1], 0.1);
        let g = vec![f64::NAN];
        let err = state.step(&mut [&mut p], &[&g]);
        assert!(matches!(err, Err(Error::NonFiniteGradient { .. })));
        assert_eq!(p, vec![1.0]);
        assert_eq!(state.step_count, 0);
    }

    #[test]
    fn step_count_increments_once_per_step() {
        let mut mlp = Mlp::zeros(&[2, 2], Activation::Relu, Activation::Linear).unwrap();
        let mut state = AdamState::for_mlp(&mlp, 0.01);
        let grads = ParamGrads::zeros_like(&mlp);
        for want in 1..=5 {
            adam_step(&mut mlp, &grads, &mut state).unwrap();
            assert_eq!(state.step_count, want);
        }
    }
}
