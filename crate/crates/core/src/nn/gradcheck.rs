//! Central-finite-difference gradient checking.

/// Types exposing their trainable parameters as flat mutable blocks.
///
/// Block order must be stable and must match the gradient layout handed to
/// [`gradient_check`].
pub trait ParamBlocks {
    fn param_blocks(&self) -> Vec<&[f64]>;
    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]>;
}

/// Relative error between an analytic and a numeric derivative.
///
/// Both being tiny (< 1e-6) counts as agreement; otherwise the difference is
/// scaled by the larger magnitude.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    if analytic.abs() < 1e-6 && numeric.abs() < 1e-6 {
        0.0
    } else {
        (analytic - numeric).abs() / analytic.abs().max(numeric.abs())
    }
}

fn set_param<M: ParamBlocks + ?Sized>(model: &mut M, block: usize, index: usize, value: f64) {
    model.param_blocks_mut()[block][index] = value;
}

/// Compare `analytic` gradients against central finite differences of `loss`.
///
/// `loss` must be deterministic given the model parameters (fix any noise
/// inputs beforehand). `analytic` is indexed like [`ParamBlocks::param_blocks`].
/// Returns the maximum relative error over all parameters.
pub fn gradient_check<M, F>(model: &mut M, analytic: &[Vec<f64>], h: f64, loss: F) -> f64
where
    M: ParamBlocks + ?Sized,
    F: Fn(&M) -> f64,
{
    let block_lens: Vec<usize> = model.param_blocks().iter().map(|b| b.len()).collect();
    assert_eq!(
        block_lens.len(),
        analytic.len(),
        "analytic gradient block count mismatch"
    );
    let mut worst = 0.0f64;
    for (k, &len) in block_lens.iter().enumerate() {
        assert_eq!(analytic[k].len(), len, "analytic gradient length mismatch");
        for i in 0..len {
            let orig = model.param_blocks()[k][i];
            set_param(model, k, i, orig + h);
            let plus = loss(model);
            set_param(model, k, i, orig - h);
            let minus = loss(model);
            set_param(model, k, i, orig);
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(rel_err(analytic[k][i], numeric));
        }
    }
    worst
}
