//! Minimal differentiable MLP toolkit.
//!
//! Explicit forward/backward passes over dense layers, a bias-corrected Adam
//! optimizer working on parameter blocks, reparameterized Gaussian sampling,
//! and a central-finite-difference gradient checker. Everything runs in double
//! precision so analytic gradients can be validated against finite differences
//! with tight tolerances.

mod adam;
mod gaussian;
mod gradcheck;
mod mlp;

pub use adam::{adam_step, AdamState};
pub use gaussian::{
    clamp_log_sigma, gaussian_reparameterize, log_one_minus_tanh_sq, softplus, LOG_SIGMA_MAX,
    LOG_SIGMA_MIN,
};
pub use gradcheck::{gradient_check, rel_err, ParamBlocks};
pub use mlp::{Activation, Mlp, ParamGrads};
