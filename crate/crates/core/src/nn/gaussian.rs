use crate::{Error, Result};

/// Clamp range applied to log-standard-deviation heads before exponentiation.
pub const LOG_SIGMA_MIN: f64 = -10.0;
pub const LOG_SIGMA_MAX: f64 = 2.0;

#[inline]
pub fn clamp_log_sigma(x: f64) -> f64 {
    x.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX)
}

/// Numerically stable softplus: ln(1 + e^x).
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Stable ln(1 - tanh(u)^2) = 2 (ln 2 - u - softplus(-2u)).
#[inline]
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// Reparameterized diagonal-Gaussian sample.
///
/// Returns `mu + exp(log_sigma) ⊙ noise` together with the log density of the
/// sample under N(mu, diag(sigma^2)).
pub fn gaussian_reparameterize(
    mu: &[f64],
    log_sigma: &[f64],
    noise: &[f64],
) -> Result<(Vec<f64>, f64)> {
    if mu.len() != log_sigma.len() || mu.len() != noise.len() {
        return Err(Error::DimensionMismatch {
            context: "gaussian_reparameterize",
            expected: mu.len(),
            got: log_sigma.len().min(noise.len()),
        });
    }
    let mut sample = Vec::with_capacity(mu.len());
    let mut log_prob = 0.0;
    let half_ln_two_pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    for ((&m, &ls), &n) in mu.iter().zip(log_sigma).zip(noise) {
        sample.push(m + ls.exp() * n);
        // Density at the sample: the standardized residual is exactly `n`.
        log_prob += -0.5 * n * n - ls - half_ln_two_pi;
    }
    Ok((sample, log_prob))
}
