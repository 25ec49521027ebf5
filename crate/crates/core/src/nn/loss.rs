//! KL divergence between univariate Gaussians.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("sigma must be positive, got {0}")]
pub struct NonPositiveSigma(pub f64);

/// `KL(N(μ1, σ1) ‖ N(μ2, σ2)) = ln(σ2/σ1) − 1/2 + (σ1² + (μ1 − μ2)²) / (2σ2²)`.
///
/// The first argument is the prediction, the second the label.
pub fn kl_divergence(mu1: f64, sigma1: f64, mu2: f64, sigma2: f64) -> Result<f64, NonPositiveSigma> {
    for s in [sigma1, sigma2] {
        if !(s > 0.0) {
            return Err(NonPositiveSigma(s));
        }
    }
    Ok(super::autodiff::gaussian_kl_with_grad(mu1, sigma1, mu2, sigma2).0)
}
