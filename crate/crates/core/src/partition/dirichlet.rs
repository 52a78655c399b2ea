use rand::Rng as _;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::seed::Rng;

/// `ln X` for `X ~ Gamma(shape, 1)`. For shape < 1 the boost
/// `Gamma(shape) = Gamma(shape + 1)·U^(1/shape)` is applied in log space so
/// that tiny concentrations never underflow to an all-zero draw.
fn ln_gamma_sample(shape: f64, rng: &mut Rng) -> f64 {
    if shape >= 1.0 {
        Gamma::new(shape, 1.0).unwrap().sample(rng).ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).unwrap().sample(rng);
        let u: f64 = rng.random();
        // u is in [0, 1); 1 − u is in (0, 1].
        g.ln() + (1.0 - u).ln() / shape
    }
}

/// One draw from `Dir(alpha)` via normalized Gamma(α_i, 1) variates.
pub fn dirichlet_sample(alpha: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(Error::InvalidArgument("Dirichlet needs at least one component".into()));
    }
    if alpha.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "Dirichlet concentrations must be positive and finite, got {alpha:?}"
        )));
    }
    if alpha.len() == 1 {
        return Ok(vec![1.0]);
    }
    let logs: Vec<f64> = alpha.iter().map(|&a| ln_gamma_sample(a, rng)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Symmetric `Dir(α·1_K)`.
pub fn symmetric_dirichlet(alpha: f64, k: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    dirichlet_sample(&vec![alpha; k], rng)
}
