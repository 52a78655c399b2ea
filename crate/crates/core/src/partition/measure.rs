use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Qualitative heterogeneity level of a Dirichlet concentration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeterogeneityLevel {
    Extreme,
    High,
    HighMedium,
    Medium,
    Low,
    Homogeneous,
}

impl fmt::Display for HeterogeneityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeterogeneityLevel::Extreme => "Extreme",
            HeterogeneityLevel::High => "High",
            HeterogeneityLevel::HighMedium => "High/Medium",
            HeterogeneityLevel::Medium => "Medium",
            HeterogeneityLevel::Low => "Low",
            HeterogeneityLevel::Homogeneous => "Homogeneous",
        })
    }
}

/// Lower bounds are inclusive: `[0.1, 0.3)` is High, `[10, ∞)` Homogeneous.
pub fn heterogeneity_level(alpha: f64) -> Result<HeterogeneityLevel> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "concentration must be positive, got {alpha}"
        )));
    }
    Ok(match alpha {
        a if a < 0.1 => HeterogeneityLevel::Extreme,
        a if a < 0.3 => HeterogeneityLevel::High,
        a if a < 0.5 => HeterogeneityLevel::HighMedium,
        a if a < 0.7 => HeterogeneityLevel::Medium,
        a if a < 10.0 => HeterogeneityLevel::Low,
        _ => HeterogeneityLevel::Homogeneous,
    })
}

/// Additive smoothing applied to both arguments of the KL divergence.
pub const KL_SMOOTHING: f64 = 1e-9;

/// `KL(P ‖ Q)` in nats after adding [`KL_SMOOTHING`] to every bin of both
/// distributions and renormalizing.
pub fn kl_divergence_discrete(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!(
            "distributions of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    let smooth = |v: &[f64]| {
        let s: f64 = v.iter().map(|x| x + KL_SMOOTHING).sum();
        v.iter().map(|x| (x + KL_SMOOTHING) / s).collect::<Vec<_>>()
    };
    let (ps, qs) = (smooth(p), smooth(q));
    let kl: f64 = ps
        .iter()
        .zip(&qs)
        .map(|(a, b)| a * (a / b).ln())
        .sum();
    Ok(kl.max(0.0))
}

/// Total-variation distance between two discrete distributions.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
