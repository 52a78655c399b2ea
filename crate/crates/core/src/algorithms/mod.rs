//! The seven federated algorithms as pairs of a local-training procedure and
//! a server aggregation rule, with the state each one keeps across rounds.

mod local;
mod server;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use local::{
    local_update, local_update_feddyn, local_update_fedprox, local_update_scaffold,
    local_update_sgd, steps_per_epoch,
};
pub use server::{
    aggregate_weighted, fedadp_weights, fedavg_weights, feddkw_weights, feddyn_aggregate,
    fednova_aggregate, gompertz, sample_fractions, scaffold_aggregate, AngleState, ServerState,
};

use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Algorithm {
    FedAvg,
    FedProx,
    Scaffold,
    FedDyn,
    FedNova,
    FedAdp,
    FedDkw,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::FedAvg,
        Algorithm::FedProx,
        Algorithm::Scaffold,
        Algorithm::FedDyn,
        Algorithm::FedNova,
        Algorithm::FedAdp,
        Algorithm::FedDkw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FedAvg => "FedAvg",
            Algorithm::FedProx => "FedProx",
            Algorithm::Scaffold => "SCAFFOLD",
            Algorithm::FedDyn => "FedDyn",
            Algorithm::FedNova => "FedNova",
            Algorithm::FedAdp => "FedAdp",
            Algorithm::FedDkw => "FedDkw",
        }
    }

    /// Whether clients keep state between the rounds they take part in.
    pub fn is_stateful(self) -> bool {
        matches!(self, Algorithm::Scaffold | Algorithm::FedDyn)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<Algorithm> for String {
    fn from(a: Algorithm) -> String {
        a.name().to_string()
    }
}

impl TryFrom<String> for Algorithm {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub eta: f64,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    /// Dropout rate applied after both hidden layers during local training.
    pub dropout: f64,
    pub mu: f64,
    pub alpha_dyn: f64,
    pub alpha_adp: f64,
    pub eta_g: f64,
    pub eps_dkw: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            eta: 0.01,
            epochs: 4,
            batches_per_epoch: 3,
            batch_size: 50,
            dropout: 0.2,
            mu: 0.1,
            alpha_dyn: 0.01,
            alpha_adp: 5.0,
            eta_g: 1.0,
            eps_dkw: 1e-6,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eta", self.eta),
            ("alpha_dyn", self.alpha_dyn),
            ("alpha_adp", self.alpha_adp),
            ("eta_g", self.eta_g),
            ("eps_dkw", self.eps_dkw),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::Config(format!("mu must be ≥ 0, got {}", self.mu)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if self.epochs == 0 || self.batches_per_epoch == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs, batches_per_epoch and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn dropout_rates(&self) -> [f64; 2] {
        [self.dropout, self.dropout]
    }
}

/// What the server sends at the start of a round.
#[derive(Debug, Clone, PartialEq)]
pub struct Broadcast {
    pub round: usize,
    pub params: ModelParams,
    /// SCAFFOLD server control variate.
    pub control: Option<Vec<f64>>,
}

/// What a client returns after local training.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub round: usize,
    pub params: ModelParams,
    pub n_samples: usize,
    pub local_steps: usize,
    pub label_distribution: Vec<f64>,
    /// SCAFFOLD `Δc_i`.
    pub delta_control: Option<Vec<f64>>,
    pub train_accuracy: f64,
    pub train_loss: f64,
}

/// Per-client memory kept across participations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClientState {
    /// SCAFFOLD `c_i`.
    pub control: Option<Vec<f64>>,
    /// FedDyn `g_i`.
    pub dyn_correction: Option<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_roundtrip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!("scaffold".parse::<Algorithm>().unwrap(), Algorithm::Scaffold);
        assert!("FedSGD".parse::<Algorithm>().is_err());
    }

    #[test]
    fn hyper_validation() {
        assert!(HyperParams::default().validate().is_ok());
        let bad = HyperParams { alpha_dyn: 0.0, ..HyperParams::default() };
        assert!(bad.validate().is_err());
        let bad = HyperParams { mu: -0.1, ..HyperParams::default() };
        assert!(bad.validate().is_err());
        let ok = HyperParams { mu: 0.0, ..HyperParams::default() };
        assert!(ok.validate().is_ok());
    }
}
