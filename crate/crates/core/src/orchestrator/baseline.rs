use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::engine::{initial_params, training_seed, ClientMetrics, RoundRecord};
use super::workload::Workload;
use crate::algorithms::local_update_sgd;
use crate::data::EncodedDataset;
use crate::error::{Error, Result};
use crate::model::evaluate_full;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Every client trains alone; metrics are averaged over clients.
    NoFederation,
    /// One model on the pooled client data.
    Centralized,
}

impl BaselineKind {
    pub fn label(self) -> &'static str {
        match self {
            BaselineKind::NoFederation => "NoFed",
            BaselineKind::Centralized => "Centralized",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nofed" | "no_federation" => Ok(BaselineKind::NoFederation),
            "central" | "centralized" => Ok(BaselineKind::Centralized),
            _ => Err(Error::Config(format!("unknown baseline {s} (nofed or central)"))),
        }
    }
}

/// Baseline metrics per round.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSeries {
    pub kind: BaselineKind,
    pub records: Vec<RoundRecord>,
    /// Test accuracy of every trained model per round (one model for the
    /// centralized baseline).
    pub model_accuracy: Vec<Vec<f64>>,
}

/// Train each dataset on its own for `cfg.rounds` rounds of local SGD, using
/// the same initial model and per-round seeds as FL client `ids[j]`.
fn train_independent(
    cfg: &ExperimentConfig,
    datasets: &[&EncodedDataset],
    ids: &[usize],
    test: &EncodedDataset,
) -> Result<(Vec<RoundRecord>, Vec<Vec<f64>>)> {
    cfg.validate()?;
    let init = initial_params(cfg, test.dim())?;
    let mut models = vec![init; datasets.len()];
    let mut records = Vec::with_capacity(cfg.rounds);
    let mut per_model = Vec::with_capacity(cfg.rounds);
    for t in 1..=cfg.rounds {
        let started = Instant::now();
        let (mut acc, mut bal, mut loss) = (Vec::new(), Vec::new(), Vec::new());
        let mut clients = Vec::new();
        for (j, ds) in datasets.iter().enumerate() {
            let u = local_update_sgd(&models[j], ds, &cfg.hyper, training_seed(cfg.seeds.training, ids[j], t))?;
            let e = evaluate_full(&u.params, &test.features, &test.labels)?;
            acc.push(e.accuracy);
            bal.push(e.balanced_accuracy);
            loss.push(e.loss);
            clients.push(ClientMetrics {
                client_id: ids[j],
                n_samples: u.n_samples,
                local_steps: u.local_steps,
                train_accuracy: u.train_accuracy,
                train_loss: u.train_loss,
            });
            models[j] = u.params;
        }
        let n = datasets.len() as f64;
        records.push(RoundRecord {
            round: t,
            participants: ids.to_vec(),
            weights: Vec::new(),
            accuracy: acc.iter().sum::<f64>() / n,
            balanced_accuracy: bal.iter().sum::<f64>() / n,
            loss: loss.iter().sum::<f64>() / n,
            wall_ms: started.elapsed().as_millis() as u64,
            clients,
        });
        per_model.push(acc);
    }
    Ok((records, per_model))
}

/// Clients train only on their own shards; the reported metric is the mean
/// test accuracy over clients.
pub fn run_no_federation_baseline(cfg: &ExperimentConfig, workload: &Workload) -> Result<BaselineSeries> {
    let shards: Vec<&EncodedDataset> = workload.shards.iter().collect();
    let ids: Vec<usize> = (0..shards.len()).collect();
    let (records, model_accuracy) = train_independent(cfg, &shards, &ids, &workload.test)?;
    Ok(BaselineSeries {
        kind: BaselineKind::NoFederation,
        records,
        model_accuracy,
    })
}

/// One model on the union of all client shards, with the step budget of one
/// FL client per round.
pub fn run_centralized_baseline(cfg: &ExperimentConfig, workload: &Workload) -> Result<BaselineSeries> {
    let parts: Vec<&EncodedDataset> = workload.shards.iter().collect();
    let pooled = EncodedDataset::concat(&parts)?;
    let (records, model_accuracy) = train_independent(cfg, &[&pooled], &[0], &workload.test)?;
    Ok(BaselineSeries {
        kind: BaselineKind::Centralized,
        records,
        model_accuracy,
    })
}

pub fn run_baseline(kind: BaselineKind, cfg: &ExperimentConfig, workload: &Workload) -> Result<BaselineSeries> {
    match kind {
        BaselineKind::NoFederation => run_no_federation_baseline(cfg, workload),
        BaselineKind::Centralized => run_centralized_baseline(cfg, workload),
    }
}
