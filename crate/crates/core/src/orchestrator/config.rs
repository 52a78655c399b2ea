use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::algorithms::{Algorithm, HyperParams};
use crate::data::{DataSource, PipelineConfig};
use crate::error::{Error, Result};
use crate::partition::{PartitionSpec, SkewKind, SplitMode, DEFAULT_MAX_RESAMPLES, DEFAULT_MIN_SIZE};
use crate::seed;
use crate::transport::MqttSettings;

pub const DEFAULT_SITE_CAP: usize = 500;

/// Independent seeds for every random stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub split: u64,
    pub partition: u64,
    pub init: u64,
    pub training: u64,
    pub selection: u64,
    pub smote: u64,
}

impl Seeds {
    /// Derive all six seeds from one base value.
    pub fn from_base(base: u64) -> Self {
        let s = |tag: u64| seed::derive(base, &[tag]);
        Self {
            split: s(1),
            partition: s(2),
            init: s(3),
            training: s(4),
            selection: s(5),
            smote: s(6),
        }
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Self::from_base(0)
    }
}

/// Partitioning parameters; client count and seed come from the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    pub kind: SkewKind,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub feature: Option<String>,
    #[serde(default)]
    pub split_mode: Option<SplitMode>,
    /// Rows kept per client before oversampling; 0 disables the cap.
    #[serde(default = "default_cap")]
    pub per_site_cap: usize,
    #[serde(default = "default_min_size")]
    pub min_size: usize,
    #[serde(default = "default_max_resamples")]
    pub max_resamples: usize,
}

fn default_cap() -> usize {
    DEFAULT_SITE_CAP
}

fn default_min_size() -> usize {
    DEFAULT_MIN_SIZE
}

fn default_max_resamples() -> usize {
    DEFAULT_MAX_RESAMPLES
}

impl PartitionSection {
    pub fn label(alpha: f64) -> Self {
        Self {
            kind: SkewKind::Label,
            alpha: Some(alpha),
            feature: None,
            split_mode: None,
            per_site_cap: DEFAULT_SITE_CAP,
            min_size: DEFAULT_MIN_SIZE,
            max_resamples: DEFAULT_MAX_RESAMPLES,
        }
    }

    pub fn quantity(alpha: f64) -> Self {
        Self {
            kind: SkewKind::Quantity,
            ..Self::label(alpha)
        }
    }

    pub fn feature(name: &str, mode: SplitMode) -> Self {
        Self {
            kind: SkewKind::Feature,
            alpha: None,
            feature: Some(name.to_string()),
            split_mode: Some(mode),
            ..Self::label(1.0)
        }
    }

    pub fn to_spec(&self, clients: usize, seed: u64) -> PartitionSpec {
        PartitionSpec {
            kind: self.kind,
            clients,
            alpha: self.alpha,
            feature: self.feature.clone(),
            split_mode: self.split_mode,
            per_site_cap: (self.per_site_cap > 0).then_some(self.per_site_cap),
            min_size: self.min_size,
            max_resamples: self.max_resamples,
            seed,
        }
    }

    /// Short label such as `label a=0.1` or `feature age/even_intervals`.
    pub fn setup_label(&self) -> String {
        match self.kind {
            SkewKind::Feature => format!(
                "feature {}/{}",
                self.feature.as_deref().unwrap_or("?"),
                match self.split_mode {
                    Some(SplitMode::EvenIntervals) => "even_intervals",
                    Some(SplitMode::EvenSamples) => "even_samples",
                    None => "?",
                }
            ),
            k => format!("{} a={}", k.as_str(), self.alpha.unwrap_or(f64::NAN)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    #[default]
    Loopback,
    Mqtt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportConfig {
    pub kind: TransportKind,
    pub host: String,
    pub port: u16,
    pub username: Option<String>,
    pub password: Option<String>,
    pub connect_timeout_ms: u64,
    /// Longest wait for all updates of one round.
    pub round_timeout_ms: u64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            kind: TransportKind::Loopback,
            host: "localhost".into(),
            port: 1883,
            username: None,
            password: None,
            connect_timeout_ms: 10_000,
            round_timeout_ms: 120_000,
        }
    }
}

impl TransportConfig {
    pub fn mqtt_settings(&self, experiment_id: &str) -> MqttSettings {
        MqttSettings {
            host: self.host.clone(),
            port: self.port,
            username: self.username.clone(),
            password: self.password.clone(),
            client_prefix: format!("fedhet-{experiment_id}"),
            connect_timeout: Duration::from_millis(self.connect_timeout_ms),
            ..MqttSettings::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "runs".into() }
    }
}

/// Everything that determines one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub algorithm: Algorithm,
    pub clients: usize,
    pub clients_per_round: usize,
    pub rounds: usize,
    #[serde(default)]
    pub hyper: HyperParams,
    pub data: DataSource,
    /// Defaults to the stroke chain for stroke-layout sources and to no
    /// cleaning for generated numeric tables.
    #[serde(default)]
    pub pipeline: Option<PipelineConfig>,
    pub partition: PartitionSection,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub transport: TransportConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Directory written by `prepare`; when set, data and partition are read
    /// from it instead of being recomputed.
    #[serde(default)]
    pub prepared_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn pipeline(&self) -> PipelineConfig {
        self.pipeline.clone().unwrap_or_else(|| {
            if self.data.is_stroke_layout() {
                PipelineConfig::stroke()
            } else {
                PipelineConfig::plain()
            }
        })
    }

    pub fn partition_spec(&self) -> PartitionSpec {
        self.partition.to_spec(self.clients, self.seeds.partition)
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment_id.is_empty()
            || !self
                .experiment_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return Err(Error::Config(format!(
                "experiment_id {:?} must be non-empty and use only letters, digits, '-', '_' or '.'",
                self.experiment_id
            )));
        }
        if self.clients == 0 {
            return Err(Error::Config("clients must be at least 1".into()));
        }
        if self.clients_per_round == 0 || self.clients_per_round > self.clients {
            return Err(Error::Config(format!(
                "clients_per_round must lie in 1..={}, got {}",
                self.clients, self.clients_per_round
            )));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        self.hyper.validate()?;
        // A single client needs no partition, but its parameters are still
        // checked.
        self.partition
            .to_spec(self.clients.max(2), self.seeds.partition)
            .validate()?;
        let p = self.pipeline();
        if !(p.test_fraction > 0.0 && p.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction must lie in (0, 1), got {}",
                p.test_fraction
            )));
        }
        Ok(())
    }

    /// Stroke-layout surrogate with the reference protocol: K=6, two clients
    /// per round, 50 rounds.
    pub fn reference(algorithm: Algorithm, partition: PartitionSection, base_seed: u64) -> Self {
        Self {
            experiment_id: "reference".into(),
            algorithm,
            clients: 6,
            clients_per_round: 2,
            rounds: 50,
            hyper: HyperParams::default(),
            data: DataSource::StrokeLike {
                n: 5110,
                seed: 2022,
            },
            pipeline: None,
            partition,
            seeds: Seeds::from_base(base_seed),
            transport: TransportConfig::default(),
            output: OutputConfig::default(),
            prepared_dir: None,
        }
    }
}
