//! Federated partitions of a training set: quantity skew and label skew via
//! symmetric Dirichlet draws, feature skew via windows over one raw feature,
//! plus heterogeneity measures.

mod dirichlet;
mod measure;
mod skew;

use std::fmt::Write as _;
use std::io::{Read, Write};

use log::info;
use rand::seq::index;
use serde::{Deserialize, Serialize};

pub use dirichlet::{dirichlet_sample, symmetric_dirichlet};
pub use measure::{
    heterogeneity_level, kl_divergence_discrete, total_variation, HeterogeneityLevel,
    KL_SMOOTHING,
};

use crate::data::EncodedDataset;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkewKind {
    Quantity,
    Label,
    Feature,
}

impl SkewKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SkewKind::Quantity => "quantity",
            SkewKind::Label => "label",
            SkewKind::Feature => "feature",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    EvenIntervals,
    EvenSamples,
}

pub const DEFAULT_MIN_SIZE: usize = 50;
pub const DEFAULT_MAX_RESAMPLES: usize = 10_000;

fn default_min_size() -> usize {
    DEFAULT_MIN_SIZE
}

fn default_max_resamples() -> usize {
    DEFAULT_MAX_RESAMPLES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub kind: SkewKind,
    pub clients: usize,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub feature: Option<String>,
    #[serde(default)]
    pub split_mode: Option<SplitMode>,
    #[serde(default)]
    pub per_site_cap: Option<usize>,
    /// Smallest acceptable client size for the Dirichlet skews.
    #[serde(default = "default_min_size")]
    pub min_size: usize,
    #[serde(default = "default_max_resamples")]
    pub max_resamples: usize,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn quantity(clients: usize, alpha: f64, seed: u64) -> Self {
        Self::dirichlet(SkewKind::Quantity, clients, alpha, seed)
    }

    pub fn label(clients: usize, alpha: f64, seed: u64) -> Self {
        Self::dirichlet(SkewKind::Label, clients, alpha, seed)
    }

    pub fn feature(clients: usize, feature: &str, mode: SplitMode, seed: u64) -> Self {
        Self {
            kind: SkewKind::Feature,
            clients,
            alpha: None,
            feature: Some(feature.to_string()),
            split_mode: Some(mode),
            per_site_cap: None,
            min_size: DEFAULT_MIN_SIZE,
            max_resamples: DEFAULT_MAX_RESAMPLES,
            seed,
        }
    }

    fn dirichlet(kind: SkewKind, clients: usize, alpha: f64, seed: u64) -> Self {
        Self {
            kind,
            clients,
            alpha: Some(alpha),
            feature: None,
            split_mode: None,
            per_site_cap: None,
            min_size: DEFAULT_MIN_SIZE,
            max_resamples: DEFAULT_MAX_RESAMPLES,
            seed,
        }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.per_site_cap = Some(cap);
        self
    }

    pub fn with_min_size(mut self, min_size: usize) -> Self {
        self.min_size = min_size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.clients < 2 {
            return Err(Error::Config(format!(
                "a partition needs at least 2 clients, got {}",
                self.clients
            )));
        }
        if self.per_site_cap == Some(0) {
            return Err(Error::Config("per_site_cap must be positive".into()));
        }
        match self.kind {
            SkewKind::Quantity | SkewKind::Label => match self.alpha {
                Some(a) if a > 0.0 && a.is_finite() => Ok(()),
                other => Err(Error::Config(format!(
                    "{} skew needs a positive alpha, got {other:?}",
                    self.kind.as_str()
                ))),
            },
            SkewKind::Feature => {
                if self.feature.is_none() || self.split_mode.is_none() {
                    Err(Error::Config(
                        "feature skew needs both `feature` and `split_mode`".into(),
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Short label such as `label α=0.1` or `feature bmi/even_samples`.
    pub fn describe(&self) -> String {
        match (self.kind, self.alpha, &self.feature, self.split_mode) {
            (SkewKind::Feature, _, Some(f), Some(m)) => format!(
                "feature {f}/{}",
                match m {
                    SplitMode::EvenIntervals => "even_intervals",
                    SplitMode::EvenSamples => "even_samples",
                }
            ),
            (kind, Some(a), _, _) => format!("{} α={a}", kind.as_str()),
            (kind, ..) => kind.as_str().to_string(),
        }
    }
}

/// Counts of rows with label 1 per equal-width bin of the partition feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinCount {
    pub rows: usize,
    pub positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSummary {
    pub size: usize,
    pub class_counts: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_range: Option<(f64, f64)>,
    /// Label counts per global feature bin, feature partitions only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conditional: Vec<BinCount>,
}

impl ClientSummary {
    pub fn label_distribution(&self) -> [f64; 2] {
        let n = self.size.max(1) as f64;
        [self.class_counts[0] as f64 / n, self.class_counts[1] as f64 / n]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub source_rows: usize,
    pub clients: Vec<ClientSummary>,
    /// Rows dropped by flooring `p_i·|D|`.
    pub unassigned: usize,
    /// Rows dropped by label-skew total equalization.
    pub trimmed: usize,
    /// Rows dropped by the per-site cap.
    pub capped: usize,
    pub resamples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows: Option<Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub spec: PartitionSpec,
    pub assignments: Vec<Vec<usize>>,
    pub summary: PartitionSummary,
}

const CONDITIONAL_BINS: usize = 10;

impl Partition {
    pub fn num_clients(&self) -> usize {
        self.assignments.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.assignments.iter().map(Vec::len).collect()
    }

    /// Shards of `ds` in client order.
    pub fn client_datasets(&self, ds: &EncodedDataset) -> Result<Vec<EncodedDataset>> {
        if ds.len() != self.summary.source_rows {
            return Err(Error::Partition(format!(
                "partition was built over {} rows but the dataset has {}",
                self.summary.source_rows,
                ds.len()
            )));
        }
        Ok(self.assignments.iter().map(|a| ds.subset(a)).collect())
    }

    pub fn check_invariants(&self) -> Result<()> {
        let mut seen = vec![false; self.summary.source_rows];
        for (c, rows) in self.assignments.iter().enumerate() {
            if rows.is_empty() {
                return Err(Error::Partition(format!("client {c} is empty")));
            }
            for &r in rows {
                match seen.get_mut(r) {
                    Some(s) if !*s => *s = true,
                    Some(_) => return Err(Error::Partition(format!("row {r} assigned twice"))),
                    None => return Err(Error::Partition(format!("row {r} out of range"))),
                }
            }
        }
        Ok(())
    }

    /// Text histogram of per-client sizes and label mix.
    pub fn render_summary(&self) -> String {
        let s = &self.summary;
        let widest = s.clients.iter().map(|c| c.size).max().unwrap_or(1).max(1);
        let mut out = String::new();
        let _ = writeln!(out, "partition: {} over {} rows", self.spec.describe(), s.source_rows);
        if let Some(a) = self.spec.alpha {
            if let Ok(level) = heterogeneity_level(a) {
                let _ = writeln!(out, "heterogeneity: {level}");
            }
        }
        for (i, c) in s.clients.iter().enumerate() {
            let bar = 40 * c.size / widest;
            let pos_bar = (bar * c.class_counts[1]).checked_div(c.size).unwrap_or(0);
            let _ = write!(
                out,
                "client {i:>2} {:>6} |{}{}{}| pos {:>5.1}%",
                c.size,
                "#".repeat(pos_bar),
                "=".repeat(bar - pos_bar),
                " ".repeat(40 - bar),
                100.0 * c.label_distribution()[1]
            );
            if let Some((lo, hi)) = c.feature_range {
                let _ = write!(out, "  range [{lo:.2}, {hi:.2}]");
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "dropped: {} by flooring, {} by equalization, {} by cap; {} resamples",
            s.unassigned, s.trimmed, s.capped, s.resamples
        );
        for w in &s.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

/// Partition the rows of `ds` according to `spec`, then apply the per-site cap.
pub fn partition(ds: &EncodedDataset, spec: &PartitionSpec) -> Result<Partition> {
    spec.validate()?;
    let k = spec.clients;
    let mut rng = seed::rng(spec.seed);
    let raw_feature = match &spec.feature {
        Some(f) if spec.kind == SkewKind::Feature => Some(ds.raw_feature(f)?),
        _ => None,
    };
    let mut draw = match spec.kind {
        SkewKind::Quantity => skew::quantity_skew(
            &ds.labels,
            k,
            spec.alpha.unwrap(),
            spec.min_size,
            spec.max_resamples,
            &mut rng,
        )?,
        SkewKind::Label => skew::label_skew(
            &ds.labels,
            k,
            spec.alpha.unwrap(),
            spec.min_size,
            spec.max_resamples,
            &mut rng,
        )?,
        SkewKind::Feature => {
            let values = raw_feature.as_deref().unwrap();
            match spec.split_mode.unwrap() {
                SplitMode::EvenIntervals => skew::feature_even_intervals(values, k)?,
                SplitMode::EvenSamples => skew::feature_even_samples(values, k)?,
            }
        }
    };

    let mut capped = 0;
    if let Some(cap) = spec.per_site_cap {
        for (c, rows) in draw.assignments.iter_mut().enumerate() {
            if rows.len() > cap {
                let mut cap_rng = seed::rng_for(spec.seed, &[seed::TAG_CAP, c as u64]);
                let mut keep: Vec<usize> = index::sample(&mut cap_rng, rows.len(), cap)
                    .into_iter()
                    .map(|i| rows[i])
                    .collect();
                keep.sort_unstable();
                capped += rows.len() - cap;
                *rows = keep;
            }
        }
    }

    let bins = raw_feature.as_deref().map(|v| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    });
    let clients = draw
        .assignments
        .iter()
        .map(|rows| {
            let mut class_counts = [0usize; 2];
            for &r in rows {
                class_counts[usize::from(ds.labels[r])] += 1;
            }
            let (feature_range, conditional) = match (&raw_feature, bins) {
                (Some(v), Some((lo, hi))) if !rows.is_empty() => {
                    let mut hist = vec![BinCount { rows: 0, positives: 0 }; CONDITIONAL_BINS];
                    let (mut cmin, mut cmax) = (f64::INFINITY, f64::NEG_INFINITY);
                    for &r in rows {
                        cmin = cmin.min(v[r]);
                        cmax = cmax.max(v[r]);
                        let b = (((v[r] - lo) / (hi - lo)) * CONDITIONAL_BINS as f64) as usize;
                        let b = b.min(CONDITIONAL_BINS - 1);
                        hist[b].rows += 1;
                        hist[b].positives += usize::from(ds.labels[r]);
                    }
                    (Some((cmin, cmax)), hist)
                }
                _ => (None, Vec::new()),
            };
            ClientSummary {
                size: rows.len(),
                class_counts,
                feature_range,
                conditional,
            }
        })
        .collect();

    let p = Partition {
        spec: spec.clone(),
        assignments: draw.assignments,
        summary: PartitionSummary {
            source_rows: ds.len(),
            clients,
            unassigned: draw.unassigned,
            trimmed: draw.trimmed,
            capped,
            resamples: draw.resamples,
            windows: draw.windows,
            warnings: draw.warnings,
        },
    };
    p.check_invariants()?;
    info!(
        "{}: sizes {:?}, {} unassigned, {} trimmed, {} capped, {} resamples",
        spec.describe(),
        p.sizes(),
        p.summary.unassigned,
        p.summary.trimmed,
        p.summary.capped,
        p.summary.resamples
    );
    Ok(p)
}

pub fn write_partition<W: Write>(p: &Partition, w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, p)?;
    Ok(())
}

pub fn read_partition<R: Read>(r: R) -> Result<Partition> {
    let p: Partition = serde_json::from_reader(r)?;
    p.spec.validate()?;
    if p.assignments.len() != p.spec.clients || p.summary.clients.len() != p.spec.clients {
        return Err(Error::Partition(format!(
            "partition lists {} clients but the spec asks for {}",
            p.assignments.len(),
            p.spec.clients
        )));
    }
    p.check_invariants()?;
    Ok(p)
}
