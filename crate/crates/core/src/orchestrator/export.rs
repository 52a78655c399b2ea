use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::baseline::BaselineKind;
use super::config::ExperimentConfig;
use super::engine::{RoundRecord, TransportStats};
use crate::algorithms::Algorithm;
use crate::error::{Error, Result};
use crate::partition::PartitionSummary;

pub const CSV_HEADER: [&str; 11] = [
    "round",
    "algorithm",
    "setup",
    "skew",
    "alpha",
    "accuracy",
    "balanced_accuracy",
    "loss",
    "participants",
    "weights",
    "local_steps",
];

/// What produced a metrics series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Federated(Algorithm),
    Baseline(BaselineKind),
}

impl RunKind {
    pub fn label(self) -> String {
        match self {
            RunKind::Federated(a) => a.name().to_string(),
            RunKind::Baseline(b) => b.label().to_string(),
        }
    }
}

/// Identity of one run for file naming and CSV columns.
#[derive(Debug, Clone)]
pub struct RunMeta<'a> {
    pub kind: RunKind,
    pub config: &'a ExperimentConfig,
}

impl RunMeta<'_> {
    pub fn stem(&self) -> String {
        format!("{}-{}", self.config.experiment_id, self.kind.label().to_ascii_lowercase())
    }

    pub fn csv_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.csv", self.stem()))
    }

    pub fn summary_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.summary.json", self.stem()))
    }

    fn row(&self, r: &RoundRecord) -> Vec<String> {
        let join = |v: Vec<String>| v.join(";");
        let p = &self.config.partition;
        vec![
            r.round.to_string(),
            self.kind.label(),
            p.setup_label(),
            p.kind.as_str().to_string(),
            p.alpha.map(|a| a.to_string()).unwrap_or_default(),
            r.accuracy.to_string(),
            r.balanced_accuracy.to_string(),
            r.loss.to_string(),
            join(r.participants.iter().map(usize::to_string).collect()),
            join(r.weights.iter().map(f64::to_string).collect()),
            r.local_steps().to_string(),
        ]
    }
}

fn csv_bytes(meta: &RunMeta<'_>, records: &[RoundRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(meta.row(r))?;
    }
    w.into_inner()
        .map_err(|e| Error::Data(format!("csv buffer: {}", e.error())))
}

/// Summary document stored next to the CSV. Contains no wall-clock values,
/// so re-exporting identical records yields identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: String,
    pub setup: String,
    pub rounds: usize,
    pub final_accuracy: Option<f64>,
    pub final_balanced_accuracy: Option<f64>,
    pub final_loss: Option<f64>,
    pub best_accuracy: Option<f64>,
    pub total_local_steps: usize,
    pub transport: Option<TransportStats>,
    pub warnings: Vec<String>,
    pub partition: Option<PartitionSummary>,
    pub config: ExperimentConfig,
}

/// Extra context for the summary file.
#[derive(Debug, Clone, Default)]
pub struct SummaryExtras {
    pub transport: Option<TransportStats>,
    pub warnings: Vec<String>,
    pub partition: Option<PartitionSummary>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Write `<stem>.csv` (one row per round) and `<stem>.summary.json`, each
/// replaced atomically. Returns both paths.
pub fn export_metrics(
    records: &[RoundRecord],
    meta: &RunMeta<'_>,
    extras: &SummaryExtras,
    dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let csv_path = meta.csv_path(dir);
    write_atomic(&csv_path, &csv_bytes(meta, records)?)?;
    let best = records.iter().map(|r| r.accuracy).fold(None, |m: Option<f64>, a| {
        Some(m.map_or(a, |m| m.max(a)))
    });
    let summary = RunSummary {
        run: meta.kind.label(),
        setup: meta.config.partition.setup_label(),
        rounds: records.len(),
        final_accuracy: records.last().map(|r| r.accuracy),
        final_balanced_accuracy: records.last().map(|r| r.balanced_accuracy),
        final_loss: records.last().map(|r| r.loss),
        best_accuracy: best,
        total_local_steps: records.iter().map(RoundRecord::local_steps).sum(),
        transport: extras.transport,
        warnings: extras.warnings.clone(),
        partition: extras.partition.clone(),
        config: meta.config.clone(),
    };
    let summary_path = meta.summary_path(dir);
    let mut json = serde_json::to_vec_pretty(&summary)?;
    json.push(b'\n');
    write_atomic(&summary_path, &json)?;
    Ok((csv_path, summary_path))
}

/// Append-only CSV written while a run progresses, so that completed rounds
/// survive an aborted run. Lives next to the final file with a `.partial`
/// suffix and is removed by [`MetricsAppender::finish`].
pub struct MetricsAppender<'a> {
    meta: RunMeta<'a>,
    path: PathBuf,
    file: File,
}

impl<'a> MetricsAppender<'a> {
    pub fn create(meta: RunMeta<'a>, dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("{}.csv.partial", meta.stem()));
        let mut file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        file.write_all(&csv_bytes(&meta, &[])?)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self { meta, path, file })
    }

    pub fn append(&mut self, r: &RoundRecord) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.meta.row(r))?;
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Data(format!("csv buffer: {}", e.error())))?;
        self.file.write_all(&bytes).map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Remove the partial file once the final export exists.
    pub fn finish(self) -> Result<()> {
        drop(self.file);
        fs::remove_file(&self.path).map_err(|e| Error::io(&self.path, e))
    }
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub round: usize,
    pub algorithm: String,
    pub setup: String,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub loss: f64,
}

/// Read a metrics CSV written by [`export_metrics`].
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Data(format!(
            "{}: not a metrics file (header {header:?})",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Data(format!("{}: row {}: bad {what}", path.display(), line + 1));
        out.push(MetricsRow {
            round: rec[0].parse().map_err(|_| bad("round"))?,
            algorithm: rec[1].to_string(),
            setup: rec[2].to_string(),
            accuracy: rec[5].parse().map_err(|_| bad("accuracy"))?,
            balanced_accuracy: rec[6].parse().map_err(|_| bad("balanced_accuracy"))?,
            loss: rec[7].parse().map_err(|_| bad("loss"))?,
        });
    }
    Ok(out)
}
