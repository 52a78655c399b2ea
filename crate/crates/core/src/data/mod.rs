//! Tabular ingestion and preprocessing: load, IQR outlier removal, group-mean
//! imputation, stratified split, z-scoring and one-hot encoding fitted on the
//! training rows, and SMOTE oversampling.

mod clean;
mod encode;
mod smote;
mod split;
pub mod synthetic;
mod table;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use clean::{
    impute_missing_by_group, iqr_fences, pearson, pearson_correlation, quantile_linear,
    remove_outliers_iqr, IQR_MULTIPLIER,
};
pub use encode::{
    build_schema, encode_fit, fit_categories, fit_transform_zscore, fit_zscore, one_hot_encode,
    read_dataset, write_dataset, CategoryLevels, EncodedColumn, EncodedDataset, FeatureSchema,
    NumericStats, Provenance,
};
pub use smote::{smote_oversample, DEFAULT_K as SMOTE_DEFAULT_K};
pub use split::stratified_split_indices;
pub use table::{
    load_csv, load_csv_with_layout, read_csv_with_layout, write_csv, Column, ColumnData,
    ColumnKind, RawTable, STROKE_COLUMNS,
};

use crate::error::Result;

/// Where the raw table comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// The public stroke CSV.
    StrokeCsv { path: PathBuf },
    /// Generated table with the stroke CSV layout.
    StrokeLike { n: usize, seed: u64 },
    /// Generated two-class Gaussian mixture.
    GaussianMixture {
        n: usize,
        d: usize,
        class_sep: f64,
        positive_fraction: f64,
        seed: u64,
    },
}

impl DataSource {
    pub fn load(&self) -> Result<RawTable> {
        match self {
            DataSource::StrokeCsv { path } => load_csv(path),
            DataSource::StrokeLike { n, seed } => synthetic::stroke_like(*n, *seed),
            DataSource::GaussianMixture {
                n,
                d,
                class_sep,
                positive_fraction,
                seed,
            } => synthetic::gaussian_mixture(*n, *d, *class_sep, *positive_fraction, *seed),
        }
    }

    pub fn is_stroke_layout(&self) -> bool {
        !matches!(self, DataSource::GaussianMixture { .. })
    }
}

/// Where SMOTE is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SmoteScope {
    /// On each client's training shard after partitioning and capping.
    #[default]
    PerClient,
    /// Once on the global training split, before partitioning.
    GlobalTrain,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub iqr_columns: Vec<String>,
    /// `(target, group)` for group-mean imputation.
    pub impute: Option<(String, String)>,
    pub test_fraction: f64,
    pub smote_scope: SmoteScope,
    pub smote_k: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::stroke()
    }
}

impl PipelineConfig {
    pub fn stroke() -> Self {
        Self {
            iqr_columns: vec!["avg_glucose_level".into(), "bmi".into()],
            impute: Some(("bmi".into(), "gender".into())),
            test_fraction: 0.2,
            smote_scope: SmoteScope::PerClient,
            smote_k: SMOTE_DEFAULT_K,
        }
    }

    /// No outlier removal or imputation; for generated numeric tables.
    pub fn plain() -> Self {
        Self {
            iqr_columns: Vec::new(),
            impute: None,
            ..Self::stroke()
        }
    }
}

/// Output of the global preprocessing chain, before partitioning.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub train: EncodedDataset,
    pub test: EncodedDataset,
    /// Numeric features ranked by |Pearson r| with the label.
    pub correlations: Vec<(String, f64)>,
}

/// load → IQR removal → imputation → split → z-score/one-hot fitted on train
/// (→ SMOTE on the whole training split when `smote_scope` is `GlobalTrain`).
pub fn prepare(table: &RawTable, cfg: &PipelineConfig, seed: u64) -> Result<PreparedData> {
    let cols: Vec<&str> = cfg.iqr_columns.iter().map(String::as_str).collect();
    let mut t = remove_outliers_iqr(table, &cols)?;
    if let Some((target, group)) = &cfg.impute {
        t = impute_missing_by_group(&t, target, group)?;
    }
    let correlations = pearson_correlation(&t)?;
    let (train_idx, test_idx) = stratified_split_indices(&t.labels, cfg.test_fraction, seed)?;
    let (train_raw, test_raw) = (t.select_rows(&train_idx), t.select_rows(&test_idx));
    let (mut train, mut others) = encode_fit(&train_raw, &[&test_raw])?;
    let test = others.pop().expect("one encoded test table");
    if cfg.smote_scope == SmoteScope::GlobalTrain {
        let smote_seed = crate::seed::derive(seed, &[crate::seed::TAG_SMOTE]);
        train = smote_oversample(&train, cfg.smote_k, smote_seed)?;
    }
    Ok(PreparedData {
        train,
        test,
        correlations,
    })
}
