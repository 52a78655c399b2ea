use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use log::warn;
use serde::{Deserialize, Serialize};

use super::table::{count_classes, ColumnData, ColumnKind, RawTable};
use crate::error::{Error, Result};
use crate::model::Matrix;

/// Population mean/std of a numeric source column, fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericStats {
    pub source: String,
    pub mean: f64,
    pub std: f64,
}

/// Category levels of a categorical source column, fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryLevels {
    pub source: String,
    pub categories: Vec<String>,
}

/// One column of the encoded feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncodedColumn {
    Numeric { source: String, mean: f64, std: f64 },
    OneHot { source: String, category: String, slot: usize },
}

impl EncodedColumn {
    pub fn name(&self) -> String {
        match self {
            EncodedColumn::Numeric { source, .. } => source.clone(),
            EncodedColumn::OneHot { source, category, .. } => format!("{source}={category}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<EncodedColumn>,
    /// Numeric columns dropped for zero variance on the training rows.
    pub dropped: Vec<String>,
    pub label: String,
}

impl FeatureSchema {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn numeric_index(&self, source: &str) -> Option<usize> {
        self.columns.iter().position(
            |c| matches!(c, EncodedColumn::Numeric { source: s, .. } if s == source),
        )
    }

    /// `(first slot, width)` of each one-hot group, in column order.
    pub fn one_hot_groups(&self) -> Vec<(String, usize, usize)> {
        let mut groups: Vec<(String, usize, usize)> = Vec::new();
        for (j, c) in self.columns.iter().enumerate() {
            if let EncodedColumn::OneHot { source, .. } = c {
                match groups.last_mut() {
                    Some((s, _, w)) if s == source => *w += 1,
                    _ => groups.push((source.clone(), j, 1)),
                }
            }
        }
        groups
    }
}

/// Where an encoded row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provenance {
    /// Row id in the source table.
    Source(usize),
    /// SMOTE row interpolated between two source rows.
    Synthetic { base: usize, neighbor: usize },
}

impl Provenance {
    pub fn source_rows(&self) -> [usize; 2] {
        match *self {
            Provenance::Source(r) => [r, r],
            Provenance::Synthetic { base, neighbor } => [base, neighbor],
        }
    }

    pub fn is_synthetic(&self) -> bool {
        matches!(self, Provenance::Synthetic { .. })
    }

    fn to_token(self) -> String {
        match self {
            Provenance::Source(r) => format!("r{r}"),
            Provenance::Synthetic { base, neighbor } => format!("s{base}:{neighbor}"),
        }
    }

    fn from_token(t: &str) -> Result<Self> {
        let bad = || Error::Data(format!("bad provenance token {t:?}"));
        if let Some(r) = t.strip_prefix('r') {
            return r.parse().map(Provenance::Source).map_err(|_| bad());
        }
        let rest = t.strip_prefix('s').ok_or_else(bad)?;
        let (a, b) = rest.split_once(':').ok_or_else(bad)?;
        Ok(Provenance::Synthetic {
            base: a.parse().map_err(|_| bad())?,
            neighbor: b.parse().map_err(|_| bad())?,
        })
    }
}

/// Numeric feature matrix plus binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub features: Matrix,
    pub labels: Vec<u8>,
    pub schema: FeatureSchema,
    pub provenance: Vec<Provenance>,
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        count_classes(&self.labels)
    }

    /// Fraction of each class, `[P(y=0), P(y=1)]`.
    pub fn label_distribution(&self) -> Vec<f64> {
        let [n0, n1] = self.class_counts();
        let n = (n0 + n1).max(1) as f64;
        vec![n0 as f64 / n, n1 as f64 / n]
    }

    pub fn subset(&self, idx: &[usize]) -> EncodedDataset {
        EncodedDataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            schema: self.schema.clone(),
            provenance: idx.iter().map(|&i| self.provenance[i]).collect(),
        }
    }

    /// Concatenate datasets sharing a schema.
    pub fn concat(parts: &[&EncodedDataset]) -> Result<EncodedDataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Data("nothing to concatenate".into()))?;
        let mut out = EncodedDataset {
            features: Matrix::zeros(0, first.dim()),
            labels: Vec::new(),
            schema: first.schema.clone(),
            provenance: Vec::new(),
        };
        for p in parts {
            if p.schema != out.schema {
                return Err(Error::Data("cannot concatenate datasets with different schemas".into()));
            }
            for i in 0..p.len() {
                out.features.push_row(p.features.row(i))?;
            }
            out.labels.extend_from_slice(&p.labels);
            out.provenance.extend_from_slice(&p.provenance);
        }
        Ok(out)
    }

    /// Source-scale values of a numeric feature (z-scoring inverted).
    pub fn raw_feature(&self, source: &str) -> Result<Vec<f64>> {
        let j = self.schema.numeric_index(source).ok_or_else(|| {
            Error::Data(format!("dataset has no retained numeric feature {source}"))
        })?;
        let EncodedColumn::Numeric { mean, std, .. } = &self.schema.columns[j] else {
            unreachable!()
        };
        Ok((0..self.len())
            .map(|i| self.features.get(i, j) * std + mean)
            .collect())
    }
}

/// Fit population z-score statistics on `train`, returning retained stats and
/// the names of zero-variance columns.
pub fn fit_zscore(train: &RawTable) -> Result<(Vec<NumericStats>, Vec<String>)> {
    let mut stats = Vec::new();
    let mut dropped = Vec::new();
    for name in train.numeric_column_names() {
        let v: Vec<f64> = train.numeric(&name)?.iter().flatten().copied().collect();
        if v.len() != train.n_rows() {
            return Err(Error::Data(format!(
                "column {name} still has missing values; impute before scaling"
            )));
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if std > 0.0 && std.is_finite() {
            stats.push(NumericStats { source: name, mean, std });
        } else {
            warn!("dropping zero-variance column {name}");
            dropped.push(name);
        }
    }
    Ok((stats, dropped))
}

fn apply_zscore(table: &RawTable, stats: &[NumericStats], dropped: &[String]) -> Result<RawTable> {
    let mut out = table.clone();
    out.columns.retain(|c| !dropped.contains(&c.name));
    for s in stats {
        let col = out
            .column_mut(&s.source)
            .ok_or_else(|| Error::Data(format!("table lacks column {}", s.source)))?;
        let ColumnData::Numeric(v) = &mut col.data else {
            return Err(Error::Data(format!("column {} is not numeric", s.source)));
        };
        for x in v.iter_mut().flatten() {
            *x = (*x - s.mean) / s.std;
        }
    }
    Ok(out)
}

/// Fit z-score statistics on `train` and apply them to `train` and every table
/// in `others`. Zero-variance columns are removed everywhere.
pub fn fit_transform_zscore(
    train: &RawTable,
    others: &[&RawTable],
) -> Result<(Vec<NumericStats>, Vec<String>, RawTable, Vec<RawTable>)> {
    let (stats, dropped) = fit_zscore(train)?;
    let t = apply_zscore(train, &stats, &dropped)?;
    let o = others
        .iter()
        .map(|x| apply_zscore(x, &stats, &dropped))
        .collect::<Result<Vec<_>>>()?;
    Ok((stats, dropped, t, o))
}

/// Sorted category levels of every categorical column.
pub fn fit_categories(train: &RawTable) -> Vec<CategoryLevels> {
    train
        .columns
        .iter()
        .filter(|c| c.kind == ColumnKind::Categorical)
        .filter_map(|c| match &c.data {
            ColumnData::Categorical(v) => Some(CategoryLevels {
                source: c.name.clone(),
                categories: v
                    .iter()
                    .flatten()
                    .cloned()
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect(),
            }),
            ColumnData::Numeric(_) => None,
        })
        .collect()
}

/// Build the schema: numeric columns (in table order) first, then one one-hot
/// group per categorical column.
pub fn build_schema(
    stats: &[NumericStats],
    levels: &[CategoryLevels],
    dropped: Vec<String>,
    label: &str,
) -> FeatureSchema {
    let mut columns: Vec<EncodedColumn> = stats
        .iter()
        .map(|s| EncodedColumn::Numeric {
            source: s.source.clone(),
            mean: s.mean,
            std: s.std,
        })
        .collect();
    for l in levels {
        for (slot, c) in l.categories.iter().enumerate() {
            columns.push(EncodedColumn::OneHot {
                source: l.source.clone(),
                category: c.clone(),
                slot,
            });
        }
    }
    FeatureSchema {
        columns,
        dropped,
        label: label.to_string(),
    }
}

/// Encode an already z-scored table against `schema`. Numeric columns are
/// copied, categorical columns are one-hot encoded; a category absent from the
/// schema yields an all-zero group and a warning.
pub fn one_hot_encode(table: &RawTable, schema: &FeatureSchema) -> Result<EncodedDataset> {
    let n = table.n_rows();
    let d = schema.width();
    let mut features = Matrix::zeros(n, d);
    let mut unseen = 0usize;
    for (j, col) in schema.columns.iter().enumerate() {
        match col {
            EncodedColumn::Numeric { source, .. } => {
                let v = table.numeric(source)?;
                for (i, x) in v.iter().enumerate() {
                    let x = x.ok_or_else(|| {
                        Error::Data(format!("missing value in {source} at encode time"))
                    })?;
                    features.set(i, j, x);
                }
            }
            EncodedColumn::OneHot { source, category, .. } => {
                let c = table
                    .column(source)
                    .ok_or_else(|| Error::Data(format!("table lacks column {source}")))?;
                let ColumnData::Categorical(v) = &c.data else {
                    return Err(Error::Data(format!("column {source} is not categorical")));
                };
                for (i, x) in v.iter().enumerate() {
                    if x.as_deref() == Some(category.as_str()) {
                        features.set(i, j, 1.0);
                    }
                }
            }
        }
    }
    for (source, start, width) in schema.one_hot_groups() {
        for i in 0..n {
            let s: f64 = features.row(i)[start..start + width].iter().sum();
            if s == 0.0 {
                unseen += 1;
            }
        }
        if unseen > 0 {
            warn!("{unseen} rows carry a category of {source} unseen during fitting");
            unseen = 0;
        }
    }
    Ok(EncodedDataset {
        features,
        labels: table.labels.clone(),
        schema: schema.clone(),
        provenance: table.row_ids.iter().map(|&r| Provenance::Source(r)).collect(),
    })
}

/// Fit scaling and category levels on `train`, then encode `train` and each of `others`.
pub fn encode_fit(train: &RawTable, others: &[&RawTable]) -> Result<(EncodedDataset, Vec<EncodedDataset>)> {
    let (stats, dropped, t, o) = fit_transform_zscore(train, others)?;
    let levels = fit_categories(train);
    let schema = build_schema(&stats, &levels, dropped, &train.label_name);
    let enc_train = one_hot_encode(&t, &schema)?;
    let enc_others = o
        .iter()
        .map(|x| one_hot_encode(x, &schema))
        .collect::<Result<Vec<_>>>()?;
    Ok((enc_train, enc_others))
}

const DATASET_MAGIC: &str = "#fedhet-dataset v1";

/// Write the documented columnar format: a magic line, a `#schema ` line with
/// the JSON schema, a CSV header, then one CSV row per sample
/// (`features..., label, provenance`). Reals use shortest round-trip notation.
pub fn write_dataset<W: Write>(ds: &EncodedDataset, mut w: W) -> Result<()> {
    let io = |e| Error::io("<dataset writer>", e);
    writeln!(w, "{DATASET_MAGIC}").map_err(io)?;
    writeln!(w, "#schema {}", serde_json::to_string(&ds.schema)?).map_err(io)?;
    let mut header: Vec<String> = ds.schema.columns.iter().map(EncodedColumn::name).collect();
    header.push(ds.schema.label.clone());
    header.push("provenance".into());
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for i in 0..ds.len() {
        let mut line = String::new();
        for x in ds.features.row(i) {
            line.push_str(&format!("{x:?},"));
        }
        line.push_str(&format!("{},{}", ds.labels[i], ds.provenance[i].to_token()));
        writeln!(w, "{line}").map_err(io)?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<EncodedDataset> {
    let mut lines = r.lines();
    let mut next = || -> Result<Option<String>> {
        lines
            .next()
            .transpose()
            .map_err(|e| Error::io("<dataset reader>", e))
    };
    if next()?.as_deref() != Some(DATASET_MAGIC) {
        return Err(Error::Data("not a fedhet dataset file".into()));
    }
    let schema_line = next()?.ok_or_else(|| Error::Data("missing schema line".into()))?;
    let schema: FeatureSchema = serde_json::from_str(
        schema_line
            .strip_prefix("#schema ")
            .ok_or_else(|| Error::Data("missing #schema line".into()))?,
    )?;
    next()?.ok_or_else(|| Error::Data("missing header line".into()))?;
    let d = schema.width();
    let mut features = Matrix::zeros(0, d);
    let mut labels = Vec::new();
    let mut provenance = Vec::new();
    let mut row = Vec::with_capacity(d);
    while let Some(line) = next()? {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 2 {
            return Err(Error::Data(format!(
                "dataset row has {} fields, expected {}",
                fields.len(),
                d + 2
            )));
        }
        row.clear();
        for f in &fields[..d] {
            row.push(
                f.parse::<f64>()
                    .map_err(|_| Error::Data(format!("bad real {f:?}")))?,
            );
        }
        features.push_row(&row)?;
        labels.push(match fields[d] {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::Data(format!("bad label {other:?}"))),
        });
        provenance.push(Provenance::from_token(fields[d + 1])?);
    }
    if features.rows() == 0 {
        features = Matrix::zeros(0, d);
    }
    Ok(EncodedDataset {
        features,
        labels,
        schema,
        provenance,
    })
}
