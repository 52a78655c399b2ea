use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Label,
    Id,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl ColumnData {
    fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    fn select(&self, idx: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(idx.iter().map(|&i| v[i]).collect()),
            ColumnData::Categorical(v) => {
                ColumnData::Categorical(idx.iter().map(|&i| v[i].clone()).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub data: ColumnData,
}

/// A rectangular table of feature columns plus one binary label column.
/// `row_ids` tracks each row's position in the original source.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub columns: Vec<Column>,
    pub label_name: String,
    pub labels: Vec<u8>,
    pub row_ids: Vec<usize>,
}

/// Expected source columns of the public stroke CSV.
pub const STROKE_COLUMNS: &[(&str, ColumnKind)] = &[
    ("id", ColumnKind::Id),
    ("gender", ColumnKind::Categorical),
    ("age", ColumnKind::Numeric),
    ("hypertension", ColumnKind::Numeric),
    ("heart_disease", ColumnKind::Numeric),
    ("ever_married", ColumnKind::Categorical),
    ("work_type", ColumnKind::Categorical),
    ("Residence_type", ColumnKind::Categorical),
    ("avg_glucose_level", ColumnKind::Numeric),
    ("bmi", ColumnKind::Numeric),
    ("smoking_status", ColumnKind::Categorical),
    ("stroke", ColumnKind::Label),
];

impl RawTable {
    pub fn new(columns: Vec<Column>, label_name: impl Into<String>, labels: Vec<u8>) -> Result<Self> {
        let n = labels.len();
        for c in &columns {
            if c.data.len() != n {
                return Err(Error::Data(format!(
                    "column {} has {} cells, expected {n}",
                    c.name,
                    c.data.len()
                )));
            }
            match (&c.kind, &c.data) {
                (ColumnKind::Numeric, ColumnData::Numeric(_))
                | (ColumnKind::Categorical | ColumnKind::Id, ColumnData::Categorical(_)) => {}
                _ => {
                    return Err(Error::Data(format!(
                        "column {} data does not match its kind",
                        c.name
                    )))
                }
            }
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::Data("labels must be 0 or 1".into()));
        }
        Ok(Self {
            columns,
            label_name: label_name.into(),
            labels,
            row_ids: (0..n).collect(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub(crate) fn column_mut(&mut self, name: &str) -> Option<&mut Column> {
        self.columns.iter_mut().find(|c| c.name == name)
    }

    pub fn numeric(&self, name: &str) -> Result<&[Option<f64>]> {
        match self.column(name) {
            Some(Column {
                data: ColumnData::Numeric(v),
                ..
            }) => Ok(v),
            Some(_) => Err(Error::Data(format!("column {name} is not numeric"))),
            None => Err(Error::Data(format!("no column named {name}"))),
        }
    }

    pub fn numeric_column_names(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Numeric)
            .map(|c| c.name.clone())
            .collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> RawTable {
        RawTable {
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    kind: c.kind,
                    data: c.data.select(idx),
                })
                .collect(),
            label_name: self.label_name.clone(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            row_ids: idx.iter().map(|&i| self.row_ids[i]).collect(),
        }
    }

    pub fn class_counts(&self) -> [usize; 2] {
        count_classes(&self.labels)
    }
}

pub(crate) fn count_classes(labels: &[u8]) -> [usize; 2] {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    [labels.len() - pos, pos]
}

fn parse_numeric(cell: &str) -> Option<f64> {
    let t = cell.trim();
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Load a CSV whose header contains every column of `layout`, by name.
/// Unparseable numeric cells (such as `N/A`) become missing.
pub fn load_csv_with_layout(path: &Path, layout: &[(&str, ColumnKind)]) -> Result<RawTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_with_layout(file, layout)
}

pub fn read_csv_with_layout<R: std::io::Read>(
    reader: R,
    layout: &[(&str, ColumnKind)],
) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut positions = Vec::with_capacity(layout.len());
    for (name, _) in layout {
        let pos = headers
            .iter()
            .position(|h| h.trim() == *name)
            .ok_or_else(|| Error::Data(format!("missing mandatory column {name}")))?;
        positions.push(pos);
    }
    let label_pos = layout
        .iter()
        .position(|(_, k)| *k == ColumnKind::Label)
        .ok_or_else(|| Error::Data("layout has no label column".into()))?;
    if layout.iter().filter(|(_, k)| *k == ColumnKind::Label).count() != 1 {
        return Err(Error::Data("layout must have exactly one label column".into()));
    }

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); layout.len()];
    for record in rdr.records() {
        let record = record?;
        for (j, &p) in positions.iter().enumerate() {
            cells[j].push(record.get(p).unwrap_or("").to_string());
        }
    }
    let n = cells[0].len();
    if n == 0 {
        return Err(Error::Data("no rows".into()));
    }

    let mut labels = Vec::with_capacity(n);
    for (i, v) in cells[label_pos].iter().enumerate() {
        match v.trim() {
            "0" => labels.push(0),
            "1" => labels.push(1),
            other => {
                return Err(Error::Data(format!(
                    "non-binary label {other:?} on data row {}",
                    i + 1
                )))
            }
        }
    }

    let mut columns = Vec::new();
    for (j, (name, kind)) in layout.iter().enumerate() {
        let data = match kind {
            ColumnKind::Label => continue,
            ColumnKind::Numeric => {
                ColumnData::Numeric(cells[j].iter().map(|c| parse_numeric(c)).collect())
            }
            ColumnKind::Categorical | ColumnKind::Id => ColumnData::Categorical(
                cells[j]
                    .iter()
                    .map(|c| {
                        let t = c.trim();
                        (!t.is_empty()).then(|| t.to_string())
                    })
                    .collect(),
            ),
        };
        columns.push(Column {
            name: name.to_string(),
            kind: *kind,
            data,
        });
    }
    RawTable::new(columns, layout[label_pos].0, labels)
}

/// Load the stroke CSV.
pub fn load_csv(path: &Path) -> Result<RawTable> {
    load_csv_with_layout(path, STROKE_COLUMNS)
}

/// Write a table back out as CSV with the label as the last column.
/// Missing numeric cells are written as `N/A`.
pub fn write_csv<W: std::io::Write>(table: &RawTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = table.columns.iter().map(|c| c.name.as_str()).collect();
    header.push(&table.label_name);
    w.write_record(&header)?;
    for i in 0..table.n_rows() {
        let mut rec: Vec<String> = table
            .columns
            .iter()
            .map(|c| match &c.data {
                ColumnData::Numeric(v) => v[i].map_or_else(|| "N/A".to_string(), |x| x.to_string()),
                ColumnData::Categorical(v) => v[i].clone().unwrap_or_default(),
            })
            .collect();
        rec.push(table.labels[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
