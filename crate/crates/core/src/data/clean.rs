use std::collections::BTreeMap;

use log::{info, warn};

use super::table::{ColumnData, ColumnKind, RawTable};
use crate::error::{Error, Result};

/// Quantile by linear interpolation between order statistics:
/// position `q·(n−1)` in the sorted values.
pub fn quantile_linear(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Tukey fences `[Q1 − m·IQR, Q3 + m·IQR]` of a column, ignoring missing cells.
pub fn iqr_fences(values: &[Option<f64>], multiplier: f64) -> Option<(f64, f64)> {
    let mut v: Vec<f64> = values.iter().flatten().copied().collect();
    v.sort_by(f64::total_cmp);
    let q1 = quantile_linear(&v, 0.25)?;
    let q3 = quantile_linear(&v, 0.75)?;
    let iqr = q3 - q1;
    Some((q1 - multiplier * iqr, q3 + multiplier * iqr))
}

pub const IQR_MULTIPLIER: f64 = 1.5;

/// Drop every row whose value in any listed column lies outside the column's
/// 1.5·IQR fences. All fences are computed before any row is removed.
pub fn remove_outliers_iqr(table: &RawTable, columns: &[&str]) -> Result<RawTable> {
    let mut keep = vec![true; table.n_rows()];
    for &name in columns {
        let values = table.numeric(name)?;
        let Some((lo, hi)) = iqr_fences(values, IQR_MULTIPLIER) else {
            continue;
        };
        for (k, v) in keep.iter_mut().zip(values) {
            if let Some(x) = v {
                if *x < lo || *x > hi {
                    *k = false;
                }
            }
        }
    }
    let idx: Vec<usize> = (0..table.n_rows()).filter(|&i| keep[i]).collect();
    info!(
        "IQR outlier removal on {columns:?}: dropped {} of {} rows",
        table.n_rows() - idx.len(),
        table.n_rows()
    );
    Ok(table.select_rows(&idx))
}

/// Fill missing cells of `target` with the mean of observed values sharing the
/// row's `group` value; groups without observations fall back to the global mean.
pub fn impute_missing_by_group(table: &RawTable, target: &str, group: &str) -> Result<RawTable> {
    let values = table.numeric(target)?.to_vec();
    let groups = match table.column(group) {
        Some(c) if c.kind == ColumnKind::Categorical => match &c.data {
            ColumnData::Categorical(g) => g.clone(),
            ColumnData::Numeric(_) => unreachable!(),
        },
        Some(_) => return Err(Error::Data(format!("group column {group} is not categorical"))),
        None => return Err(Error::Data(format!("no column named {group}"))),
    };
    let observed: Vec<f64> = values.iter().flatten().copied().collect();
    if observed.is_empty() {
        return Err(Error::Data(format!("column {target} has no observed values")));
    }
    let global = observed.iter().sum::<f64>() / observed.len() as f64;
    let mut sums: BTreeMap<Option<&str>, (f64, usize)> = BTreeMap::new();
    for (v, g) in values.iter().zip(&groups) {
        if let Some(x) = v {
            let e = sums.entry(g.as_deref()).or_default();
            e.0 += x;
            e.1 += 1;
        }
    }
    let mut filled = values.clone();
    let mut fallback = 0usize;
    for (v, g) in filled.iter_mut().zip(&groups) {
        if v.is_none() {
            *v = Some(match sums.get(&g.as_deref()) {
                Some(&(s, n)) => s / n as f64,
                None => {
                    fallback += 1;
                    global
                }
            });
        }
    }
    if fallback > 0 {
        warn!("{fallback} missing {target} cells had no group mean; used the global mean");
    }
    let mut out = table.clone();
    out.column_mut(target).unwrap().data = ColumnData::Numeric(filled);
    Ok(out)
}

/// Pearson correlation of two equally long series; 0 when either has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Pearson r between each numeric column and the label, ranked by |r|
/// (largest first). Rows with a missing cell are skipped for that column.
pub fn pearson_correlation(table: &RawTable) -> Result<Vec<(String, f64)>> {
    if table.n_rows() < 2 {
        return Err(Error::Data("correlation needs at least 2 samples".into()));
    }
    let mut out = Vec::new();
    for name in table.numeric_column_names() {
        let col = table.numeric(&name)?;
        let (x, y): (Vec<f64>, Vec<f64>) = col
            .iter()
            .zip(&table.labels)
            .filter_map(|(v, &l)| v.map(|x| (x, f64::from(l))))
            .unzip();
        let r = if x.len() < 2 { 0.0 } else { pearson(&x, &y) };
        out.push((name, r));
    }
    out.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}
