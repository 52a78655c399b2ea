use log::warn;
use rand::seq::SliceRandom;

use super::dirichlet::symmetric_dirichlet;
use crate::error::{Error, Result};
use crate::seed::Rng;

/// Raw output of one skew procedure before capping.
#[derive(Debug, Clone, Default)]
pub(crate) struct Draw {
    pub assignments: Vec<Vec<usize>>,
    pub resamples: usize,
    pub unassigned: usize,
    pub trimmed: usize,
    pub windows: Option<Vec<(f64, f64)>>,
    pub warnings: Vec<String>,
}

/// Integer largest-remainder apportionment: `floor(num_i / den)` for every
/// entry plus one extra unit to the `extra` entries with the largest
/// remainders (ties to the lower index).
pub(crate) fn largest_remainder(num: &[u128], den: u128, extra: usize) -> Vec<usize> {
    let mut out: Vec<usize> = num.iter().map(|n| (n / den) as usize).collect();
    let mut order: Vec<usize> = (0..num.len()).filter(|&i| !num[i].is_multiple_of(den)).collect();
    order.sort_by(|&a, &b| (num[b] % den).cmp(&(num[a] % den)).then(a.cmp(&b)));
    for &i in order.iter().take(extra) {
        out[i] += 1;
    }
    out
}

fn class_indices(labels: &[u8]) -> [Vec<usize>; 2] {
    let mut by = [Vec::new(), Vec::new()];
    for (i, &y) in labels.iter().enumerate() {
        by[usize::from(y)].push(i);
    }
    by
}

fn resample_error(what: &str, min_size: usize, tries: usize) -> Error {
    Error::Partition(format!(
        "{what}: no Dirichlet draw gave every client at least {min_size} rows in {tries} attempts"
    ))
}

/// Client sizes `⌊p_i·n⌋` for a given share vector.
pub(crate) fn quantity_sizes(p: &[f64], n: usize) -> Vec<usize> {
    p.iter().map(|&x| (x * n as f64).floor() as usize).collect()
}

/// Positives per client so that each client's positive fraction tracks the
/// global one within one sample while never exceeding the class supplies.
pub(crate) fn stratified_positive_counts(sizes: &[usize], n_neg: usize, n_pos: usize) -> Vec<usize> {
    let n = (n_neg + n_pos) as u128;
    let num: Vec<u128> = sizes.iter().map(|&s| s as u128 * n_pos as u128).collect();
    let floors: usize = num.iter().map(|v| (v / n) as usize).sum();
    let total_size: usize = sizes.iter().sum();
    let exact_num: u128 = num.iter().sum();
    let rounded = ((2 * exact_num + n) / (2 * n)) as usize;
    let target = rounded.clamp(total_size.saturating_sub(n_neg), n_pos);
    largest_remainder(&num, n, target.saturating_sub(floors))
}

pub(crate) fn quantity_skew(
    labels: &[u8],
    k: usize,
    alpha: f64,
    min_size: usize,
    max_resamples: usize,
    rng: &mut Rng,
) -> Result<Draw> {
    let n = labels.len();
    let mut resamples = 0;
    let sizes = loop {
        let p = symmetric_dirichlet(alpha, k, rng)?;
        let sizes = quantity_sizes(&p, n);
        if sizes.iter().all(|&s| s >= min_size.max(1)) {
            break sizes;
        }
        resamples += 1;
        if resamples > max_resamples {
            return Err(resample_error("quantity skew", min_size, max_resamples + 1));
        }
    };
    let [mut neg, mut pos] = class_indices(labels);
    neg.shuffle(rng);
    pos.shuffle(rng);
    let positives = stratified_positive_counts(&sizes, neg.len(), pos.len());
    let (mut at_neg, mut at_pos) = (0, 0);
    let mut assignments = Vec::with_capacity(k);
    for (&s, &np) in sizes.iter().zip(&positives) {
        let nn = s - np;
        let mut rows: Vec<usize> = pos[at_pos..at_pos + np].to_vec();
        rows.extend_from_slice(&neg[at_neg..at_neg + nn]);
        at_pos += np;
        at_neg += nn;
        rows.sort_unstable();
        assignments.push(rows);
    }
    Ok(Draw {
        unassigned: n - sizes.iter().sum::<usize>(),
        assignments,
        resamples,
        ..Draw::default()
    })
}

/// Per-class counts `⌊q_i^j·|D^j|⌋` followed by proportional trimming of every
/// client to the smallest client total. Returns `counts[client][class]`.
pub(crate) fn label_skew_counts(class_sizes: &[usize], q: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let k = q[0].len();
    let raw: Vec<Vec<usize>> = (0..k)
        .map(|i| {
            class_sizes
                .iter()
                .zip(q)
                .map(|(&nj, qj)| (qj[i] * nj as f64).floor() as usize)
                .collect()
        })
        .collect();
    let m = raw.iter().map(|c| c.iter().sum::<usize>()).min().unwrap_or(0);
    raw.into_iter()
        .map(|c| {
            let total: usize = c.iter().sum();
            if total == m {
                return c;
            }
            let num: Vec<u128> = c.iter().map(|&x| x as u128 * m as u128).collect();
            let floors: usize = num.iter().map(|v| (v / total as u128) as usize).sum();
            largest_remainder(&num, total as u128, m - floors)
        })
        .collect()
}

pub(crate) fn label_skew(
    labels: &[u8],
    k: usize,
    alpha: f64,
    min_size: usize,
    max_resamples: usize,
    rng: &mut Rng,
) -> Result<Draw> {
    let mut by_class = class_indices(labels);
    let class_sizes = [by_class[0].len(), by_class[1].len()];
    let mut resamples = 0;
    let (raw_total, counts) = loop {
        let q = vec![
            symmetric_dirichlet(alpha, k, rng)?,
            symmetric_dirichlet(alpha, k, rng)?,
        ];
        let raw_total: usize = (0..k)
            .map(|i| {
                (0..2)
                    .map(|j| (q[j][i] * class_sizes[j] as f64).floor() as usize)
                    .sum::<usize>()
            })
            .sum();
        let counts = label_skew_counts(&class_sizes, &q);
        if counts[0].iter().sum::<usize>() >= min_size.max(1) {
            break (raw_total, counts);
        }
        resamples += 1;
        if resamples > max_resamples {
            return Err(resample_error("label skew", min_size, max_resamples + 1));
        }
    };
    for idx in by_class.iter_mut() {
        idx.shuffle(rng);
    }
    // Each client takes its class-j block from the shuffled class list; the
    // trimmed rows are simply the tail of every block.
    let mut offsets = [0usize; 2];
    let mut assignments = Vec::with_capacity(k);
    for c in &counts {
        let mut rows = Vec::new();
        for j in 0..2 {
            rows.extend_from_slice(&by_class[j][offsets[j]..offsets[j] + c[j]]);
            offsets[j] += c[j];
        }
        rows.sort_unstable();
        assignments.push(rows);
    }
    let kept: usize = counts.iter().flatten().sum();
    Ok(Draw {
        unassigned: labels.len() - raw_total,
        trimmed: raw_total - kept,
        assignments,
        resamples,
        ..Draw::default()
    })
}

fn check_feature(values: &[f64], k: usize) -> Result<(f64, f64)> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Partition("feature has non-finite values".into()));
    }
    if values.len() < k {
        return Err(Error::Partition(format!(
            "{} rows cannot fill {k} clients",
            values.len()
        )));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(Error::Partition("feature is constant".into()));
    }
    Ok((min, max))
}

/// `K` equal-width windows over `[min, max]`, the last one right-closed.
pub(crate) fn equal_width_edges(min: f64, max: f64, k: usize) -> Vec<f64> {
    let width = (max - min) / k as f64;
    let mut edges: Vec<f64> = (0..k).map(|i| min + width * i as f64).collect();
    edges.push(max);
    edges
}

fn window_of(v: f64, edges: &[f64]) -> usize {
    let k = edges.len() - 1;
    // partition_point gives the count of lower edges ≤ v.
    edges[1..k].partition_point(|&e| e <= v)
}

fn bucket(values: &[f64], edges: &[f64]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); edges.len() - 1];
    for (i, &v) in values.iter().enumerate() {
        out[window_of(v, edges)].push(i);
    }
    out
}

fn median_split(values: &[f64], rows: &[usize]) -> Option<f64> {
    let mut v: Vec<f64> = rows.iter().map(|&i| values[i]).collect();
    v.sort_by(f64::total_cmp);
    let m = v[v.len() / 2];
    // Boundary must leave rows on both sides.
    if v[0] < m {
        Some(m)
    } else {
        v.iter().copied().find(|&x| x > m)
    }
}

pub(crate) fn feature_even_intervals(values: &[f64], k: usize) -> Result<Draw> {
    let (min, max) = check_feature(values, k)?;
    let mut edges = equal_width_edges(min, max, k);
    let mut warnings = Vec::new();
    let mut buckets = bucket(values, &edges);
    while let Some(empty) = buckets.iter().position(Vec::is_empty) {
        // Merge the empty window into its left neighbor (right one for the
        // first window), then split the most populated window at its median.
        let drop_edge = if empty == 0 { 1 } else { empty };
        let msg = format!(
            "window [{:.4}, {:.4}] is empty; merged into its neighbor",
            edges[empty],
            edges[empty + 1]
        );
        warn!("{msg}");
        warnings.push(msg);
        edges.remove(drop_edge);
        buckets = bucket(values, &edges);
        let largest = (0..buckets.len())
            .max_by_key(|&i| (buckets[i].len(), std::cmp::Reverse(i)))
            .unwrap();
        let cut = median_split(values, &buckets[largest]).ok_or_else(|| {
            Error::Partition("cannot re-split a window made of tied values".into())
        })?;
        edges.insert(largest + 1, cut);
        buckets = bucket(values, &edges);
    }
    let windows = edges.windows(2).map(|w| (w[0], w[1])).collect();
    Ok(Draw {
        assignments: buckets,
        windows: Some(windows),
        warnings,
        ..Draw::default()
    })
}

pub(crate) fn feature_even_samples(values: &[f64], k: usize) -> Result<Draw> {
    check_feature(values, k)?;
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut assignments = Vec::with_capacity(k);
    let mut windows = Vec::with_capacity(k);
    let mut at = 0;
    for c in 0..k {
        let size = n / k + usize::from(c < n % k);
        let block = &order[at..at + size];
        windows.push((values[block[0]], values[block[size - 1]]));
        let mut rows = block.to_vec();
        rows.sort_unstable();
        assignments.push(rows);
        at += size;
    }
    Ok(Draw {
        assignments,
        windows: Some(windows),
        ..Draw::default()
    })
}
