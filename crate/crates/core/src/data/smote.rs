use log::warn;
use rand::Rng as _;

use super::encode::{EncodedDataset, Provenance};
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_K: usize = 5;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Oversample the minority class until both classes have equal counts.
///
/// Each synthetic row is `x + u·(x_nn − x)` with `u ~ U(0,1)`, `x` a uniformly
/// chosen minority row and `x_nn` one of its `k` nearest minority neighbours
/// (Euclidean distance in the encoded space). Synthetic rows are appended after
/// the originals and flagged in the provenance.
pub fn smote_oversample(ds: &EncodedDataset, k: usize, seed: u64) -> Result<EncodedDataset> {
    let [n0, n1] = ds.class_counts();
    if n0 == n1 {
        return Ok(ds.clone());
    }
    if n0 == 0 || n1 == 0 {
        return Err(Error::Data("SMOTE needs both classes present".into()));
    }
    let minority_label = u8::from(n1 < n0);
    let minority: Vec<usize> = (0..ds.len())
        .filter(|&i| ds.labels[i] == minority_label)
        .collect();
    if minority.len() < 2 {
        return Err(Error::Data(format!(
            "minority class has {} sample(s); SMOTE needs at least 2",
            minority.len()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("SMOTE k must be positive".into()));
    }
    let k = if k > minority.len() - 1 {
        warn!(
            "SMOTE k={k} exceeds minority size − 1; clipped to {}",
            minority.len() - 1
        );
        minority.len() - 1
    } else {
        k
    };

    // k nearest minority neighbours of every minority row; ties by position.
    let neighbours: Vec<Vec<usize>> = minority
        .iter()
        .map(|&i| {
            let xi = ds.features.row(i);
            let mut d: Vec<(f64, usize)> = minority
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (sq_dist(xi, ds.features.row(j)), j))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect();

    let needed = n0.max(n1) - minority.len();
    let mut rng = seed::rng(seed);
    let mut out = ds.clone();
    let mut row = vec![0.0; ds.dim()];
    for _ in 0..needed {
        let m = rng.random_range(0..minority.len());
        let base = minority[m];
        let nn = neighbours[m][rng.random_range(0..k)];
        let u: f64 = rng.random();
        let (xb, xn) = (ds.features.row(base), ds.features.row(nn));
        for (r, (a, b)) in row.iter_mut().zip(xb.iter().zip(xn)) {
            *r = a + u * (b - a);
        }
        out.features.push_row(&row)?;
        out.labels.push(minority_label);
        out.provenance.push(Provenance::Synthetic {
            base: ds.provenance[base].source_rows()[0],
            neighbor: ds.provenance[nn].source_rows()[0],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::encode::FeatureSchema;
    use crate::model::Matrix;

    fn dataset(n_pos: usize, n_neg: usize, seed: u64) -> EncodedDataset {
        let mut rng = crate::seed::rng(seed);
        let n = n_pos + n_neg;
        let data = (0..n * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        EncodedDataset {
            features: Matrix::from_vec(n, 3, data).unwrap(),
            labels: (0..n).map(|i| u8::from(i < n_pos)).collect(),
            schema: FeatureSchema::default(),
            provenance: (0..n).map(Provenance::Source).collect(),
        }
    }

    #[test]
    fn balances_classes() {
        let ds = dataset(30, 100, 1);
        let out = smote_oversample(&ds, 5, 7).unwrap();
        assert_eq!(out.class_counts(), [100, 100]);
        assert_eq!(out.provenance.iter().filter(|p| p.is_synthetic()).count(), 70);
        assert_eq!(out.subset(&(0..130).collect::<Vec<_>>()), ds);
    }

    #[test]
    fn balanced_input_is_unchanged() {
        let ds = dataset(20, 20, 2);
        assert_eq!(smote_oversample(&ds, 5, 1).unwrap(), ds);
    }

    #[test]
    fn synthetic_rows_lie_on_source_segments() {
        let ds = dataset(12, 50, 3);
        let out = smote_oversample(&ds, 5, 4).unwrap();
        for i in ds.len()..out.len() {
            let Provenance::Synthetic { base, neighbor } = out.provenance[i] else {
                panic!("expected synthetic row")
            };
            let (a, b, x) = (ds.features.row(base), ds.features.row(neighbor), out.features.row(i));
            // x = a + u (b - a) for a single u in [0, 1].
            let j = (0..3).max_by(|&p, &q| (b[p] - a[p]).abs().total_cmp(&(b[q] - a[q]).abs())).unwrap();
            let u = (x[j] - a[j]) / (b[j] - a[j]);
            assert!((-1e-9..=1.0 + 1e-9).contains(&u));
            for t in 0..3 {
                assert!((a[t] + u * (b[t] - a[t]) - x[t]).abs() <= 1e-9);
            }
            assert_eq!(out.labels[i], 1);
        }
    }

    #[test]
    fn degenerate_minorities() {
        assert!(smote_oversample(&dataset(1, 10, 5), 5, 0).is_err());
        assert!(smote_oversample(&dataset(0, 10, 5), 5, 0).is_err());
        // k is clipped to minority − 1.
        let out = smote_oversample(&dataset(2, 10, 5), 5, 0).unwrap();
        assert_eq!(out.class_counts(), [10, 10]);
    }

    #[test]
    fn deterministic_under_seed() {
        let ds = dataset(10, 40, 6);
        assert_eq!(
            smote_oversample(&ds, 5, 9).unwrap(),
            smote_oversample(&ds, 5, 9).unwrap()
        );
    }
}
