use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

/// Per-class proportional split of row positions into `(train, test)`.
/// Each class contributes `round(fraction·n_c)` rows to the test side, kept in
/// `[1, n_c − 1]`. Both outputs are sorted.
pub fn stratified_split_indices(
    labels: &[u8],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..=1u8 {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 2 {
            return Err(Error::Data(format!(
                "class {class} has fewer than 2 samples; cannot stratify"
            )));
        }
        idx.shuffle(&mut rng);
        let n_test = ((test_fraction * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportional_counts() {
        let labels: Vec<u8> = (0..1000).map(|i| u8::from(i % 2 == 0)).collect();
        let (train, test) = stratified_split_indices(&labels, 0.2, 1).unwrap();
        let pos = test.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!((pos, test.len() - pos), (100, 100));
        assert_eq!(train.len(), 800);
    }

    #[test]
    fn disjoint_cover_and_deterministic() {
        let labels: Vec<u8> = (0..97).map(|i| u8::from(i % 7 == 0)).collect();
        let (a, b) = stratified_split_indices(&labels, 0.3, 5).unwrap();
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..97).collect::<Vec<_>>());
        assert_eq!(stratified_split_indices(&labels, 0.3, 5).unwrap(), (a, b));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(stratified_split_indices(&[0, 1, 1], 0.5, 0).is_err());
        assert!(stratified_split_indices(&[0, 0, 1, 1], 0.0, 0).is_err());
        assert!(stratified_split_indices(&[0, 0, 1, 1], 1.0, 0).is_err());
    }
}
