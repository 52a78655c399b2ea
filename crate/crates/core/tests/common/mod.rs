#![allow(dead_code)]

pub mod broker;

use fedhet::model::{backward, bce_loss, forward, init_params, Matrix, MlpArchitecture, Mode, ModelParams};
use fedhet::seed;
use rand::Rng as _;

/// One random (network, batch) instance: analytic gradient against central
/// differences with step 1e-6. Returns the norm-wise relative error
/// `max|a − n| / max(‖a‖∞, ‖n‖∞)`.
pub fn gradient_check(instance: u64) -> f64 {
    let mut rng = seed::rng(instance);
    let dims = if instance == 0 {
        vec![4, 3, 2, 1]
    } else {
        vec![
            rng.random_range(1..=6),
            rng.random_range(1..=8),
            rng.random_range(1..=6),
            1,
        ]
    };
    let rates = vec![rng.random_range(0.0..0.5), rng.random_range(0.0..0.5)];
    let arch = MlpArchitecture::new(dims.clone(), rates.clone()).unwrap();
    let mut params = init_params(&arch, instance ^ 0xABCD).unwrap();
    for v in params.as_mut_slice() {
        *v += rng.random_range(-0.1..0.1);
    }
    let n = rng.random_range(1..=8);
    let x: Vec<f64> = (0..n * dims[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
    let x = Matrix::from_vec(n, dims[0], x).unwrap();
    let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
    let mode = Mode::Train { dropout_seed: instance.wrapping_mul(31) + 7 };

    let loss = |p: &ModelParams| {
        let c = forward(p, &x, &rates, mode).unwrap();
        bce_loss(c.probabilities(), &labels).unwrap()
    };
    let cache = forward(&params, &x, &rates, mode).unwrap();
    let analytic = backward(&params, &cache, &labels).unwrap();

    let h = 1e-6;
    let mut worst_diff: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..params.len() {
        let mut plus = params.clone();
        plus.as_mut_slice()[i] += h;
        let mut minus = params.clone();
        minus.as_mut_slice()[i] -= h;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
        let a = analytic.as_slice()[i];
        worst_diff = worst_diff.max((a - numeric).abs());
        scale = scale.max(a.abs()).max(numeric.abs());
    }
    if scale == 0.0 {
        0.0
    } else {
        worst_diff / scale
    }
}
