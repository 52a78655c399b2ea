use rand::Rng as _;

use super::{matrix::Matrix, Gradients, ModelParams};
use crate::error::{Error, Result};
use crate::seed;

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` inside the loss.
pub const BCE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Inverted dropout with masks drawn from `dropout_seed`.
    Train { dropout_seed: u64 },
    Eval,
}

/// Everything backward needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of each layer (post-dropout activations for hidden layers).
    inputs: Vec<Matrix>,
    /// Pre-activations of the hidden layers.
    hidden_pre: Vec<Matrix>,
    /// Per-element dropout multipliers, `None` when dropout was inactive.
    masks: Vec<Option<Vec<f64>>>,
    probabilities: Vec<f64>,
    fingerprint: u64,
}

impl ForwardCache {
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn batch_size(&self) -> usize {
        self.probabilities.len()
    }

    /// Pre-activation `W_k a + b_k` of hidden layer `k`.
    pub fn hidden_pre_activation(&self, k: usize) -> &Matrix {
        &self.hidden_pre[k]
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_input(params: &ModelParams, features: &Matrix) -> Result<()> {
    if features.cols() != params.dims()[0] {
        return Err(Error::Dimension(format!(
            "batch has {} features, network expects {}",
            features.cols(),
            params.dims()[0]
        )));
    }
    Ok(())
}

fn affine(input: &Matrix, params: &ModelParams, k: usize) -> Matrix {
    let layer = params.layer(k);
    let mut out = Matrix::zeros(input.rows(), layer.rows);
    for i in 0..input.rows() {
        let a = input.row(i);
        let dst = out.row_mut(i);
        for (o, d) in dst.iter_mut().enumerate() {
            let w = &layer.weights[o * layer.cols..(o + 1) * layer.cols];
            *d = super::matrix::dot(a, w) + layer.bias[o];
        }
    }
    out
}

/// Forward pass. `dropout_rates` has one entry per hidden layer.
pub fn forward(
    params: &ModelParams,
    features: &Matrix,
    dropout_rates: &[f64],
    mode: Mode,
) -> Result<ForwardCache> {
    check_input(params, features)?;
    let hidden = params.num_layers() - 1;
    if dropout_rates.len() != hidden {
        return Err(Error::Dimension(format!(
            "{} dropout rates for {hidden} hidden layers",
            dropout_rates.len()
        )));
    }
    let mut rng = match mode {
        Mode::Train { dropout_seed } => Some(seed::rng(dropout_seed)),
        Mode::Eval => None,
    };
    let mut inputs = Vec::with_capacity(params.num_layers());
    let mut hidden_pre = Vec::with_capacity(hidden);
    let mut masks = Vec::with_capacity(hidden);
    let mut current = features.clone();
    for (k, &rate) in dropout_rates.iter().enumerate() {
        let z = affine(&current, params, k);
        let mut a = z.clone();
        for v in a.as_mut_slice() {
            *v = v.max(0.0);
        }
        let mask = match rng.as_mut() {
            Some(rng) if rate > 0.0 => {
                let keep = 1.0 / (1.0 - rate);
                let m: Vec<f64> = (0..a.as_slice().len())
                    .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                    .collect();
                for (v, s) in a.as_mut_slice().iter_mut().zip(&m) {
                    *v *= s;
                }
                Some(m)
            }
            _ => None,
        };
        inputs.push(current);
        hidden_pre.push(z);
        masks.push(mask);
        current = a;
    }
    let logits = affine(&current, params, hidden);
    inputs.push(current);
    let probabilities = logits.as_slice().iter().map(|&z| sigmoid(z)).collect();
    Ok(ForwardCache {
        inputs,
        hidden_pre,
        masks,
        probabilities,
        fingerprint: params.fingerprint(),
    })
}

/// Mean binary cross-entropy.
pub fn bce_loss(probabilities: &[f64], labels: &[u8]) -> Result<f64> {
    if probabilities.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} probabilities vs {} labels",
            probabilities.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("loss of an empty batch".into()));
    }
    let total: f64 = probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / labels.len() as f64)
}

/// Analytic gradient of the mean BCE loss through the network, reusing the
/// cached dropout masks.
pub fn backward(params: &ModelParams, cache: &ForwardCache, labels: &[u8]) -> Result<Gradients> {
    if cache.fingerprint != params.fingerprint() {
        return Err(Error::InvalidArgument(
            "forward cache was produced by different parameters".into(),
        ));
    }
    let n = cache.batch_size();
    if labels.len() != n {
        return Err(Error::Dimension(format!(
            "cache holds {n} samples, got {} labels",
            labels.len()
        )));
    }
    let mut grads = params.zeros_like();
    let layers = params.num_layers();
    // dL/dz at the output: (p - y) / n.
    let mut delta: Vec<f64> = cache
        .probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &y)| (p - f64::from(y)) / n as f64)
        .collect();
    let mut width = 1;
    for k in (0..layers).rev() {
        let input = &cache.inputs[k];
        let view = params.layer(k);
        let (gw, gb) = grads.layer_mut(k);
        for i in 0..n {
            let d = &delta[i * width..(i + 1) * width];
            let a = input.row(i);
            for (o, &dv) in d.iter().enumerate() {
                if dv == 0.0 {
                    continue;
                }
                gb[o] += dv;
                let row = &mut gw[o * view.cols..(o + 1) * view.cols];
                for (g, &x) in row.iter_mut().zip(a) {
                    *g += dv * x;
                }
            }
        }
        if k == 0 {
            break;
        }
        // Propagate into the previous hidden layer: through W, dropout, ReLU.
        let prev = view.cols;
        let mut next = vec![0.0; n * prev];
        for i in 0..n {
            let d = &delta[i * width..(i + 1) * width];
            let dst = &mut next[i * prev..(i + 1) * prev];
            for (o, &dv) in d.iter().enumerate() {
                if dv == 0.0 {
                    continue;
                }
                let w = &view.weights[o * prev..(o + 1) * prev];
                for (t, &wv) in dst.iter_mut().zip(w) {
                    *t += dv * wv;
                }
            }
        }
        let pre = cache.hidden_pre[k - 1].as_slice();
        let mask = cache.masks[k - 1].as_deref();
        for (j, t) in next.iter_mut().enumerate() {
            let scale = mask.map_or(1.0, |m| m[j]);
            *t = if pre[j] > 0.0 { *t * scale } else { 0.0 };
        }
        delta = next;
        width = prev;
    }
    Ok(grads)
}

/// Eval-mode probabilities.
pub fn predict(params: &ModelParams, features: &Matrix) -> Result<Vec<f64>> {
    let hidden = params.num_layers() - 1;
    Ok(forward(params, features, &vec![0.0; hidden], Mode::Eval)?.probabilities)
}

/// Test-set figures of one model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Mean per-class recall over the classes present.
    pub balanced_accuracy: f64,
    pub loss: f64,
}

/// Accuracy (threshold 0.5, ties positive), balanced accuracy and mean BCE
/// over a labelled set.
pub fn evaluate_full(params: &ModelParams, features: &Matrix, labels: &[u8]) -> Result<Evaluation> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate on an empty dataset".into()));
    }
    if features.rows() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} rows vs {} labels",
            features.rows(),
            labels.len()
        )));
    }
    let probs = predict(params, features)?;
    let mut hits = [0usize; 2];
    let mut totals = [0usize; 2];
    for (&p, &y) in probs.iter().zip(labels) {
        let c = usize::from(y != 0);
        totals[c] += 1;
        if u8::from(p >= 0.5) == y {
            hits[c] += 1;
        }
    }
    let recalls: Vec<f64> = (0..2)
        .filter(|&c| totals[c] > 0)
        .map(|c| hits[c] as f64 / totals[c] as f64)
        .collect();
    Ok(Evaluation {
        accuracy: (hits[0] + hits[1]) as f64 / labels.len() as f64,
        balanced_accuracy: recalls.iter().sum::<f64>() / recalls.len() as f64,
        loss: bce_loss(&probs, labels)?,
    })
}

/// Accuracy and mean BCE; see [`evaluate_full`].
pub fn evaluate(params: &ModelParams, features: &Matrix, labels: &[u8]) -> Result<(f64, f64)> {
    let e = evaluate_full(params, features, labels)?;
    Ok((e.accuracy, e.loss))
}
