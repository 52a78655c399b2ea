use rand::seq::SliceRandom;

use super::{Algorithm, Broadcast, ClientState, ClientUpdate, HyperParams};
use crate::data::EncodedDataset;
use crate::error::{Error, Result};
use crate::model::{backward, evaluate, forward, Mode, ModelParams};
use crate::seed;

/// Batches per epoch and batch size actually used on a shard of `n` rows.
/// A shard smaller than one batch is used whole, once per epoch.
pub fn steps_per_epoch(n: usize, hyper: &HyperParams) -> (usize, usize) {
    let batch = hyper.batch_size.min(n);
    let per_epoch = hyper.batches_per_epoch.min(n / batch.max(1)).max(1);
    (per_epoch, batch)
}

/// Minibatch SGD from `w`; `correct(y, grad)` may modify every gradient
/// before the step is taken.
fn train<F>(
    w: &ModelParams,
    shard: &EncodedDataset,
    hyper: &HyperParams,
    seed: u64,
    mut correct: F,
) -> Result<(ModelParams, usize)>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if shard.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty shard".into()));
    }
    if shard.dim() != w.dims()[0] {
        return Err(Error::Dimension(format!(
            "shard has {} features, model expects {}",
            shard.dim(),
            w.dims()[0]
        )));
    }
    let n = shard.len();
    let (per_epoch, batch) = steps_per_epoch(n, hyper);
    let tau = hyper.epochs * per_epoch;
    if tau == 0 {
        return Err(Error::InvalidArgument("local training must take at least one step".into()));
    }
    let rates = hyper.dropout_rates();
    let mut shuffle = seed::rng_for(seed, &[seed::TAG_SHUFFLE]);
    let mut order: Vec<usize> = (0..n).collect();
    let mut y = w.clone();
    let mut step = 0u64;
    for _ in 0..hyper.epochs {
        order.shuffle(&mut shuffle);
        for j in 0..per_epoch {
            let idx = &order[j * batch..(j + 1) * batch];
            let x = shard.features.select_rows(idx);
            let labels: Vec<u8> = idx.iter().map(|&i| shard.labels[i]).collect();
            let mode = Mode::Train {
                dropout_seed: seed::derive(seed, &[seed::TAG_DROPOUT, step]),
            };
            let cache = forward(&y, &x, &rates, mode)?;
            let mut g = backward(&y, &cache, &labels)?;
            correct(y.as_slice(), g.as_mut_slice());
            for (p, gi) in y.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *p -= hyper.eta * gi;
            }
            step += 1;
        }
    }
    Ok((y, tau))
}

fn finish(y: ModelParams, tau: usize, shard: &EncodedDataset) -> Result<ClientUpdate> {
    let (train_accuracy, train_loss) = evaluate(&y, &shard.features, &shard.labels)?;
    Ok(ClientUpdate {
        client_id: 0,
        round: 0,
        params: y,
        n_samples: shard.len(),
        local_steps: tau,
        label_distribution: shard.label_distribution(),
        delta_control: None,
        train_accuracy,
        train_loss,
    })
}

fn check_len(name: &str, v: &[f64], w: &ModelParams) -> Result<()> {
    if v.len() != w.len() {
        return Err(Error::Dimension(format!(
            "{name} has {} entries, model has {}",
            v.len(),
            w.len()
        )));
    }
    Ok(())
}

/// Plain local SGD (FedAvg, FedNova, FedAdp, FedDkw).
pub fn local_update_sgd(
    w: &ModelParams,
    shard: &EncodedDataset,
    hyper: &HyperParams,
    seed: u64,
) -> Result<ClientUpdate> {
    let (y, tau) = train(w, shard, hyper, seed, |_, _| {})?;
    finish(y, tau, shard)
}

/// Local SGD on the loss plus `mu/2·‖y − w‖²`.
pub fn local_update_fedprox(
    w: &ModelParams,
    shard: &EncodedDataset,
    hyper: &HyperParams,
    seed: u64,
) -> Result<ClientUpdate> {
    let mu = hyper.mu;
    let anchor = w.as_slice();
    let (y, tau) = train(w, shard, hyper, seed, |y, g| {
        if mu != 0.0 {
            for ((gi, yi), wi) in g.iter_mut().zip(y).zip(anchor) {
                *gi += mu * (yi - wi);
            }
        }
    })?;
    finish(y, tau, shard)
}

/// SCAFFOLD local phase with control variates `c` (server) and `c_i`
/// (client). Returns the update carrying `Δc_i` and the new `c_i`.
pub fn local_update_scaffold(
    w: &ModelParams,
    shard: &EncodedDataset,
    hyper: &HyperParams,
    seed: u64,
    c: &[f64],
    c_i: &[f64],
) -> Result<(ClientUpdate, Vec<f64>)> {
    check_len("server control", c, w)?;
    check_len("client control", c_i, w)?;
    let (y, tau) = train(w, shard, hyper, seed, |_, g| {
        for ((gi, ci), cs) in g.iter_mut().zip(c_i).zip(c) {
            *gi = *gi - ci + cs;
        }
    })?;
    let scale = 1.0 / (tau as f64 * hyper.eta);
    let new_ci: Vec<f64> = c_i
        .iter()
        .zip(c)
        .zip(w.as_slice().iter().zip(y.as_slice()))
        .map(|((ci, cs), (wv, yv))| ci - cs + (wv - yv) * scale)
        .collect();
    let delta: Vec<f64> = new_ci.iter().zip(c_i).map(|(a, b)| a - b).collect();
    let mut update = finish(y, tau, shard)?;
    update.delta_control = Some(delta);
    Ok((update, new_ci))
}

/// FedDyn local phase with gradient-correction state `g_i`. Returns the
/// update and the new `g_i`.
pub fn local_update_feddyn(
    w: &ModelParams,
    shard: &EncodedDataset,
    hyper: &HyperParams,
    seed: u64,
    g_i: &[f64],
) -> Result<(ClientUpdate, Vec<f64>)> {
    check_len("FedDyn state", g_i, w)?;
    let alpha = hyper.alpha_dyn;
    let anchor = w.as_slice();
    let (y, tau) = train(w, shard, hyper, seed, |y, g| {
        for (((gi, si), yi), wi) in g.iter_mut().zip(g_i).zip(y).zip(anchor) {
            *gi = *gi - si + alpha * (yi - wi);
        }
    })?;
    let new_gi: Vec<f64> = g_i
        .iter()
        .zip(y.as_slice().iter().zip(anchor))
        .map(|(s, (yv, wv))| s - alpha * (yv - wv))
        .collect();
    Ok((finish(y, tau, shard)?, new_gi))
}

/// Run the local phase of `alg` for one client, updating its persistent state.
pub fn local_update(
    alg: Algorithm,
    client_id: usize,
    broadcast: &Broadcast,
    shard: &EncodedDataset,
    hyper: &HyperParams,
    seed: u64,
    state: &mut ClientState,
) -> Result<ClientUpdate> {
    let w = &broadcast.params;
    let zeros = || vec![0.0; w.len()];
    let mut update = match alg {
        Algorithm::FedAvg | Algorithm::FedNova | Algorithm::FedAdp | Algorithm::FedDkw => {
            local_update_sgd(w, shard, hyper, seed)?
        }
        Algorithm::FedProx => local_update_fedprox(w, shard, hyper, seed)?,
        Algorithm::Scaffold => {
            let c = broadcast
                .control
                .as_deref()
                .ok_or_else(|| Error::InvalidArgument("SCAFFOLD round without a server control variate".into()))?;
            let c_i = state.control.clone().unwrap_or_else(zeros);
            let (u, next) = local_update_scaffold(w, shard, hyper, seed, c, &c_i)?;
            state.control = Some(next);
            u
        }
        Algorithm::FedDyn => {
            let g_i = state.dyn_correction.clone().unwrap_or_else(zeros);
            let (u, next) = local_update_feddyn(w, shard, hyper, seed, &g_i)?;
            state.dyn_correction = Some(next);
            u
        }
    };
    update.client_id = client_id;
    update.round = broadcast.round;
    Ok(update)
}
