use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{Algorithm, Broadcast, ClientUpdate, HyperParams};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::partition::kl_divergence_discrete;

fn check_updates(w: &ModelParams, updates: &[ClientUpdate]) -> Result<()> {
    if updates.is_empty() {
        return Err(Error::InvalidArgument("no client updates to aggregate".into()));
    }
    for u in updates {
        if !u.params.same_shape(w) {
            return Err(Error::Dimension(format!(
                "client {} sent parameters of the wrong shape",
                u.client_id
            )));
        }
    }
    Ok(())
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= s;
    }
    v
}

/// `n_i / Σ n_j`. Computed from integers, so scaling every count by a common
/// factor yields bit-identical fractions.
pub fn sample_fractions(updates: &[ClientUpdate]) -> Vec<f64> {
    let total: usize = updates.iter().map(|u| u.n_samples).sum();
    updates
        .iter()
        .map(|u| u.n_samples as f64 / total as f64)
        .collect()
}

pub fn fedavg_weights(updates: &[ClientUpdate]) -> Vec<f64> {
    sample_fractions(updates)
}

/// Elementwise `Σ weight_i · params_i`.
pub fn aggregate_weighted(updates: &[ClientUpdate], weights: &[f64]) -> Result<ModelParams> {
    let first = updates
        .first()
        .ok_or_else(|| Error::InvalidArgument("no client updates to aggregate".into()))?;
    if weights.len() != updates.len() {
        return Err(Error::Dimension(format!(
            "{} weights for {} updates",
            weights.len(),
            updates.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 || weights.iter().any(|w| *w < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "aggregation weights must be a probability vector, sum is {total}"
        )));
    }
    check_updates(&first.params, updates)?;
    let mut out = first.params.zeros_like();
    for (u, &a) in updates.iter().zip(weights) {
        for (o, v) in out.as_mut_slice().iter_mut().zip(u.params.as_slice()) {
            *o += a * v;
        }
    }
    Ok(out)
}

/// Gompertz map `α(1 − exp(−exp(−α(θ − 1))))`.
pub fn gompertz(theta: f64, alpha: f64) -> f64 {
    alpha * (1.0 - (-(-alpha * (theta - 1.0)).exp()).exp())
}

/// Smoothed angle of one client and the number of rounds it took part in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleState {
    pub smoothed: f64,
    pub count: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// FedAdp weights from the angle between every client's pseudo-gradient and
/// the sample-weighted global one.
pub fn fedadp_weights(
    w: &ModelParams,
    angles: &mut BTreeMap<usize, AngleState>,
    updates: &[ClientUpdate],
    hyper: &HyperParams,
) -> Result<Vec<f64>> {
    check_updates(w, updates)?;
    let p = sample_fractions(updates);
    let grads: Vec<Vec<f64>> = updates
        .iter()
        .map(|u| {
            let s = 1.0 / (hyper.eta * u.local_steps.max(1) as f64);
            w.as_slice()
                .iter()
                .zip(u.params.as_slice())
                .map(|(a, b)| (a - b) * s)
                .collect()
        })
        .collect();
    let mut global = vec![0.0; w.len()];
    for (g, &pi) in grads.iter().zip(&p) {
        for (o, v) in global.iter_mut().zip(g) {
            *o += pi * v;
        }
    }
    let gn = norm(&global);
    let mut scores = Vec::with_capacity(updates.len());
    for ((u, g), &pi) in updates.iter().zip(&grads).zip(&p) {
        let n = norm(g);
        let theta = if gn == 0.0 || n == 0.0 {
            warn!("client {} has a zero pseudo-gradient; angle set to π/2", u.client_id);
            FRAC_PI_2
        } else {
            let cos = g.iter().zip(&global).map(|(a, b)| a * b).sum::<f64>() / (gn * n);
            cos.clamp(-1.0, 1.0).acos().clamp(0.0, FRAC_PI_2)
        };
        let st = angles.entry(u.client_id).or_insert(AngleState {
            smoothed: 0.0,
            count: 0,
        });
        st.count += 1;
        let k = st.count as f64;
        st.smoothed = ((k - 1.0) / k) * st.smoothed + theta / k;
        scores.push(pi * gompertz(st.smoothed, hyper.alpha_adp).exp());
    }
    Ok(normalize(scores))
}

/// FedDkw weights against a fixed global label distribution.
pub fn feddkw_weights(p_g: &[f64], updates: &[ClientUpdate], eps: f64) -> Result<Vec<f64>> {
    let p = sample_fractions(updates);
    let mut scores = Vec::with_capacity(updates.len());
    for (u, pi) in updates.iter().zip(p) {
        let kl = kl_divergence_discrete(&u.label_distribution, p_g)?;
        scores.push(pi / (kl + eps));
    }
    Ok(normalize(scores))
}

/// FedNova: average the per-step normalized updates, rescaled by the
/// effective step count.
pub fn fednova_aggregate(w: &ModelParams, updates: &[ClientUpdate]) -> Result<ModelParams> {
    check_updates(w, updates)?;
    if let Some(u) = updates.iter().find(|u| u.local_steps == 0) {
        return Err(Error::InvalidArgument(format!(
            "client {} reported zero local steps",
            u.client_id
        )));
    }
    let p = sample_fractions(updates);
    let tau_eff: f64 = updates
        .iter()
        .zip(&p)
        .map(|(u, pi)| pi * u.local_steps as f64)
        .sum();
    let mut dir = vec![0.0; w.len()];
    for (u, &pi) in updates.iter().zip(&p) {
        let s = pi / u.local_steps as f64;
        for ((d, a), b) in dir.iter_mut().zip(w.as_slice()).zip(u.params.as_slice()) {
            *d += s * (a - b);
        }
    }
    let mut out = w.clone();
    for (o, d) in out.as_mut_slice().iter_mut().zip(&dir) {
        *o -= tau_eff * d;
    }
    Ok(out)
}

/// SCAFFOLD server step: move `w` by `eta_g` times the mean client drift and
/// fold the control deltas into `c` with weight `1/K_total`.
pub fn scaffold_aggregate(
    w: &mut ModelParams,
    c: &mut [f64],
    updates: &[ClientUpdate],
    eta_g: f64,
    k_total: usize,
) -> Result<()> {
    check_updates(w, updates)?;
    let s = updates.len() as f64;
    let mut drift = vec![0.0; w.len()];
    let mut dc = vec![0.0; w.len()];
    for u in updates {
        let delta = u.delta_control.as_deref().ok_or_else(|| {
            Error::InvalidArgument(format!("client {} sent no control delta", u.client_id))
        })?;
        if delta.len() != w.len() {
            return Err(Error::Dimension("control delta has the wrong length".into()));
        }
        for ((d, a), b) in drift.iter_mut().zip(u.params.as_slice()).zip(w.as_slice()) {
            *d += a - b;
        }
        for (x, v) in dc.iter_mut().zip(delta) {
            *x += v;
        }
    }
    for (p, d) in w.as_mut_slice().iter_mut().zip(&drift) {
        *p += eta_g * d / s;
    }
    let inv_k = 1.0 / k_total as f64;
    for (ci, d) in c.iter_mut().zip(&dc) {
        *ci += inv_k * d;
    }
    Ok(())
}

/// FedDyn server step: update the server state `h` and set `w` to the mean
/// client model corrected by `h / alpha_dyn`.
pub fn feddyn_aggregate(
    w: &mut ModelParams,
    h: &mut [f64],
    updates: &[ClientUpdate],
    alpha_dyn: f64,
    k_total: usize,
) -> Result<()> {
    check_updates(w, updates)?;
    if !(alpha_dyn > 0.0) {
        return Err(Error::Config("FedDyn needs alpha_dyn > 0".into()));
    }
    let s = updates.len() as f64;
    let mut mean = vec![0.0; w.len()];
    let mut drift = vec![0.0; w.len()];
    for u in updates {
        for (((m, d), a), b) in mean
            .iter_mut()
            .zip(drift.iter_mut())
            .zip(u.params.as_slice())
            .zip(w.as_slice())
        {
            *m += a;
            *d += a - b;
        }
    }
    let scale = alpha_dyn / k_total as f64;
    for (hv, d) in h.iter_mut().zip(&drift) {
        *hv -= scale * d;
    }
    for ((p, m), hv) in w.as_mut_slice().iter_mut().zip(&mean).zip(h.iter()) {
        *p = m / s - hv / alpha_dyn;
    }
    Ok(())
}

/// Global model plus whatever each algorithm keeps on the server.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub params: ModelParams,
    /// Completed rounds.
    pub round: usize,
    /// SCAFFOLD `c`.
    pub control: Option<Vec<f64>>,
    /// FedDyn `h`.
    pub dyn_state: Option<Vec<f64>>,
    /// FedAdp smoothed angles.
    pub angles: BTreeMap<usize, AngleState>,
    /// FedDkw: latest `(n_i, P_i)` of every client seen so far.
    pub reported: BTreeMap<usize, (usize, Vec<f64>)>,
    /// FedDkw global label distribution.
    pub global_distribution: Option<Vec<f64>>,
}

impl ServerState {
    pub fn new(alg: Algorithm, params: ModelParams) -> Self {
        let n = params.len();
        Self {
            control: (alg == Algorithm::Scaffold).then(|| vec![0.0; n]),
            dyn_state: (alg == Algorithm::FedDyn).then(|| vec![0.0; n]),
            params,
            round: 0,
            angles: BTreeMap::new(),
            reported: BTreeMap::new(),
            global_distribution: None,
        }
    }

    /// Message for the next round (numbered from 1).
    pub fn broadcast(&self) -> Broadcast {
        Broadcast {
            round: self.round + 1,
            params: self.params.clone(),
            control: self.control.clone(),
        }
    }

    fn refresh_global_distribution(&mut self, updates: &[ClientUpdate]) {
        for u in updates {
            self.reported
                .insert(u.client_id, (u.n_samples, u.label_distribution.clone()));
        }
        let total: usize = self.reported.values().map(|r| r.0).sum();
        let classes = self.reported.values().map(|r| r.1.len()).max().unwrap_or(0);
        let mut pg = vec![0.0; classes];
        for (n, dist) in self.reported.values() {
            let f = *n as f64 / total as f64;
            for (g, v) in pg.iter_mut().zip(dist) {
                *g += f * v;
            }
        }
        self.global_distribution = Some(pg);
    }

    /// Fold one round of updates into the global state. Updates are processed
    /// in client-id order. Returns the aggregation weight of each update in
    /// that order.
    pub fn aggregate(
        &mut self,
        alg: Algorithm,
        updates: &[ClientUpdate],
        hyper: &HyperParams,
        k_total: usize,
    ) -> Result<Vec<f64>> {
        check_updates(&self.params, updates)?;
        let mut sorted: Vec<ClientUpdate> = updates.to_vec();
        sorted.sort_by_key(|u| u.client_id);
        if sorted.windows(2).any(|w| w[0].client_id == w[1].client_id) {
            return Err(Error::InvalidArgument("duplicate client in one round".into()));
        }
        let uniform = vec![1.0 / sorted.len() as f64; sorted.len()];
        let weights = match alg {
            Algorithm::FedAvg | Algorithm::FedProx => {
                let w = fedavg_weights(&sorted);
                self.params = aggregate_weighted(&sorted, &w)?;
                w
            }
            Algorithm::FedAdp => {
                let w = fedadp_weights(&self.params, &mut self.angles, &sorted, hyper)?;
                self.params = aggregate_weighted(&sorted, &w)?;
                w
            }
            Algorithm::FedDkw => {
                self.refresh_global_distribution(&sorted);
                let pg = self.global_distribution.as_deref().unwrap();
                let w = feddkw_weights(pg, &sorted, hyper.eps_dkw)?;
                self.params = aggregate_weighted(&sorted, &w)?;
                w
            }
            Algorithm::FedNova => {
                self.params = fednova_aggregate(&self.params, &sorted)?;
                sample_fractions(&sorted)
            }
            Algorithm::Scaffold => {
                let n = self.params.len();
                let c = self.control.get_or_insert_with(|| vec![0.0; n]);
                scaffold_aggregate(&mut self.params, c, &sorted, hyper.eta_g, k_total)?;
                uniform
            }
            Algorithm::FedDyn => {
                let n = self.params.len();
                let h = self.dyn_state.get_or_insert_with(|| vec![0.0; n]);
                feddyn_aggregate(&mut self.params, h, &sorted, hyper.alpha_dyn, k_total)?;
                uniform
            }
        };
        if !self.params.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "{alg} produced non-finite parameters in round {}",
                self.round + 1
            )));
        }
        self.round += 1;
        Ok(weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> ModelParams {
        let mut p = ModelParams::zeros(&[1, 1, 1, 1]);
        p.as_mut_slice()[0] = v;
        p
    }

    pub(super) fn upd(id: usize, params: ModelParams, n: usize, tau: usize) -> ClientUpdate {
        ClientUpdate {
            client_id: id,
            round: 1,
            params,
            n_samples: n,
            local_steps: tau,
            label_distribution: vec![0.5, 0.5],
            delta_control: None,
            train_accuracy: 0.0,
            train_loss: 0.0,
        }
    }

    #[test]
    fn weighted_average_examples() {
        let u = [upd(0, scalar(0.0), 1, 1), upd(1, scalar(1.0), 1, 1)];
        let out = aggregate_weighted(&u, &[0.5, 0.5]).unwrap();
        assert_eq!(out.as_slice()[0], 0.5);
        let w = fedavg_weights(&[upd(0, scalar(0.0), 100, 1), upd(1, scalar(0.0), 300, 1)]);
        assert_eq!(w, vec![0.25, 0.75]);
        assert!(aggregate_weighted(&u, &[0.5]).is_err());
        assert!(aggregate_weighted(&u, &[0.6, 0.6]).is_err());
        assert!(aggregate_weighted(&[], &[]).is_err());
    }

    #[test]
    fn gompertz_at_one() {
        let f = gompertz(1.0, 5.0);
        assert!((f - 5.0 * (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        assert!((f - 3.160_603).abs() < 1e-6);
    }

    #[test]
    fn fednova_scalar_example() {
        let w = scalar(1.0);
        let u = [upd(0, scalar(0.9), 1, 1), upd(1, scalar(0.5), 1, 5)];
        let out = fednova_aggregate(&w, &u).unwrap();
        assert!((out.as_slice()[0] - 0.7).abs() < 1e-12);
        let single = fednova_aggregate(&w, &[upd(0, scalar(0.3), 7, 4)]).unwrap();
        assert!((single.as_slice()[0] - 0.3).abs() < 1e-15);
        assert!(fednova_aggregate(&w, &[upd(0, scalar(0.3), 7, 0)]).is_err());
    }

    #[test]
    fn feddkw_prefers_the_matching_client() {
        let mut a = upd(0, scalar(0.0), 10, 1);
        a.label_distribution = vec![0.9, 0.1];
        let b = upd(1, scalar(0.0), 10, 1);
        let w = feddkw_weights(&[0.5, 0.5], &[a, b], 1e-6).unwrap();
        let expect_ratio = 1e-6 / (0.368_064 + 1e-6);
        assert!(((w[0] / w[1]) - expect_ratio).abs() < 1e-8);
        assert!(w[1] > 0.9999);
    }

    #[test]
    fn scaffold_control_shift() {
        let mut w = ModelParams::zeros(&[1, 1, 1, 1]);
        let mut c = vec![0.0; w.len()];
        let mut u0 = upd(0, w.clone(), 1, 1);
        let mut du = vec![0.0; w.len()];
        du[2] = 6.0;
        u0.delta_control = Some(du);
        let mut u1 = upd(1, w.clone(), 1, 1);
        u1.delta_control = Some(vec![0.0; w.len()]);
        scaffold_aggregate(&mut w, &mut c, &[u0.clone(), u1], 1.0, 6).unwrap();
        assert_eq!(c[2], 1.0);
        assert_eq!(c.iter().filter(|v| **v != 0.0).count(), 1);
        u0.delta_control = None;
        assert!(scaffold_aggregate(&mut w, &mut c, &[u0], 1.0, 6).is_err());
    }

    #[test]
    fn feddyn_first_round_doubles_drift() {
        let mut w = scalar(1.0);
        let mut h = vec![0.0; w.len()];
        let delta = 0.25;
        feddyn_aggregate(&mut w, &mut h, &[upd(0, scalar(1.0 + delta), 1, 1)], 0.01, 1).unwrap();
        assert!((h[0] + 0.01 * delta).abs() < 1e-15);
        assert!((w.as_slice()[0] - (1.0 + 2.0 * delta)).abs() < 1e-12);
        assert!(feddyn_aggregate(&mut w, &mut h, &[upd(0, scalar(1.0), 1, 1)], 0.0, 1).is_err());
    }

    #[test]
    fn server_rejects_duplicates() {
        let mut s = ServerState::new(Algorithm::FedAvg, scalar(0.0));
        let u = [upd(3, scalar(1.0), 1, 1), upd(3, scalar(1.0), 1, 1)];
        assert!(s.aggregate(Algorithm::FedAvg, &u, &HyperParams::default(), 6).is_err());
        assert_eq!(s.round, 0);
    }
}
