use fedhet::algorithms::{
    aggregate_weighted, fedadp_weights, fedavg_weights, feddkw_weights, feddyn_aggregate,
    fednova_aggregate, local_update, local_update_feddyn, local_update_fedprox,
    local_update_scaffold, local_update_sgd, Algorithm, ClientState, ClientUpdate, HyperParams,
    ServerState,
};
use fedhet::data::{prepare, synthetic, EncodedDataset, PipelineConfig};
use fedhet::model::{backward, forward, init_params, Matrix, MlpArchitecture, Mode, ModelParams};
use fedhet::partition::{partition, PartitionSpec};
use proptest::prelude::*;
use std::collections::BTreeMap;

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn bits(p: &ModelParams) -> Vec<u64> {
    p.as_slice().iter().map(|v| v.to_bits()).collect()
}

/// One-feature, one-row shard with the given value and label.
fn single_row(x: f64, y: u8) -> EncodedDataset {
    let t = synthetic::gaussian_mixture(40, 1, 2.0, 0.5, 1).unwrap();
    let mut ds = prepare(&t, &PipelineConfig::plain(), 1).unwrap().train.subset(&[0]);
    ds.features = Matrix::from_vec(1, 1, vec![x]).unwrap();
    ds.labels = vec![y];
    ds
}

/// Chain of scalar layers `w1, w2, w3` with zero biases.
fn chain(w1: f64, w2: f64, w3: f64) -> ModelParams {
    ModelParams::from_layers(
        &[(vec![w1], vec![0.0]), (vec![w2], vec![0.0]), (vec![w3], vec![0.0])],
        1,
    )
    .unwrap()
}

fn one_step(eta: f64) -> HyperParams {
    HyperParams {
        eta,
        epochs: 1,
        batches_per_epoch: 1,
        batch_size: 1,
        dropout: 0.0,
        ..HyperParams::default()
    }
}

fn shards(k: usize, seed: u64) -> (Vec<EncodedDataset>, usize) {
    let t = synthetic::gaussian_mixture(2400, 5, 1.0, 0.3, seed).unwrap();
    let ds = prepare(&t, &PipelineConfig::plain(), seed).unwrap().train;
    let p = partition(&ds, &PartitionSpec::quantity(k, 5.0, seed)).unwrap();
    (p.client_datasets(&ds).unwrap(), ds.dim())
}

#[test]
fn one_step_sgd_matches_hand_computation() {
    let (w1, w2, w3, x, eta) = (0.5, 0.8, 1.2, 2.0, 0.1);
    let w = chain(w1, w2, w3);
    let u = local_update_sgd(&w, &single_row(x, 1), &one_step(eta), 3).unwrap();
    assert_eq!(u.local_steps, 1);
    let h1 = w1 * x;
    let h2 = w2 * h1;
    let p = 1.0 / (1.0 + (-(w3 * h2)).exp());
    let r = p - 1.0;
    // Flatten order: w1, b1, w2, b2, w3, b3.
    let grad = [r * w3 * w2 * x, r * w3 * w2, r * w3 * h1, r * w3, r * h2, r];
    let old = w.as_slice();
    for i in 0..6 {
        let expect = old[i] - eta * grad[i];
        assert!((u.params.as_slice()[i] - expect).abs() < 1e-14, "param {i}");
    }
}

#[test]
fn zero_epochs_is_rejected_and_seeds_reproduce() {
    let (sh, d) = shards(2, 1);
    let w = init_params(&MlpArchitecture::standard(d), 2).unwrap();
    let h = HyperParams { epochs: 0, ..HyperParams::default() };
    assert!(local_update_sgd(&w, &sh[0], &h, 1).is_err());
    let h = HyperParams::default();
    let a = local_update_sgd(&w, &sh[0], &h, 5).unwrap();
    let b = local_update_sgd(&w, &sh[0], &h, 5).unwrap();
    assert_eq!(bits(&a.params), bits(&b.params));
    assert_eq!(a, b);
    assert!(local_update_sgd(&w, &sh[0].subset(&[]), &h, 5).is_err());
}

#[test]
fn fedprox_reductions_and_pinning() {
    let (sh, d) = shards(2, 2);
    let w = init_params(&MlpArchitecture::standard(d), 3).unwrap();
    let zero_mu = HyperParams { mu: 0.0, ..HyperParams::default() };
    let plain = local_update_sgd(&w, &sh[0], &zero_mu, 9).unwrap();
    let prox = local_update_fedprox(&w, &sh[0], &zero_mu, 9).unwrap();
    assert_eq!(bits(&plain.params), bits(&prox.params));

    // First step has y = w, so the proximal term vanishes.
    let single = HyperParams { epochs: 1, batches_per_epoch: 1, mu: 5.0, ..HyperParams::default() };
    let a = local_update_sgd(&w, &sh[0], &single, 4).unwrap();
    let b = local_update_fedprox(&w, &sh[0], &single, 4).unwrap();
    assert_eq!(bits(&a.params), bits(&b.params));

    // Large mu pins the iterate to w (explicit steps need eta·mu < 2).
    let pinned = HyperParams { eta: 1e-5, mu: 1e5, ..HyperParams::default() };
    let u = local_update_fedprox(&w, &sh[0], &pinned, 4).unwrap();
    assert!(linf(u.params.as_slice(), w.as_slice()) < 1e-3);
}

#[test]
fn scaffold_zero_controls_follow_plain_sgd() {
    let (sh, d) = shards(2, 3);
    let w = init_params(&MlpArchitecture::standard(d), 4).unwrap();
    let h = HyperParams::default();
    let zeros = vec![0.0; w.len()];
    let (u, next) = local_update_scaffold(&w, &sh[1], &h, 6, &zeros, &zeros).unwrap();
    let plain = local_update_sgd(&w, &sh[1], &h, 6).unwrap();
    assert_eq!(bits(&u.params), bits(&plain.params));
    assert_eq!(u.delta_control.as_ref().unwrap().len(), w.len());
    assert_eq!(next.len(), w.len());
    assert!(local_update_scaffold(&w, &sh[1], &h, 6, &zeros[1..], &zeros).is_err());
}

#[test]
fn scaffold_one_step_control_equals_gradient() {
    let w = chain(0.7, 0.9, -0.6);
    let shard = single_row(1.5, 0);
    let h = one_step(0.05);
    let c: Vec<f64> = (0..6).map(|i| 0.1 * i as f64 - 0.2).collect();
    let c_i: Vec<f64> = (0..6).map(|i| 0.03 * i as f64).collect();
    let (u, next) = local_update_scaffold(&w, &shard, &h, 1, &c, &c_i).unwrap();
    let cache = forward(&w, &shard.features, &[0.0, 0.0], Mode::Eval).unwrap();
    let g = backward(&w, &cache, &shard.labels).unwrap();
    for i in 0..6 {
        let step = w.as_slice()[i] - 0.05 * (g.as_slice()[i] - c_i[i] + c[i]);
        assert!((u.params.as_slice()[i] - step).abs() < 1e-15);
        assert!((next[i] - g.as_slice()[i]).abs() < 1e-12, "{i}: {} vs {}", next[i], g.as_slice()[i]);
    }
}

#[test]
fn feddyn_reductions_and_hand_step() {
    let (sh, d) = shards(2, 4);
    let w = init_params(&MlpArchitecture::standard(d), 5).unwrap();
    let h0 = HyperParams { alpha_dyn: 0.0, ..HyperParams::default() };
    let zeros = vec![0.0; w.len()];
    let (u, _) = local_update_feddyn(&w, &sh[0], &h0, 2, &zeros).unwrap();
    let plain = local_update_sgd(&w, &sh[0], &h0, 2).unwrap();
    assert_eq!(bits(&u.params), bits(&plain.params));

    // No movement leaves the state unchanged.
    let frozen = HyperParams { eta: 0.0, ..HyperParams::default() };
    let state: Vec<f64> = (0..w.len()).map(|i| (i % 7) as f64 * 0.01).collect();
    let (u, next) = local_update_feddyn(&w, &sh[0], &frozen, 2, &state).unwrap();
    assert_eq!(bits(&u.params), bits(&w));
    assert_eq!(next, state);

    // Scalar chain, one step.
    let w = chain(0.4, 1.1, 0.9);
    let shard = single_row(-0.5, 1);
    let (eta, alpha) = (0.1, 0.5);
    let hyper = HyperParams { alpha_dyn: alpha, ..one_step(eta) };
    let s: Vec<f64> = vec![0.2, -0.1, 0.05, 0.0, 0.3, -0.4];
    let (u, next) = local_update_feddyn(&w, &shard, &hyper, 0, &s).unwrap();
    let cache = forward(&w, &shard.features, &[0.0, 0.0], Mode::Eval).unwrap();
    let g = backward(&w, &cache, &shard.labels).unwrap();
    for i in 0..6 {
        let y = w.as_slice()[i] - eta * (g.as_slice()[i] - s[i]);
        assert!((u.params.as_slice()[i] - y).abs() < 1e-15);
        let expect = s[i] - alpha * (y - w.as_slice()[i]);
        assert!((next[i] - expect).abs() < 1e-15);
    }
}

fn run_rounds(
    alg: Algorithm,
    hyper: &HyperParams,
    rounds: usize,
    shards: &[EncodedDataset],
    w0: &ModelParams,
) -> Vec<ModelParams> {
    let mut server = ServerState::new(alg, w0.clone());
    let mut states = vec![ClientState::default(); shards.len()];
    let mut history = Vec::new();
    for r in 0..rounds {
        let b = server.broadcast();
        let updates: Vec<ClientUpdate> = shards
            .iter()
            .enumerate()
            .map(|(i, s)| {
                local_update(alg, i, &b, s, hyper, 1000 * r as u64 + i as u64, &mut states[i]).unwrap()
            })
            .collect();
        server.aggregate(alg, &updates, hyper, shards.len()).unwrap();
        history.push(server.params.clone());
    }
    history
}

#[test]
fn fedprox_without_mu_is_fedavg_over_ten_rounds() {
    let (sh, d) = shards(3, 5);
    let w0 = init_params(&MlpArchitecture::standard(d), 6).unwrap();
    let h = HyperParams { mu: 0.0, ..HyperParams::default() };
    let a = run_rounds(Algorithm::FedAvg, &h, 10, &sh, &w0);
    let b = run_rounds(Algorithm::FedProx, &h, 10, &sh, &w0);
    for (x, y) in a.iter().zip(&b) {
        assert!(linf(x.as_slice(), y.as_slice()) <= 1e-10);
    }
}

#[test]
fn fednova_with_uniform_steps_is_fedavg_over_ten_rounds() {
    let (sh, d) = shards(3, 6);
    assert!(sh.iter().all(|s| s.len() >= 150));
    let w0 = init_params(&MlpArchitecture::standard(d), 7).unwrap();
    let h = HyperParams::default();
    let a = run_rounds(Algorithm::FedAvg, &h, 10, &sh, &w0);
    let b = run_rounds(Algorithm::FedNova, &h, 10, &sh, &w0);
    for (x, y) in a.iter().zip(&b) {
        assert!(linf(x.as_slice(), y.as_slice()) <= 1e-10);
    }
    let single = local_update_sgd(&w0, &sh[0], &h, 1).unwrap();
    let out = fednova_aggregate(&w0, std::slice::from_ref(&single)).unwrap();
    assert!(linf(out.as_slice(), single.params.as_slice()) <= 1e-15);
}

#[test]
fn scaffold_server_control_is_mean_of_client_controls() {
    let (sh, d) = shards(4, 7);
    let w0 = init_params(&MlpArchitecture::standard(d), 8).unwrap();
    let h = HyperParams::default();
    let mut server = ServerState::new(Algorithm::Scaffold, w0);
    let mut states = vec![ClientState::default(); sh.len()];
    for r in 0..10 {
        let b = server.broadcast();
        let updates: Vec<ClientUpdate> = sh
            .iter()
            .enumerate()
            .map(|(i, s)| local_update(Algorithm::Scaffold, i, &b, s, &h, r * 10 + i as u64, &mut states[i]).unwrap())
            .collect();
        server.aggregate(Algorithm::Scaffold, &updates, &h, sh.len()).unwrap();
        let c = server.control.as_ref().unwrap();
        let mut mean = vec![0.0; c.len()];
        for st in &states {
            for (m, v) in mean.iter_mut().zip(st.control.as_ref().unwrap()) {
                *m += v / sh.len() as f64;
            }
        }
        assert!(linf(c, &mean) <= 1e-10, "round {r}");
    }
}

#[test]
fn scaffold_identical_clients_full_step() {
    let (sh, d) = shards(2, 8);
    let w0 = init_params(&MlpArchitecture::standard(d), 9).unwrap();
    let h = HyperParams::default();
    let mut server = ServerState::new(Algorithm::Scaffold, w0.clone());
    let b = server.broadcast();
    let mut st = ClientState::default();
    let u = local_update(Algorithm::Scaffold, 0, &b, &sh[0], &h, 3, &mut st).unwrap();
    let mut twin = u.clone();
    twin.client_id = 1;
    let before = server.control.clone().unwrap();
    let mut zero_delta = u.clone();
    zero_delta.delta_control = Some(vec![0.0; w0.len()]);
    let mut twin0 = zero_delta.clone();
    twin0.client_id = 1;
    server.aggregate(Algorithm::Scaffold, &[zero_delta, twin0], &h, 2).unwrap();
    assert!(linf(server.params.as_slice(), u.params.as_slice()) <= 1e-15);
    assert_eq!(server.control.unwrap(), before);
}

#[test]
fn feddyn_state_update_is_linear_in_drift() {
    let w = chain(0.1, 0.2, 0.3);
    let upd = |id: usize, shift: f64| ClientUpdate {
        client_id: id,
        round: 1,
        params: {
            let mut p = w.clone();
            for (i, v) in p.as_mut_slice().iter_mut().enumerate() {
                *v += shift * (i as f64 + 1.0) * if id == 0 { 1.0 } else { -0.5 };
            }
            p
        },
        n_samples: 10,
        local_steps: 12,
        label_distribution: vec![0.5, 0.5],
        delta_control: None,
        train_accuracy: 0.0,
        train_loss: 0.0,
    };
    let step = |shift: f64| {
        let mut wc = w.clone();
        let mut h = vec![0.0; w.len()];
        feddyn_aggregate(&mut wc, &mut h, &[upd(0, shift), upd(1, shift)], 0.01, 6).unwrap();
        h
    };
    let (h1, h2) = (step(0.125), step(0.25));
    for (a, b) in h1.iter().zip(&h2) {
        assert!((2.0 * a - b).abs() <= 1e-15);
    }
    // Fixed point.
    let mut wc = w.clone();
    let mut h = vec![0.0; w.len()];
    feddyn_aggregate(&mut wc, &mut h, &[upd(0, 0.0)], 0.01, 1).unwrap();
    assert!(h.iter().all(|v| *v == 0.0));
    assert_eq!(bits(&wc), bits(&w));
}

fn synthetic_updates(w: &ModelParams, sizes: &[usize], spread: &[f64]) -> Vec<ClientUpdate> {
    sizes
        .iter()
        .zip(spread)
        .enumerate()
        .map(|(i, (&n, &s))| {
            let mut p = w.clone();
            for (j, v) in p.as_mut_slice().iter_mut().enumerate() {
                *v -= 0.01 * ((j * (i + 3)) % 11) as f64 * s - 0.003 * i as f64;
            }
            ClientUpdate {
                client_id: i,
                round: 1,
                params: p,
                n_samples: n,
                local_steps: 12,
                label_distribution: vec![0.8 - 0.1 * s.min(5.0), 0.2 + 0.1 * s.min(5.0)],
                delta_control: None,
                train_accuracy: 0.0,
                train_loss: 0.0,
            }
        })
        .collect()
}

#[test]
fn degenerate_inputs_reduce_to_sample_weights() {
    let w = chain(0.3, 0.6, 0.9);
    // Identical pseudo-gradients: every angle is zero.
    let mut same = synthetic_updates(&w, &[100, 300], &[1.0, 1.0]);
    for u in same.iter_mut() {
        u.params = same_params(&w);
    }
    let mut angles = BTreeMap::new();
    let adp = fedadp_weights(&w, &mut angles, &same, &HyperParams::default()).unwrap();
    assert!(linf(&adp, &[0.25, 0.75]) <= 1e-12);
    let dkw = feddkw_weights(&[0.5, 0.5], &same, 1e-6).unwrap();
    assert!(linf(&dkw, &[0.25, 0.75]) <= 1e-12);
    let eq = synthetic_updates(&w, &[50, 50, 50], &[0.0, 0.0, 0.0]);
    let dkw = feddkw_weights(&eq[0].label_distribution, &eq, 1e-6).unwrap();
    assert!(linf(&dkw, &[1.0 / 3.0; 3]) <= 1e-12);
}

fn same_params(w: &ModelParams) -> ModelParams {
    let mut p = w.clone();
    for v in p.as_mut_slice() {
        *v -= 0.01;
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn weights_are_probability_vectors_and_scale_free(
        sizes in proptest::collection::vec(1usize..1000, 1..7),
        spread in proptest::collection::vec(0.0f64..3.0, 7),
        factor in 2usize..50,
    ) {
        let w = chain(0.3, -0.6, 0.9);
        let spread = &spread[..sizes.len()];
        let ups = synthetic_updates(&w, &sizes, spread);
        let scaled_sizes: Vec<usize> = sizes.iter().map(|s| s * factor).collect();
        let scaled = synthetic_updates(&w, &scaled_sizes, spread);
        let hyper = HyperParams::default();
        let pg = vec![0.7, 0.3];

        let candidates = [
            (fedavg_weights(&ups), fedavg_weights(&scaled)),
            (
                fedadp_weights(&w, &mut BTreeMap::new(), &ups, &hyper).unwrap(),
                fedadp_weights(&w, &mut BTreeMap::new(), &scaled, &hyper).unwrap(),
            ),
            (
                feddkw_weights(&pg, &ups, 1e-6).unwrap(),
                feddkw_weights(&pg, &scaled, 1e-6).unwrap(),
            ),
        ];
        for (a, b) in candidates {
            prop_assert!(a.iter().all(|x| *x >= 0.0));
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert_eq!(a.clone(), b);
            prop_assert!(aggregate_weighted(&ups, &a).is_ok());
        }
    }
}
