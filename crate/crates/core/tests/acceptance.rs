//! End-to-end acceptance checks. Every criterion prints one
//! `criterion N PASS|FAIL` line to stderr, uncaptured, and then asserts.

mod common;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::time::{Duration, Instant};

use fedhet::algorithms::{
    aggregate_weighted, fedadp_weights, fedavg_weights, local_update, local_update_scaffold, local_update_sgd,
    sample_fractions, Algorithm, ClientState, ClientUpdate, HyperParams, ServerState,
};
use fedhet::data::{prepare, synthetic, DataSource, EncodedDataset, PipelineConfig};
use fedhet::model::{init_params, MlpArchitecture};
use fedhet::orchestrator::{
    export_metrics, load_workload, run_centralized_baseline, run_experiment, run_no_federation_baseline,
    ExperimentConfig, PartitionSection, RunKind, RunMeta, Simulation, SummaryExtras, TransportKind,
};
use fedhet::partition::{
    heterogeneity_level, partition, symmetric_dirichlet, HeterogeneityLevel, Partition, PartitionSpec, SplitMode,
};
use fedhet::seed;
use fedhet::transport::{decode_message, encode_message, ClientPayload, Message, Tensor};
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[acceptance] criterion {id} {status}: {name} ({detail})");
}

fn note(text: &str) {
    let _ = writeln!(std::io::stderr(), "[acceptance]   {text}");
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn criterion_1_gradient_oracle() {
    let started = Instant::now();
    let worst = (0..100).map(common::gradient_check).fold(0.0, f64::max);
    let elapsed = started.elapsed();
    let pass = worst < 1e-5 && elapsed < Duration::from_secs(30);
    verdict(
        1,
        "analytic vs central-difference gradients, 100 instances",
        pass,
        &format!("max relative error {worst:.3e} < 1e-5, {:.2} s < 30 s", elapsed.as_secs_f64()),
    );
    assert!(pass);
}

fn mixture_train(n: usize, positive_fraction: f64, seed: u64) -> EncodedDataset {
    let t = synthetic::gaussian_mixture(n, 5, 1.0, positive_fraction, seed).unwrap();
    prepare(&t, &PipelineConfig::plain(), seed).unwrap().train
}

/// Shards of different sizes that all hold exactly a quarter positives.
fn equal_mix_shards(ds: &EncodedDataset, sizes: &[usize]) -> Vec<EncodedDataset> {
    let pos: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == 1).collect();
    let neg: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == 0).collect();
    let (mut p, mut q) = (0, 0);
    sizes
        .iter()
        .map(|&n| {
            let k = n / 4;
            let mut idx: Vec<usize> = pos[p..p + k].to_vec();
            idx.extend_from_slice(&neg[q..q + n - k]);
            p += k;
            q += n - k;
            ds.subset(&idx)
        })
        .collect()
}

#[test]
fn criterion_2_algorithm_reductions() {
    let ds = mixture_train(3000, 0.3, 21);
    let quantity = partition(&ds, &PartitionSpec::quantity(3, 5.0, 22)).unwrap();
    let shards = quantity.client_datasets(&ds).unwrap();
    let w0 = init_params(&MlpArchitecture::standard(ds.dim()), 23).unwrap();
    let h = HyperParams::default();
    let seed_of = |r: usize, i: usize| 1000 * r as u64 + i as u64;
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut bump = |k: &'static str, v: f64| {
        let e = worst.entry(k).or_insert(0.0);
        *e = e.max(v);
    };

    // FedProx with mu = 0 and FedNova with equal step counts against FedAvg.
    let no_prox = HyperParams { mu: 0.0, ..h.clone() };
    let mut avg = ServerState::new(Algorithm::FedAvg, w0.clone());
    let mut prox = ServerState::new(Algorithm::FedProx, w0.clone());
    let mut nova = ServerState::new(Algorithm::FedNova, w0.clone());
    let mut states = vec![vec![ClientState::default(); shards.len()]; 3];
    for r in 0..10 {
        let run = |alg: Algorithm, server: &mut ServerState, st: &mut [ClientState], hp: &HyperParams| {
            let b = server.broadcast();
            let ups: Vec<ClientUpdate> = shards
                .iter()
                .enumerate()
                .map(|(i, s)| local_update(alg, i, &b, s, hp, seed_of(r, i), &mut st[i]).unwrap())
                .collect();
            let taus: Vec<usize> = ups.iter().map(|u| u.local_steps).collect();
            server.aggregate(alg, &ups, hp, shards.len()).unwrap();
            taus
        };
        let [s0, s1, s2] = &mut states[..] else { unreachable!() };
        run(Algorithm::FedAvg, &mut avg, s0, &no_prox);
        run(Algorithm::FedProx, &mut prox, s1, &no_prox);
        let taus = run(Algorithm::FedNova, &mut nova, s2, &no_prox);
        assert!(taus.windows(2).all(|t| t[0] == t[1]), "unequal local steps {taus:?}");
        bump("FedProx(mu=0) vs FedAvg", linf(prox.params.as_slice(), avg.params.as_slice()));
        bump("FedNova(uniform tau) vs FedAvg", linf(nova.params.as_slice(), avg.params.as_slice()));
    }

    // SCAFFOLD local phase with zero, frozen controls follows plain SGD.
    let zeros = vec![0.0; w0.len()];
    let mut avg = ServerState::new(Algorithm::FedAvg, w0.clone());
    let mut via_scaffold = ServerState::new(Algorithm::FedAvg, w0.clone());
    for r in 0..10 {
        let (a, b) = (avg.params.clone(), via_scaffold.params.clone());
        let plain: Vec<ClientUpdate> = shards
            .iter()
            .enumerate()
            .map(|(i, s)| ClientUpdate {
                client_id: i,
                ..local_update_sgd(&a, s, &h, seed_of(r, i)).unwrap()
            })
            .collect();
        let frozen: Vec<ClientUpdate> = shards
            .iter()
            .enumerate()
            .map(|(i, s)| ClientUpdate {
                client_id: i,
                ..local_update_scaffold(&b, s, &h, seed_of(r, i), &zeros, &zeros).unwrap().0
            })
            .collect();
        for (x, y) in plain.iter().zip(&frozen) {
            bump("SCAFFOLD(c=c_i=0) local vs SGD", linf(x.params.as_slice(), y.params.as_slice()));
        }
        avg.aggregate(Algorithm::FedAvg, &plain, &h, shards.len()).unwrap();
        via_scaffold.aggregate(Algorithm::FedAvg, &frozen, &h, shards.len()).unwrap();
        bump("SCAFFOLD(c=c_i=0) local vs SGD", linf(avg.params.as_slice(), via_scaffold.params.as_slice()));
    }

    // FedDkw: every client has the global label mix, so weights are the
    // sample fractions and the trajectory is FedAvg's.
    let mixed = equal_mix_shards(&ds, &[100, 200, 400]);
    let mut avg = ServerState::new(Algorithm::FedAvg, w0.clone());
    let mut dkw = ServerState::new(Algorithm::FedDkw, w0.clone());
    let mut st = vec![vec![ClientState::default(); mixed.len()]; 2];
    for r in 0..10 {
        let ba = avg.broadcast();
        let bd = dkw.broadcast();
        let ua: Vec<ClientUpdate> = mixed
            .iter()
            .enumerate()
            .map(|(i, s)| local_update(Algorithm::FedAvg, i, &ba, s, &h, seed_of(r, i), &mut st[0][i]).unwrap())
            .collect();
        let ud: Vec<ClientUpdate> = mixed
            .iter()
            .enumerate()
            .map(|(i, s)| local_update(Algorithm::FedDkw, i, &bd, s, &h, seed_of(r, i), &mut st[1][i]).unwrap())
            .collect();
        avg.aggregate(Algorithm::FedAvg, &ua, &h, mixed.len()).unwrap();
        let wd = dkw.aggregate(Algorithm::FedDkw, &ud, &h, mixed.len()).unwrap();
        bump("FedDkw(equal label mix) weights", linf(&wd, &sample_fractions(&ud)));
        bump("FedDkw(equal label mix) vs FedAvg", linf(dkw.params.as_slice(), avg.params.as_slice()));
    }

    // FedAdp: parallel pseudo-gradients give every client the same angle, so
    // weights are the sample fractions.
    let mut adp = ServerState::new(Algorithm::FedAdp, w0.clone());
    let mut angles = BTreeMap::new();
    let sizes = [100usize, 200, 500];
    for r in 0..10 {
        let w = adp.params.clone();
        let base = local_update_sgd(&w, &shards[0], &h, seed_of(r, 0)).unwrap();
        let ups: Vec<ClientUpdate> = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| ClientUpdate {
                client_id: i,
                n_samples: n,
                ..base.clone()
            })
            .collect();
        let direct = fedadp_weights(&w, &mut angles, &ups, &h).unwrap();
        bump("FedAdp(parallel updates) weights", linf(&direct, &fedavg_weights(&ups)));
        let expected = aggregate_weighted(&ups, &fedavg_weights(&ups)).unwrap();
        let wa = adp.aggregate(Algorithm::FedAdp, &ups, &h, sizes.len()).unwrap();
        bump("FedAdp(parallel updates) weights", linf(&wa, &fedavg_weights(&ups)));
        bump("FedAdp(parallel updates) vs weighted mean", linf(adp.params.as_slice(), expected.as_slice()));
    }

    let pass = worst.values().all(|&v| v <= 1e-10);
    for (k, v) in &worst {
        note(&format!("{k}: max L-inf {v:.3e} over 10 rounds"));
    }
    verdict(2, "algorithm reductions", pass, "all <= 1e-10 L-inf over 10 rounds");
    assert!(pass);
}

#[test]
fn criterion_3_dirichlet_statistics() {
    let k = 6usize;
    let draws = 100_000;
    let mut pass = true;
    for (j, &alpha) in [0.1f64, 0.3, 1.0, 10.0].iter().enumerate() {
        let mut rng = seed::rng(7000 + j as u64);
        let mut sum = vec![0.0; k];
        let mut sq = vec![0.0; k];
        for _ in 0..draws {
            let p = symmetric_dirichlet(alpha, k, &mut rng).unwrap();
            for i in 0..k {
                sum[i] += p[i];
                sq[i] += p[i] * p[i];
            }
        }
        let kf = k as f64;
        let mean_true = 1.0 / kf;
        let var_true = mean_true * (1.0 - mean_true) / (kf * alpha + 1.0);
        let (mut mean_dev, mut var_dev) = (0.0f64, 0.0f64);
        for i in 0..k {
            let mean = sum[i] / draws as f64;
            let var = sq[i] / draws as f64 - mean * mean;
            mean_dev = mean_dev.max((mean - mean_true).abs());
            var_dev = var_dev.max(((var - var_true) / var_true).abs());
        }
        let ok = mean_dev <= 0.005 && var_dev <= 0.10;
        pass &= ok;
        note(&format!(
            "alpha={alpha}: max |mean - 1/K| {mean_dev:.5} (<= 0.005), max relative variance error {:.2}% (<= 10%)",
            100.0 * var_dev
        ));
    }
    verdict(3, "Dirichlet moments, 1e5 draws, K=6", pass, "alpha in {0.1, 0.3, 1, 10}");
    assert!(pass);
}

/// Disjoint, in range, non-empty, and every row either assigned or counted
/// as dropped.
fn coverage_violations(p: &Partition, n: usize) -> usize {
    let mut seen = vec![false; n];
    let mut bad = 0;
    for rows in &p.assignments {
        bad += rows.is_empty() as usize;
        for &r in rows {
            if r >= n || seen[r] {
                bad += 1;
            } else {
                seen[r] = true;
            }
        }
    }
    let assigned = seen.iter().filter(|s| **s).count();
    let s = &p.summary;
    bad + (assigned + s.unassigned + s.trimmed + s.capped != n) as usize + (s.source_rows != n) as usize
}

#[test]
fn criterion_4_partition_invariants() {
    let ds = mixture_train(3000, 0.2, 31);
    let n = ds.len();
    let positives = ds.labels.iter().filter(|&&y| y == 1).count();
    let rate = positives as f64 / n as f64;
    let raw = ds.raw_feature("f0").unwrap();
    let mut violations: BTreeMap<&str, usize> = BTreeMap::new();
    let mut add = |k: &'static str, v: usize| *violations.entry(k).or_insert(0) += v;
    for s in 0..100u64 {
        let q = partition(&ds, &PartitionSpec::quantity(6, 0.5, s)).unwrap();
        add("quantity coverage", coverage_violations(&q, n));
        for rows in &q.assignments {
            let pos = rows.iter().filter(|&&r| ds.labels[r] == 1).count() as f64;
            add("quantity label marginal", ((pos - rate * rows.len() as f64).abs() > 1.0) as usize);
        }

        let l = partition(&ds, &PartitionSpec::label(6, 0.5, s)).unwrap();
        add("label coverage", coverage_violations(&l, n));
        let sizes: Vec<usize> = l.assignments.iter().map(Vec::len).collect();
        add("label equal totals", sizes.iter().filter(|&&x| x != sizes[0]).count());

        for mode in [SplitMode::EvenIntervals, SplitMode::EvenSamples] {
            let f = partition(&ds, &PartitionSpec::feature(6, "f0", mode, s)).unwrap();
            add("feature coverage", coverage_violations(&f, n));
            let windows: Vec<(f64, f64)> = f
                .assignments
                .iter()
                .filter(|rows| !rows.is_empty())
                .map(|rows| {
                    rows.iter()
                        .map(|&r| raw[r])
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
                })
                .collect();
            add("feature window order", windows.windows(2).filter(|w| w[0].1 > w[1].0).count());
        }
    }
    let total: usize = violations.values().sum();
    for (k, v) in &violations {
        note(&format!("{k}: {v} violations"));
    }
    verdict(4, "partition invariants, 100 seeds each", total == 0, &format!("{total} violations"));
    assert_eq!(total, 0);
}

struct Cell {
    balanced: Vec<f64>,
    plain: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn criterion_5_table_orderings() {
    let (source, source_name) = match std::env::var("STROKE_CSV") {
        Ok(p) => (DataSource::StrokeCsv { path: p.clone().into() }, format!("stroke CSV {p}")),
        Err(_) => {
            let d = ExperimentConfig::reference(Algorithm::FedAvg, PartitionSection::label(0.1), 1).data;
            (d, "generated stroke-layout surrogate (set STROKE_CSV for the real table)".into())
        }
    };
    note(&format!("data: {source_name}"));
    let setups: Vec<(&str, PartitionSection)> = vec![
        ("label a=0.1", PartitionSection::label(0.1)),
        ("label a=0.3", PartitionSection::label(0.3)),
        ("quantity a=0.1", PartitionSection::quantity(0.1)),
        ("quantity a=0.3", PartitionSection::quantity(0.3)),
        ("bmi even samples", PartitionSection::feature("bmi", SplitMode::EvenSamples)),
        ("bmi even intervals", PartitionSection::feature("bmi", SplitMode::EvenIntervals)),
        ("age even samples", PartitionSection::feature("age", SplitMode::EvenSamples)),
        ("age even intervals", PartitionSection::feature("age", SplitMode::EvenIntervals)),
    ];
    let mut columns: Vec<String> = Algorithm::ALL.iter().map(|a| a.name().to_string()).collect();
    columns.push("NoFed".into());
    columns.push("Centralized".into());

    let started = Instant::now();
    let mut slowest = Duration::ZERO;
    let mut table: Vec<BTreeMap<String, Cell>> = Vec::new();
    for (_, section) in &setups {
        let mut row: BTreeMap<String, Cell> = BTreeMap::new();
        for base in 1..=5u64 {
            let mut cfg = ExperimentConfig::reference(Algorithm::FedAvg, section.clone(), base);
            cfg.data = source.clone();
            let workload = load_workload(&cfg).unwrap();
            let mut put = |name: &str, balanced: f64, plain: f64| {
                let c = row.entry(name.to_string()).or_insert(Cell {
                    balanced: Vec::new(),
                    plain: Vec::new(),
                });
                c.balanced.push(balanced);
                c.plain.push(plain);
            };
            for alg in Algorithm::ALL {
                cfg.algorithm = alg;
                let t = Instant::now();
                let records = Simulation::new(&cfg, &workload).unwrap().run(|_| Ok(())).unwrap();
                slowest = slowest.max(t.elapsed());
                let last = records.last().unwrap();
                put(alg.name(), last.balanced_accuracy, last.accuracy);
            }
            for (name, series) in [
                ("NoFed", run_no_federation_baseline(&cfg, &workload).unwrap()),
                ("Centralized", run_centralized_baseline(&cfg, &workload).unwrap()),
            ] {
                let last = series.records.last().unwrap();
                put(name, last.balanced_accuracy, last.accuracy);
            }
        }
        table.push(row);
    }
    let total = started.elapsed();

    for (metric, pick) in [
        ("balanced accuracy", (|c: &Cell| mean(&c.balanced)) as fn(&Cell) -> f64),
        ("plain accuracy", |c: &Cell| mean(&c.plain)),
    ] {
        note(&format!("final-round {metric}, mean over 5 seeds:"));
        note(&format!(
            "{:<20}{}",
            "setup",
            columns.iter().map(|c| format!("{c:>12}")).collect::<String>()
        ));
        for ((name, _), row) in setups.iter().zip(&table) {
            note(&format!(
                "{name:<20}{}",
                columns.iter().map(|c| format!("{:>12.4}", pick(&row[c]))).collect::<String>()
            ));
        }
    }

    let get = |setup: usize, col: &str| mean(&table[setup][col].balanced);
    let fl: Vec<&str> = Algorithm::ALL.iter().map(|a| a.name()).collect();
    let min_fl = fl.iter().map(|a| get(0, a)).fold(f64::INFINITY, f64::min);
    let a_pass = min_fl >= get(0, "NoFed") + 0.02;
    note(&format!(
        "(a) label a=0.1: min FL {min_fl:.4} >= NoFed {:.4} + 0.02: {}",
        get(0, "NoFed"),
        if a_pass { "yes" } else { "no" }
    ));
    let age_ei = 7;
    let fedavg = get(age_ei, "FedAvg");
    let b_pass = ["SCAFFOLD", "FedDyn"].iter().all(|a| get(age_ei, a) >= fedavg + 0.05);
    note(&format!(
        "(b) age even intervals: SCAFFOLD {:.4}, FedDyn {:.4} >= FedAvg {fedavg:.4} + 0.05: {}",
        get(age_ei, "SCAFFOLD"),
        get(age_ei, "FedDyn"),
        if b_pass { "yes" } else { "no" }
    ));
    let mut c_pass = true;
    for (i, (name, _)) in setups.iter().enumerate() {
        let best = fl.iter().map(|a| get(i, a)).fold(f64::NEG_INFINITY, f64::max);
        let ok = get(i, "Centralized") >= best - 0.02;
        c_pass &= ok;
        note(&format!(
            "(c) {name}: Centralized {:.4} >= best FL {best:.4} - 0.02: {}",
            get(i, "Centralized"),
            if ok { "yes" } else { "no" }
        ));
    }
    let budget = slowest <= Duration::from_secs(120) && total <= Duration::from_secs(7200);
    note(&format!(
        "runtime: slowest run {:.2} s (<= 120 s), suite {:.1} s (<= 7200 s)",
        slowest.as_secs_f64(),
        total.as_secs_f64()
    ));
    let pass = a_pass && b_pass && c_pass && budget;
    verdict(
        5,
        "qualitative orderings, K=6 S=2 T=50, 5 seeds, balanced accuracy",
        pass,
        &format!(
            "(a) {} (b) {} (c) {} budget {}; data: {source_name}",
            a_pass, b_pass, c_pass, budget
        ),
    );
    assert!(pass, "orderings not reproduced: (a) {a_pass} (b) {b_pass} (c) {c_pass} budget {budget}");
}

fn csv_for(cfg: &ExperimentConfig) -> Vec<u8> {
    let workload = load_workload(cfg).unwrap();
    let outcome = run_experiment(cfg, &workload, |_| Ok(())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let meta = RunMeta {
        kind: RunKind::Federated(cfg.algorithm),
        config: cfg,
    };
    let (csv, _) = export_metrics(&outcome.records, &meta, &SummaryExtras::default(), dir.path()).unwrap();
    std::fs::read(csv).unwrap()
}

#[test]
fn criterion_6_transport_equivalence() {
    let port = common::broker::start_broker();
    let mut pass = true;
    let mut detail = Vec::new();
    for alg in [Algorithm::FedAvg, Algorithm::Scaffold] {
        let mut cfg = ExperimentConfig::reference(alg, PartitionSection::label(0.3), 11);
        cfg.experiment_id = format!("acceptance-{}", alg.name().to_ascii_lowercase());
        cfg.rounds = 10;
        let loopback = csv_for(&cfg);
        cfg.transport.kind = TransportKind::Mqtt;
        cfg.transport.host = "127.0.0.1".into();
        cfg.transport.port = port;
        let mqtt = csv_for(&cfg);
        let same = loopback == mqtt && loopback.iter().filter(|&&b| b == b'\n').count() == 11;
        pass &= same;
        detail.push(format!("{alg}: {} bytes, identical {same}", loopback.len()));
    }
    verdict(6, "loopback vs MQTT metrics CSV, 10 rounds", pass, &detail.join("; "));
    assert!(pass);
}

/// Standard base64 with padding, written out independently of the codec
/// under test.
fn hand_base64(bytes: &[u8]) -> String {
    const ALPHABET: &[u8; 64] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    let mut out = String::new();
    for chunk in bytes.chunks(3) {
        let b = [chunk[0], *chunk.get(1).unwrap_or(&0), *chunk.get(2).unwrap_or(&0)];
        let n = (b[0] as u32) << 16 | (b[1] as u32) << 8 | b[2] as u32;
        for i in 0..4 {
            if i <= chunk.len() {
                out.push(ALPHABET[(n >> (18 - 6 * i) & 63) as usize] as char);
            } else {
                out.push('=');
            }
        }
    }
    out
}

fn wire_f64() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
        Just(-f64::MIN_POSITIVE),
        (1u64..(1u64 << 52)).prop_map(f64::from_bits),
        (1u64..(1u64 << 52)).prop_map(|b| -f64::from_bits(b)),
        Just(f64::MAX),
        Just(f64::MIN),
    ]
}

#[test]
fn criterion_7_wire_format() {
    let strategy = (
        prop::collection::vec(wire_f64(), 1..48),
        0usize..1000,
        0usize..100_000,
        wire_f64(),
        wire_f64(),
        any::<bool>(),
        prop::collection::vec(wire_f64(), 2),
    );
    let mut runner = TestRunner::new(ProptestConfig::with_cases(10_000));
    let result = runner.run(&strategy, |(data, client_id, round, acc, loss, with_control, dist)| {
        let p = ClientPayload {
            client_id,
            round,
            layers: vec![
                Tensor::vector(data.clone()),
                Tensor::new(vec![1, data.len()], data.clone()).unwrap(),
            ],
            val_accuracy: acc,
            val_loss: loss,
            done: with_control,
            n_samples: round + 1,
            local_steps: client_id,
            label_distribution: dist,
            delta_control: with_control.then(|| Tensor::vector(data.iter().rev().copied().collect())),
        };
        let bytes = encode_message(&Message::Client(p.clone())).unwrap();
        let Message::Client(back) = decode_message(&bytes).unwrap() else {
            return Err(TestCaseError::fail("wrong message kind"));
        };
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        for (a, b) in p.layers.iter().zip(&back.layers) {
            prop_assert_eq!(bits(&a.data), bits(&b.data));
            prop_assert_eq!(&a.shape, &b.shape);
        }
        prop_assert_eq!(bits(&[p.val_accuracy, p.val_loss]), bits(&[back.val_accuracy, back.val_loss]));
        prop_assert_eq!(bits(&p.label_distribution), bits(&back.label_distribution));
        prop_assert_eq!(
            p.delta_control.as_ref().map(|t| bits(&t.data)),
            back.delta_control.as_ref().map(|t| bits(&t.data))
        );
        prop_assert_eq!(back, p);
        Ok(())
    });
    let roundtrip = result.is_ok();
    if let Err(e) = &result {
        note(&format!("round-trip failure: {e}"));
    }

    let values = [1.0f64, -2.5];
    let raw: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    let expected = hand_base64(&raw);
    let fixed = ClientPayload {
        client_id: 0,
        round: 1,
        layers: vec![Tensor::new(vec![1, 2], values.to_vec()).unwrap()],
        val_accuracy: 0.5,
        val_loss: 0.5,
        done: true,
        n_samples: 1,
        local_steps: 1,
        label_distribution: vec![0.5, 0.5],
        delta_control: None,
    };
    let wire: serde_json::Value = serde_json::from_slice(&encode_message(&Message::Client(fixed)).unwrap()).unwrap();
    let layer = &wire["payload"]["layers"][0];
    let fixed_ok = expected == "AAAAAAAA8D8AAAAAAAAEwA=="
        && layer["data"] == expected.as_str()
        && layer["shape"] == serde_json::json!([1, 2]);
    note(&format!("fixed vector [1.0, -2.5] shape [1,2]: wire {} vs reference {expected}", layer["data"]));
    let pass = roundtrip && fixed_ok;
    verdict(
        7,
        "payload wire format",
        pass,
        &format!("10000-case bitwise round-trip {roundtrip}, fixed base64 vector {fixed_ok}"),
    );
    assert!(pass);
}

#[test]
fn criterion_8_heterogeneity_levels() {
    use HeterogeneityLevel::*;
    let table = [
        (0.05, Extreme),
        (0.1, High),
        (0.3, HighMedium),
        (0.5, Medium),
        (0.7, Low),
        (10.0, Homogeneous),
        (15.0, Homogeneous),
    ];
    let mut pass = true;
    for (alpha, want) in table {
        let got = heterogeneity_level(alpha).unwrap();
        pass &= got == want;
        note(&format!("alpha={alpha}: {got} (expected {want})"));
    }
    verdict(8, "heterogeneity levels at boundary probes", pass, "7 probes");
    assert!(pass);
}
