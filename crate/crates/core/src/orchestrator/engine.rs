use std::collections::BTreeMap;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, TransportKind};
use super::workload::Workload;
use crate::algorithms::{local_update, Algorithm, Broadcast, ClientState, ClientUpdate, HyperParams, ServerState};
use crate::data::EncodedDataset;
use crate::error::{Error, Result};
use crate::model::{evaluate_full, init_params, MlpArchitecture, ModelParams};
use crate::seed;
use crate::transport::{
    decode_message, encode_message, params_to_tensors, tensors_to_params, ClientPayload, Endpoint, Fabric,
    LoopbackBroker, Message, MqttFabric, ServerExtras, ServerPayload, Tensor, TopicScheme,
};

/// `S` distinct clients out of `K`, uniformly and reproducibly per
/// `(seed, round)`, in ascending order.
pub fn select_participants(k: usize, s: usize, seed: u64, round: usize) -> Result<Vec<usize>> {
    if s == 0 || s > k {
        return Err(Error::InvalidArgument(format!(
            "cannot select {s} of {k} clients"
        )));
    }
    let mut rng = seed::rng_for(seed, &[seed::TAG_SELECT, round as u64]);
    let mut ids = sample(&mut rng, k, s).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

/// Local metrics one participant reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMetrics {
    pub client_id: usize,
    pub n_samples: usize,
    pub local_steps: usize,
    pub train_accuracy: f64,
    pub train_loss: f64,
}

/// Outcome of one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub participants: Vec<usize>,
    pub weights: Vec<f64>,
    /// Global model on the shared test set.
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub loss: f64,
    pub wall_ms: u64,
    pub clients: Vec<ClientMetrics>,
}

impl RoundRecord {
    pub fn local_steps(&self) -> usize {
        self.clients.iter().map(|c| c.local_steps).sum()
    }
}

/// Seed of client `id`'s local training in `round`.
pub fn training_seed(base: u64, client_id: usize, round: usize) -> u64 {
    seed::derive(base, &[client_id as u64, round as u64])
}

pub fn initial_params(cfg: &ExperimentConfig, input_dim: usize) -> Result<ModelParams> {
    let arch = MlpArchitecture::standard(input_dim);
    init_params(&arch, cfg.seeds.init)
}

fn client_step(
    cfg: &ExperimentConfig,
    hyper: &HyperParams,
    client_id: usize,
    broadcast: &Broadcast,
    shard: &EncodedDataset,
    state: &mut ClientState,
) -> Result<ClientUpdate> {
    let s = training_seed(cfg.seeds.training, client_id, broadcast.round);
    local_update(cfg.algorithm, client_id, broadcast, shard, hyper, s, state)
}

fn finish_round(
    cfg: &ExperimentConfig,
    server: &mut ServerState,
    mut updates: Vec<ClientUpdate>,
    participants: Vec<usize>,
    test: &EncodedDataset,
    started: Instant,
) -> Result<RoundRecord> {
    updates.sort_by_key(|u| u.client_id);
    let weights = server.aggregate(cfg.algorithm, &updates, &cfg.hyper, cfg.clients)?;
    let eval = evaluate_full(&server.params, &test.features, &test.labels)?;
    let clients: Vec<ClientMetrics> = updates
        .iter()
        .map(|u| ClientMetrics {
            client_id: u.client_id,
            n_samples: u.n_samples,
            local_steps: u.local_steps,
            train_accuracy: u.train_accuracy,
            train_loss: u.train_loss,
        })
        .collect();
    let record = RoundRecord {
        round: server.round,
        participants,
        weights,
        accuracy: eval.accuracy,
        balanced_accuracy: eval.balanced_accuracy,
        loss: eval.loss,
        wall_ms: started.elapsed().as_millis() as u64,
        clients,
    };
    let budget = cfg.clients_per_round * cfg.hyper.epochs * cfg.hyper.batches_per_epoch;
    if record.local_steps() != budget {
        debug!(
            "round {}: {} local steps instead of {budget} (short shards)",
            record.round,
            record.local_steps()
        );
    }
    Ok(record)
}

/// In-process round engine without a message fabric.
pub struct Simulation<'a> {
    cfg: &'a ExperimentConfig,
    workload: &'a Workload,
    pub server: ServerState,
    pub clients: Vec<ClientState>,
}

impl<'a> Simulation<'a> {
    pub fn new(cfg: &'a ExperimentConfig, workload: &'a Workload) -> Result<Self> {
        cfg.validate()?;
        check_workload(cfg, workload)?;
        let params = initial_params(cfg, workload.input_dim())?;
        Ok(Self {
            cfg,
            workload,
            server: ServerState::new(cfg.algorithm, params),
            clients: vec![ClientState::default(); cfg.clients],
        })
    }

    /// select → local updates → aggregate → evaluate.
    pub fn run_round(&mut self) -> Result<RoundRecord> {
        let started = Instant::now();
        let broadcast = self.server.broadcast();
        let participants = select_participants(
            self.cfg.clients,
            self.cfg.clients_per_round,
            self.cfg.seeds.selection,
            broadcast.round,
        )?;
        let mut updates = Vec::with_capacity(participants.len());
        for &i in &participants {
            updates.push(client_step(
                self.cfg,
                &self.cfg.hyper,
                i,
                &broadcast,
                &self.workload.shards[i],
                &mut self.clients[i],
            )?);
        }
        finish_round(self.cfg, &mut self.server, updates, participants, &self.workload.test, started)
    }

    pub fn run(mut self, mut on_record: impl FnMut(&RoundRecord) -> Result<()>) -> Result<Vec<RoundRecord>> {
        let mut out = Vec::with_capacity(self.cfg.rounds);
        for _ in 0..self.cfg.rounds {
            let r = self.run_round()?;
            on_record(&r)?;
            out.push(r);
        }
        Ok(out)
    }
}

fn check_workload(cfg: &ExperimentConfig, w: &Workload) -> Result<()> {
    if w.shards.len() != cfg.clients {
        return Err(Error::Config(format!(
            "workload has {} shards, config has {} clients",
            w.shards.len(),
            cfg.clients
        )));
    }
    if w.shards.iter().any(|s| s.dim() != w.input_dim()) {
        return Err(Error::Dimension("client shards and test set differ in width".into()));
    }
    Ok(())
}

/// Message counters kept by the parameter server.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransportStats {
    /// Second update from the same client for the same round.
    pub duplicates: usize,
    /// Updates for an already finished round.
    pub stale: usize,
    /// Messages that failed to decode or came from unselected clients.
    pub rejected: usize,
}

/// Result of a transport-driven run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub records: Vec<RoundRecord>,
    pub stats: TransportStats,
}

fn server_payload(alg: Algorithm, server: &ServerState, b: &Broadcast, hyper: &HyperParams) -> ServerPayload {
    let extras = match alg {
        Algorithm::Scaffold => Some(ServerExtras {
            control: b.control.clone().map(Tensor::vector),
            alpha_dyn: None,
            global_distribution: None,
            hyper: Some(hyper.clone()),
        }),
        Algorithm::FedDyn => Some(ServerExtras {
            control: None,
            alpha_dyn: Some(hyper.alpha_dyn),
            global_distribution: None,
            hyper: Some(hyper.clone()),
        }),
        Algorithm::FedDkw => Some(ServerExtras {
            control: None,
            alpha_dyn: None,
            global_distribution: server.global_distribution.clone(),
            hyper: Some(hyper.clone()),
        }),
        _ => None,
    };
    ServerPayload {
        round: b.round,
        layers: params_to_tensors(&b.params),
        algorithm: alg,
        extras,
    }
}

fn broadcast_from(p: &ServerPayload) -> Result<Broadcast> {
    Ok(Broadcast {
        round: p.round,
        params: tensors_to_params(&p.layers)?,
        control: p
            .extras
            .as_ref()
            .and_then(|e| e.control.as_ref())
            .map(|t| t.data.clone()),
    })
}

/// Client loop: answer each new broadcast once, skip anything older than
/// the last processed round, stop on a control message.
fn client_worker(
    cfg: Arc<ExperimentConfig>,
    shard: Arc<EncodedDataset>,
    client_id: usize,
    mut ep: Box<dyn Endpoint>,
) -> Result<()> {
    let topics = TopicScheme::new(cfg.experiment_id.clone());
    ep.subscribe(&topics.control(client_id))?;
    ep.subscribe(&topics.client(client_id))?;
    let mut state = ClientState::default();
    let mut last_round = 0usize;
    let idle = Duration::from_millis(cfg.transport.round_timeout_ms.max(1));
    let mut waited = Duration::ZERO;
    let tick = Duration::from_millis(250);
    loop {
        let Some(msg) = ep.recv_timeout(tick)? else {
            waited += tick;
            // Selection can skip a client for many rounds; only give up after
            // a long silence far beyond any single round.
            if waited > idle * (cfg.rounds as u32 + 1) {
                return Err(Error::Transport(format!("client {client_id}: no message from the server")));
            }
            continue;
        };
        waited = Duration::ZERO;
        if msg.payload.is_empty() {
            continue;
        }
        let decoded = match decode_message(&msg.payload) {
            Ok(m) => m,
            Err(e) => {
                warn!("client {client_id}: dropping undecodable message on {}: {e}", msg.topic);
                continue;
            }
        };
        match decoded {
            Message::Stop { reason } => {
                debug!("client {client_id}: stop ({reason})");
                ep.flush(Duration::from_secs(5))?;
                return Ok(());
            }
            Message::Server(p) => {
                if p.round <= last_round {
                    continue;
                }
                if p.algorithm != cfg.algorithm {
                    return Err(Error::Transport(format!(
                        "client {client_id}: server runs {}, client configured for {}",
                        p.algorithm, cfg.algorithm
                    )));
                }
                let hyper = p
                    .extras
                    .as_ref()
                    .and_then(|e| e.hyper.clone())
                    .unwrap_or_else(|| cfg.hyper.clone());
                let b = broadcast_from(&p)?;
                let update = client_step(&cfg, &hyper, client_id, &b, &shard, &mut state)?;
                let bytes = encode_message(&Message::Client(ClientPayload::from_update(&update)))?;
                ep.publish(&topics.server(), &bytes, false)?;
                last_round = p.round;
            }
            Message::Client(_) => {
                warn!("client {client_id}: ignoring a client update on {}", msg.topic);
            }
        }
    }
}

fn fabric_for(cfg: &ExperimentConfig) -> Box<dyn Fabric> {
    match cfg.transport.kind {
        TransportKind::Loopback => Box::new(LoopbackBroker::new()),
        TransportKind::Mqtt => Box::new(MqttFabric {
            settings: cfg.transport.mqtt_settings(&cfg.experiment_id),
        }),
    }
}

/// Run all rounds with the parameter server and one worker per client
/// exchanging messages over the configured transport.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    workload: &Workload,
    on_record: impl FnMut(&RoundRecord) -> Result<()>,
) -> Result<RunOutcome> {
    let fabric = fabric_for(cfg);
    run_over(cfg, workload, fabric.as_ref(), on_record)
}

/// [`run_experiment`] on an explicit fabric.
pub fn run_over(
    cfg: &ExperimentConfig,
    workload: &Workload,
    fabric: &dyn Fabric,
    mut on_record: impl FnMut(&RoundRecord) -> Result<()>,
) -> Result<RunOutcome> {
    cfg.validate()?;
    check_workload(cfg, workload)?;
    let topics = TopicScheme::new(cfg.experiment_id.clone());
    let mut ep = fabric.connect("server")?;
    // Leftovers from an earlier run with the same id must not reach workers.
    for i in 0..cfg.clients {
        ep.publish(&topics.client(i), &[], true)?;
        ep.publish(&topics.control(i), &[], true)?;
    }
    ep.flush(Duration::from_millis(cfg.transport.connect_timeout_ms))?;
    ep.subscribe(&topics.server())?;

    let shared_cfg = Arc::new(cfg.clone());
    let mut workers: Vec<JoinHandle<Result<()>>> = Vec::with_capacity(cfg.clients);
    for (i, shard) in workload.shards.iter().enumerate() {
        let client_ep = fabric.connect(&format!("client-{i}"))?;
        let (c, s) = (shared_cfg.clone(), Arc::new(shard.clone()));
        workers.push(
            std::thread::Builder::new()
                .name(format!("client-{i}"))
                .spawn(move || client_worker(c, s, i, client_ep))
                .map_err(|e| Error::Transport(format!("spawning client {i}: {e}")))?,
        );
    }

    let result = serve(cfg, workload, ep.as_mut(), &topics, &workers, &mut on_record);

    let stop = encode_message(&Message::Stop {
        reason: if result.is_ok() { "finished".into() } else { "aborted".into() },
    })?;
    for i in 0..cfg.clients {
        ep.publish(&topics.control(i), &stop, true)?;
    }
    let mut worker_error = None;
    for (i, h) in workers.into_iter().enumerate() {
        match h.join() {
            Ok(Ok(())) => {}
            Ok(Err(e)) => {
                worker_error.get_or_insert(e);
            }
            Err(_) => {
                worker_error.get_or_insert(Error::Transport(format!("client {i} panicked")));
            }
        }
    }
    for i in 0..cfg.clients {
        ep.publish(&topics.client(i), &[], true)?;
        ep.publish(&topics.control(i), &[], true)?;
    }
    ep.flush(Duration::from_millis(cfg.transport.connect_timeout_ms))?;
    match (result, worker_error) {
        (Ok(outcome), None) => Ok(outcome),
        (Ok(_), Some(e)) => Err(e),
        // A worker failure usually explains why the server gave up.
        (Err(_), Some(e)) => Err(e),
        (Err(e), None) => Err(e),
    }
}

fn serve(
    cfg: &ExperimentConfig,
    workload: &Workload,
    ep: &mut dyn Endpoint,
    topics: &TopicScheme,
    workers: &[JoinHandle<Result<()>>],
    on_record: &mut dyn FnMut(&RoundRecord) -> Result<()>,
) -> Result<RunOutcome> {
    let params = initial_params(cfg, workload.input_dim())?;
    let mut server = ServerState::new(cfg.algorithm, params);
    let mut stats = TransportStats::default();
    let mut records = Vec::with_capacity(cfg.rounds);
    let round_timeout = Duration::from_millis(cfg.transport.round_timeout_ms);
    for _ in 0..cfg.rounds {
        let started = Instant::now();
        let b = server.broadcast();
        let participants =
            select_participants(cfg.clients, cfg.clients_per_round, cfg.seeds.selection, b.round)?;
        let bytes = encode_message(&Message::Server(server_payload(cfg.algorithm, &server, &b, &cfg.hyper)))?;
        for &i in &participants {
            ep.publish(&topics.client(i), &bytes, true)?;
        }
        let mut got: BTreeMap<usize, ClientUpdate> = BTreeMap::new();
        let deadline = Instant::now() + round_timeout;
        while got.len() < participants.len() {
            if let Some(i) = workers.iter().position(|h| h.is_finished()) {
                return Err(Error::Transport(format!(
                    "client {i} stopped during round {}",
                    b.round
                )));
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(Error::Transport(format!(
                    "round {}: {} of {} updates after {round_timeout:?}",
                    b.round,
                    got.len(),
                    participants.len()
                )));
            }
            let Some(msg) = ep.recv_timeout((deadline - now).min(Duration::from_millis(100)))? else {
                continue;
            };
            let update = match decode_message(&msg.payload) {
                Ok(Message::Client(p)) => p.into_update(),
                Ok(_) => Err(Error::Decode("expected a client update".into())),
                Err(e) => Err(e),
            };
            let update = match update {
                Ok(u) => u,
                Err(e) => {
                    warn!("server: dropping message on {}: {e}", msg.topic);
                    stats.rejected += 1;
                    continue;
                }
            };
            if update.round < b.round {
                stats.stale += 1;
                continue;
            }
            if update.round > b.round || participants.binary_search(&update.client_id).is_err() {
                warn!(
                    "server: unexpected update from client {} for round {}",
                    update.client_id, update.round
                );
                stats.rejected += 1;
                continue;
            }
            if got.contains_key(&update.client_id) {
                stats.duplicates += 1;
                continue;
            }
            got.insert(update.client_id, update);
        }
        let record = finish_round(
            cfg,
            &mut server,
            got.into_values().collect(),
            participants,
            &workload.test,
            started,
        )?;
        info!(
            "{} round {}/{}: accuracy {:.4} loss {:.4}",
            cfg.algorithm, record.round, cfg.rounds, record.accuracy, record.loss
        );
        on_record(&record)?;
        records.push(record);
    }
    Ok(RunOutcome { records, stats })
}
