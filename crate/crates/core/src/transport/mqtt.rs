use std::collections::BTreeSet;
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use rumqttc::{Client, ConnectReturnCode, Connection, Event, MqttOptions, Outgoing, Packet, QoS};

use super::{Endpoint, Fabric, Inbound};
use crate::error::{Error, Result};

/// Broker connection parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MqttSettings {
    pub host: String,
    pub port: u16,
    pub username: Option<String>,
    pub password: Option<String>,
    pub client_prefix: String,
    pub connect_timeout: Duration,
    pub keep_alive: Duration,
    pub max_packet_bytes: usize,
}

impl Default for MqttSettings {
    fn default() -> Self {
        Self {
            host: "localhost".into(),
            port: 1883,
            username: None,
            password: None,
            client_prefix: "fedhet".into(),
            connect_timeout: Duration::from_secs(10),
            keep_alive: Duration::from_secs(30),
            max_packet_bytes: 16 * 1024 * 1024,
        }
    }
}

#[derive(Default)]
struct Shared {
    connects: usize,
    last_error: Option<String>,
    pending_pubcomp: usize,
    subacks: usize,
    closing: bool,
}

struct Signal {
    state: Mutex<Shared>,
    cond: Condvar,
}

impl Signal {
    fn update(&self, f: impl FnOnce(&mut Shared)) {
        f(&mut self.state.lock().unwrap());
        self.cond.notify_all();
    }

    /// Wait until `done` holds; returns the final state check.
    fn wait_until(&self, timeout: Duration, done: impl Fn(&Shared) -> bool) -> bool {
        let deadline = Instant::now() + timeout;
        let mut s = self.state.lock().unwrap();
        while !done(&s) {
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            s = self.cond.wait_timeout(s, deadline - now).unwrap().0;
        }
        true
    }
}

/// MQTT 3.1.1 endpoint with QoS 2 delivery. A reader thread drives the
/// connection, reconnects after failures and resubscribes on reconnect.
pub struct MqttEndpoint {
    client: Option<Client>,
    signal: Arc<Signal>,
    topics: Arc<Mutex<BTreeSet<String>>>,
    inbox: Receiver<Inbound>,
    reader: Option<JoinHandle<()>>,
    ack_timeout: Duration,
}

impl MqttEndpoint {
    pub fn connect(settings: &MqttSettings, client_id: &str) -> Result<Self> {
        let mut opts = MqttOptions::new(client_id, settings.host.clone(), settings.port);
        opts.set_keep_alive(settings.keep_alive)
            .set_clean_session(true)
            .set_max_packet_size(settings.max_packet_bytes, settings.max_packet_bytes);
        if let Some(user) = &settings.username {
            opts.set_credentials(user.clone(), settings.password.clone().unwrap_or_default());
        }
        let (client, connection) = Client::new(opts, 64);
        let signal = Arc::new(Signal {
            state: Mutex::new(Shared::default()),
            cond: Condvar::new(),
        });
        let topics = Arc::new(Mutex::new(BTreeSet::new()));
        let (tx, rx) = channel();
        let reader = {
            let (signal, topics, client) = (signal.clone(), topics.clone(), client.clone());
            std::thread::Builder::new()
                .name(format!("mqtt-{client_id}"))
                .spawn(move || drive(connection, client, signal, topics, tx))
                .map_err(|e| Error::Transport(format!("spawning reader: {e}")))?
        };
        let mut ep = Self {
            client: Some(client),
            signal,
            topics,
            inbox: rx,
            reader: Some(reader),
            ack_timeout: settings.connect_timeout,
        };
        if !ep
            .signal
            .wait_until(settings.connect_timeout, |s| s.connects > 0)
        {
            let why = ep.signal.state.lock().unwrap().last_error.clone();
            ep.shutdown();
            return Err(Error::Broker(format!(
                "could not connect to {}:{} within {:?}: {}",
                settings.host,
                settings.port,
                settings.connect_timeout,
                why.unwrap_or_else(|| "no response".into())
            )));
        }
        Ok(ep)
    }

    fn client(&self) -> &Client {
        self.client.as_ref().expect("client present until drop")
    }

    fn shutdown(&mut self) {
        self.signal.update(|s| s.closing = true);
        if let Some(client) = self.client.take() {
            let _ = client.disconnect();
        }
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
    }
}

fn drive(
    mut connection: Connection,
    client: Client,
    signal: Arc<Signal>,
    topics: Arc<Mutex<BTreeSet<String>>>,
    inbox: Sender<Inbound>,
) {
    // The clone only serves resubscription; releasing it on close lets the
    // request channel drain and end the loop.
    let mut client = Some(client);
    loop {
        if signal.state.lock().unwrap().closing {
            client = None;
        }
        let Ok(event) = connection.recv() else { break };
        match event {
            Ok(Event::Incoming(Packet::ConnAck(ack))) => {
                if ack.code != ConnectReturnCode::Success {
                    signal.update(|s| s.last_error = Some(format!("connection refused: {:?}", ack.code)));
                    continue;
                }
                let again = signal.state.lock().unwrap().connects > 0;
                if again {
                    if let Some(c) = &client {
                        for t in topics.lock().unwrap().iter() {
                            let _ = c.try_subscribe(t.clone(), QoS::ExactlyOnce);
                        }
                    }
                    log::info!("reconnected to broker, subscriptions restored");
                }
                signal.update(|s| s.connects += 1);
            }
            Ok(Event::Incoming(Packet::Publish(p))) => {
                let _ = inbox.send(Inbound {
                    topic: p.topic,
                    payload: p.payload.to_vec(),
                });
            }
            Ok(Event::Incoming(Packet::PubComp(_))) => {
                signal.update(|s| s.pending_pubcomp = s.pending_pubcomp.saturating_sub(1))
            }
            Ok(Event::Incoming(Packet::SubAck(_))) => signal.update(|s| s.subacks += 1),
            Ok(Event::Outgoing(Outgoing::Disconnect)) => break,
            Ok(_) => {}
            Err(e) => {
                let closing = signal.state.lock().unwrap().closing;
                if closing {
                    break;
                }
                log::warn!("broker connection error: {e}");
                signal.update(|s| s.last_error = Some(e.to_string()));
                std::thread::sleep(Duration::from_millis(250));
            }
        }
    }
    signal.update(|s| s.closing = true);
}

impl Endpoint for MqttEndpoint {
    fn subscribe(&mut self, topic: &str) -> Result<()> {
        if !self.topics.lock().unwrap().insert(topic.to_string()) {
            return Ok(());
        }
        let before = self.signal.state.lock().unwrap().subacks;
        self.client()
            .subscribe(topic, QoS::ExactlyOnce)
            .map_err(|e| Error::Transport(format!("subscribe {topic}: {e}")))?;
        if !self
            .signal
            .wait_until(self.ack_timeout, |s| s.subacks > before || s.closing)
        {
            return Err(Error::Transport(format!("no SUBACK for {topic}")));
        }
        Ok(())
    }

    fn publish(&mut self, topic: &str, payload: &[u8], retain: bool) -> Result<()> {
        self.signal.update(|s| s.pending_pubcomp += 1);
        self.client()
            .publish(topic, QoS::ExactlyOnce, retain, payload.to_vec())
            .map_err(|e| {
                self.signal.update(|s| s.pending_pubcomp -= 1);
                Error::Transport(format!("publish {topic}: {e}"))
            })
    }

    fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Inbound>> {
        match self.inbox.recv_timeout(timeout) {
            Ok(m) => Ok(Some(m)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => {
                let why = self.signal.state.lock().unwrap().last_error.clone();
                Err(Error::Broker(format!(
                    "connection closed: {}",
                    why.unwrap_or_else(|| "disconnected".into())
                )))
            }
        }
    }

    fn flush(&mut self, timeout: Duration) -> Result<()> {
        if self.signal.wait_until(timeout, |s| s.pending_pubcomp == 0) {
            Ok(())
        } else {
            let n = self.signal.state.lock().unwrap().pending_pubcomp;
            Err(Error::Transport(format!("{n} publishes unacknowledged after {timeout:?}")))
        }
    }
}

impl Drop for MqttEndpoint {
    fn drop(&mut self) {
        let _ = self.flush(Duration::from_secs(2));
        self.shutdown();
    }
}

/// Opens one MQTT connection per participant.
#[derive(Debug, Clone)]
pub struct MqttFabric {
    pub settings: MqttSettings,
}

impl Fabric for MqttFabric {
    fn connect(&self, name: &str) -> Result<Box<dyn Endpoint>> {
        let id = format!("{}-{name}", self.settings.client_prefix);
        Ok(Box::new(MqttEndpoint::connect(&self.settings, &id)?))
    }
}
