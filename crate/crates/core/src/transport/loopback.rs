use std::collections::{BTreeMap, BTreeSet};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::{Endpoint, Fabric, Inbound};
use crate::error::{Error, Result};

#[derive(Default)]
struct Inner {
    next_id: usize,
    subscribers: BTreeMap<usize, (BTreeSet<String>, Sender<Inbound>)>,
    retained: BTreeMap<String, Vec<u8>>,
}

/// In-memory broker with exact-topic subscriptions and MQTT-style retained
/// messages. Delivery to each subscriber follows publish order.
#[derive(Clone, Default)]
pub struct LoopbackBroker {
    inner: Arc<Mutex<Inner>>,
}

impl LoopbackBroker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn endpoint(&self) -> LoopbackEndpoint {
        let (tx, rx) = channel();
        let mut inner = self.inner.lock().unwrap();
        let id = inner.next_id;
        inner.next_id += 1;
        inner.subscribers.insert(id, (BTreeSet::new(), tx));
        LoopbackEndpoint {
            id,
            broker: self.clone(),
            inbox: rx,
        }
    }
}

impl Fabric for LoopbackBroker {
    fn connect(&self, _name: &str) -> Result<Box<dyn Endpoint>> {
        Ok(Box::new(self.endpoint()))
    }
}

pub struct LoopbackEndpoint {
    id: usize,
    broker: LoopbackBroker,
    inbox: Receiver<Inbound>,
}

impl Endpoint for LoopbackEndpoint {
    fn subscribe(&mut self, topic: &str) -> Result<()> {
        let mut inner = self.broker.inner.lock().unwrap();
        let retained = inner.retained.get(topic).cloned();
        let (topics, tx) = inner
            .subscribers
            .get_mut(&self.id)
            .expect("endpoint registered");
        if topics.insert(topic.to_string()) {
            if let Some(bytes) = retained {
                let _ = tx.send(Inbound {
                    topic: topic.to_string(),
                    payload: bytes,
                });
            }
        }
        Ok(())
    }

    fn publish(&mut self, topic: &str, payload: &[u8], retain: bool) -> Result<()> {
        let mut inner = self.broker.inner.lock().unwrap();
        if retain {
            if payload.is_empty() {
                inner.retained.remove(topic);
            } else {
                inner.retained.insert(topic.to_string(), payload.to_vec());
            }
        }
        for (topics, tx) in inner.subscribers.values() {
            if topics.contains(topic) {
                // A dropped receiver only means that endpoint is gone.
                let _ = tx.send(Inbound {
                    topic: topic.to_string(),
                    payload: payload.to_vec(),
                });
            }
        }
        Ok(())
    }

    fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Inbound>> {
        match self.inbox.recv_timeout(timeout) {
            Ok(m) => Ok(Some(m)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => {
                Err(Error::Transport("loopback broker went away".into()))
            }
        }
    }
}

impl Drop for LoopbackEndpoint {
    fn drop(&mut self) {
        if let Ok(mut inner) = self.broker.inner.lock() {
            inner.subscribers.remove(&self.id);
        }
    }
}
