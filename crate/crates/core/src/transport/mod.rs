//! Message transport between the parameter server and the clients.

mod loopback;
mod mqtt;
mod payload;

use std::time::Duration;

use crate::error::Result;

pub use loopback::{LoopbackBroker, LoopbackEndpoint};
pub use mqtt::{MqttEndpoint, MqttFabric, MqttSettings};
pub use payload::{
    decode_f64_base64, decode_message, encode_f64_base64, encode_message, params_to_tensors,
    tensors_to_params, ClientPayload, Message, ServerExtras, ServerPayload, Tensor, WIRE_VERSION,
};

/// One delivered message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inbound {
    pub topic: String,
    pub payload: Vec<u8>,
}

/// A connected participant. Publishing an empty retained payload clears
/// the retained message on that topic.
pub trait Endpoint: Send {
    fn subscribe(&mut self, topic: &str) -> Result<()>;
    fn publish(&mut self, topic: &str, payload: &[u8], retain: bool) -> Result<()>;
    /// `Ok(None)` on timeout.
    fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Inbound>>;
    /// Block until every publish so far has been fully acknowledged.
    fn flush(&mut self, _timeout: Duration) -> Result<()> {
        Ok(())
    }
}

/// Something endpoints can be opened on.
pub trait Fabric: Send + Sync {
    fn connect(&self, name: &str) -> Result<Box<dyn Endpoint>>;
}

/// Topic layout for one experiment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicScheme {
    experiment: String,
}

impl TopicScheme {
    pub fn new(experiment: impl Into<String>) -> Self {
        Self {
            experiment: experiment.into(),
        }
    }

    pub fn experiment(&self) -> &str {
        &self.experiment
    }

    /// Client updates flow here.
    pub fn server(&self) -> String {
        format!("fl/{}/server", self.experiment)
    }

    /// Broadcasts addressed to client `i`.
    pub fn client(&self, i: usize) -> String {
        format!("fl/{}/client/{i}", self.experiment)
    }

    /// Control messages (stop) addressed to client `i`.
    pub fn control(&self, i: usize) -> String {
        format!("fl/{}/ctl/{i}", self.experiment)
    }

    /// Inverse of [`client`](Self::client) and [`control`](Self::control).
    pub fn client_of(&self, topic: &str) -> Option<usize> {
        let rest = topic.strip_prefix("fl/")?.strip_prefix(self.experiment.as_str())?;
        let id = rest
            .strip_prefix("/client/")
            .or_else(|| rest.strip_prefix("/ctl/"))?;
        id.parse().ok()
    }
}
