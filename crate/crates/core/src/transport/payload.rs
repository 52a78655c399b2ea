//! Wire envelope. Every message is a JSON object
//! `{"v": 1, "kind": "...", "payload": {...}}`; tensors travel as
//! `{"shape": [...], "data": "<base64 of little-endian f64>"}`.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::algorithms::{Algorithm, ClientUpdate, HyperParams};
use crate::error::{Error, Result};
use crate::model::ModelParams;

pub const WIRE_VERSION: u32 = 1;

/// Row-major real tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireTensor {
    shape: Vec<usize>,
    data: String,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Decode(format!(
                "tensor shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }
}

pub fn encode_f64_base64(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub fn decode_f64_base64(text: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Decode(format!("bad base64 tensor data: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Decode(format!(
            "tensor data holds {} bytes, not a multiple of 8",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

impl Serialize for Tensor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        WireTensor {
            shape: self.shape.clone(),
            data: encode_f64_base64(&self.data),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Tensor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = WireTensor::deserialize(d)?;
        let data = decode_f64_base64(&w.data).map_err(serde::de::Error::custom)?;
        Tensor::new(w.shape, data).map_err(serde::de::Error::custom)
    }
}

/// Weights `[out, in]` then bias `[out]` for every layer.
pub fn params_to_tensors(p: &ModelParams) -> Vec<Tensor> {
    p.layers()
        .flat_map(|l| {
            [
                Tensor {
                    shape: vec![l.rows, l.cols],
                    data: l.weights.to_vec(),
                },
                Tensor::vector(l.bias.to_vec()),
            ]
        })
        .collect()
}

pub fn tensors_to_params(layers: &[Tensor]) -> Result<ModelParams> {
    if layers.is_empty() || !layers.len().is_multiple_of(2) {
        return Err(Error::Decode(format!(
            "expected weight/bias pairs, got {} tensors",
            layers.len()
        )));
    }
    let input_dim = match layers[0].shape.as_slice() {
        [_, cols] => *cols,
        s => return Err(Error::Decode(format!("first weight tensor has shape {s:?}"))),
    };
    let mut pairs = Vec::with_capacity(layers.len() / 2);
    for pair in layers.chunks_exact(2) {
        let (w, b) = (&pair[0], &pair[1]);
        match (w.shape.as_slice(), b.shape.as_slice()) {
            ([rows, _], [len]) if rows == len => {}
            (ws, bs) => {
                return Err(Error::Decode(format!(
                    "weight shape {ws:?} does not match bias shape {bs:?}"
                )))
            }
        }
        pairs.push((w.data.clone(), b.data.clone()));
    }
    ModelParams::from_layers(&pairs, input_dim).map_err(|e| Error::Decode(e.to_string()))
}

/// Client → server after local training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientPayload {
    pub client_id: usize,
    pub round: usize,
    pub layers: Vec<Tensor>,
    pub val_accuracy: f64,
    pub val_loss: f64,
    pub done: bool,
    pub n_samples: usize,
    pub local_steps: usize,
    pub label_distribution: Vec<f64>,
    #[serde(default)]
    pub delta_control: Option<Tensor>,
}

impl ClientPayload {
    pub fn from_update(u: &ClientUpdate) -> Self {
        Self {
            client_id: u.client_id,
            round: u.round,
            layers: params_to_tensors(&u.params),
            val_accuracy: u.train_accuracy,
            val_loss: u.train_loss,
            done: true,
            n_samples: u.n_samples,
            local_steps: u.local_steps,
            label_distribution: u.label_distribution.clone(),
            delta_control: u.delta_control.clone().map(Tensor::vector),
        }
    }

    pub fn into_update(self) -> Result<ClientUpdate> {
        if !self.done {
            return Err(Error::Decode(format!(
                "client {} reported unfinished training",
                self.client_id
            )));
        }
        Ok(ClientUpdate {
            client_id: self.client_id,
            round: self.round,
            params: tensors_to_params(&self.layers)?,
            n_samples: self.n_samples,
            local_steps: self.local_steps,
            label_distribution: self.label_distribution,
            delta_control: self.delta_control.map(|t| t.data),
            train_accuracy: self.val_accuracy,
            train_loss: self.val_loss,
        })
    }
}

/// Algorithm-specific additions to the server broadcast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerExtras {
    #[serde(default)]
    pub control: Option<Tensor>,
    #[serde(default)]
    pub alpha_dyn: Option<f64>,
    #[serde(default)]
    pub global_distribution: Option<Vec<f64>>,
    #[serde(default)]
    pub hyper: Option<HyperParams>,
}

/// Server → client at the start of a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerPayload {
    pub round: usize,
    pub layers: Vec<Tensor>,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub extras: Option<ServerExtras>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Server(ServerPayload),
    Client(ClientPayload),
    Stop { reason: String },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StopBody {
    reason: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    v: u32,
    kind: String,
    payload: serde_json::Value,
}

pub fn encode_message(m: &Message) -> Result<Vec<u8>> {
    let (kind, payload) = match m {
        Message::Server(p) => ("server", serde_json::to_value(p)?),
        Message::Client(p) => ("client", serde_json::to_value(p)?),
        Message::Stop { reason } => (
            "stop",
            serde_json::to_value(StopBody {
                reason: reason.clone(),
            })?,
        ),
    };
    Ok(serde_json::to_vec(&Envelope {
        v: WIRE_VERSION,
        kind: kind.to_string(),
        payload,
    })?)
}

pub fn decode_message(bytes: &[u8]) -> Result<Message> {
    let e: Envelope =
        serde_json::from_slice(bytes).map_err(|e| Error::Decode(format!("envelope: {e}")))?;
    if e.v != WIRE_VERSION {
        return Err(Error::Decode(format!(
            "wire version {} is not supported (expected {WIRE_VERSION})",
            e.v
        )));
    }
    let body = |what: &str, err: serde_json::Error| Error::Decode(format!("{what} payload: {err}"));
    Ok(match e.kind.as_str() {
        "server" => Message::Server(serde_json::from_value(e.payload).map_err(|x| body("server", x))?),
        "client" => Message::Client(serde_json::from_value(e.payload).map_err(|x| body("client", x))?),
        "stop" => {
            let s: StopBody = serde_json::from_value(e.payload).map_err(|x| body("stop", x))?;
            Message::Stop { reason: s.reason }
        }
        other => return Err(Error::Decode(format!("unknown message kind {other}"))),
    })
}
