//! Client for an external model-serving sidecar.
//!
//! Wire format: one JSON object per line over TCP. A request is
//! `{"id": n, "endpoint": "/v1/...", "payload": {...}}` and the reply is
//! `{"id": n, "ok": true, "payload": {...}}` or `{"id": n, "ok": false, "error": "..."}`.
//! Replies may arrive in any order; they are matched on `id`.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::annotate::EntityTyper;
use crate::genfilter::{FilterError, RelationPredictor, SimilarityScorer};
use crate::lm::{LmError, SequenceScorer, TokenId, Vocab};

pub const ADDRESS_ENV: &str = "MECHNLI_BRIDGE";
pub const SCHEMA_VERSION: &str = "1";
pub const NORMALIZATION_TOLERANCE: f64 = 1e-4;

pub const META: &str = "/v1/meta";
pub const HEALTH: &str = "/v1/health";
pub const VOCAB: &str = "/v1/vocab";
pub const LOGPROBS: &str = "/v1/logprobs";
pub const SIMILARITY: &str = "/v1/similarity";
pub const RELATION: &str = "/v1/relation";
pub const ENTITY_TYPE: &str = "/v1/entity-type";

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("{ADDRESS_ENV} is not set")]
    NotConfigured,
    #[error("model unavailable: {0}")]
    ModelUnavailable(String),
    #[error("tokenization mismatch: {0}")]
    TokenizationMismatch(String),
    #[error("schema version {0:?} is not supported")]
    UnsupportedSchema(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<BridgeError> for LmError {
    fn from(e: BridgeError) -> Self {
        LmError::Bridge(e.to_string())
    }
}

impl From<BridgeError> for FilterError {
    fn from(e: BridgeError) -> Self {
        FilterError::Backend(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub endpoint: String,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    pub fn success(id: u64, payload: Value) -> Self {
        Response {
            id,
            ok: true,
            payload: Some(payload),
            error: None,
        }
    }

    pub fn failure(id: u64, error: impl Into<String>) -> Self {
        Response {
            id,
            ok: false,
            payload: None,
            error: Some(error.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub schema_version: String,
    #[serde(default)]
    pub models: HashMap<String, String>,
    #[serde(default)]
    pub relations: Vec<String>,
    #[serde(default)]
    pub entity_types: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabPayload {
    pub tokens: Vec<String>,
    pub eos: TokenId,
    #[serde(default)]
    pub unk: Option<TokenId>,
}

struct Conn {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    /// Replies read while waiting for a different id.
    parked: HashMap<u64, Response>,
}

/// One connection, shared behind a lock.
pub struct BridgeClient {
    conn: Mutex<Conn>,
    next_id: AtomicU64,
}

impl BridgeClient {
    pub fn connect(addr: &str) -> Result<Self, BridgeError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_read_timeout(Some(Duration::from_secs(60)))?;
        stream.set_nodelay(true)?;
        let writer = stream.try_clone()?;
        Ok(BridgeClient {
            conn: Mutex::new(Conn {
                reader: BufReader::new(stream),
                writer,
                parked: HashMap::new(),
            }),
            next_id: AtomicU64::new(1),
        })
    }

    /// Connects to the address in `MECHNLI_BRIDGE`.
    pub fn from_env() -> Result<Self, BridgeError> {
        let addr = std::env::var(ADDRESS_ENV).map_err(|_| BridgeError::NotConfigured)?;
        Self::connect(addr.trim())
    }

    /// Sends all requests before reading any reply.
    pub fn call_many(&self, calls: &[(&str, Value)]) -> Result<Vec<Value>, BridgeError> {
        let mut conn = self.conn.lock().map_err(|_| BridgeError::Protocol("poisoned lock".into()))?;
        let ids: Vec<u64> = calls.iter().map(|_| self.next_id.fetch_add(1, Ordering::Relaxed)).collect();
        let mut buf = Vec::new();
        for (id, (endpoint, payload)) in ids.iter().zip(calls) {
            let req = Request {
                id: *id,
                endpoint: endpoint.to_string(),
                payload: payload.clone(),
            };
            serde_json::to_writer(&mut buf, &req).map_err(|e| BridgeError::Protocol(e.to_string()))?;
            buf.push(b'\n');
        }
        conn.writer.write_all(&buf)?;
        conn.writer.flush()?;
        ids.iter().map(|id| conn.await_reply(*id)).collect()
    }

    pub fn call(&self, endpoint: &str, payload: Value) -> Result<Value, BridgeError> {
        Ok(self.call_many(&[(endpoint, payload)])?.remove(0))
    }

    fn call_as<T: DeserializeOwned>(&self, endpoint: &str, payload: Value) -> Result<T, BridgeError> {
        let v = self.call(endpoint, payload)?;
        serde_json::from_value(v).map_err(|e| BridgeError::Protocol(format!("{endpoint}: {e}")))
    }

    pub fn meta(&self) -> Result<Meta, BridgeError> {
        let m: Meta = self.call_as(META, json!({}))?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(BridgeError::UnsupportedSchema(m.schema_version));
        }
        Ok(m)
    }

    pub fn health(&self) -> Result<(), BridgeError> {
        #[derive(Deserialize)]
        struct Health {
            status: String,
        }
        let h: Health = self.call_as(HEALTH, json!({}))?;
        if h.status == "ok" {
            Ok(())
        } else {
            Err(BridgeError::ModelUnavailable(h.status))
        }
    }
}

impl Conn {
    fn await_reply(&mut self, id: u64) -> Result<Value, BridgeError> {
        loop {
            if let Some(r) = self.parked.remove(&id) {
                return unpack(r);
            }
            let mut line = String::new();
            if self.reader.read_line(&mut line)? == 0 {
                return Err(BridgeError::Protocol("connection closed".into()));
            }
            let r: Response =
                serde_json::from_str(line.trim_end()).map_err(|e| BridgeError::Protocol(e.to_string()))?;
            self.parked.insert(r.id, r);
        }
    }
}

fn unpack(r: Response) -> Result<Value, BridgeError> {
    if r.ok {
        return Ok(r.payload.unwrap_or(Value::Null));
    }
    let msg = r.error.unwrap_or_default();
    if let Some(rest) = msg.strip_prefix("TokenizationMismatch:") {
        return Err(BridgeError::TokenizationMismatch(rest.trim().to_string()));
    }
    Err(BridgeError::ModelUnavailable(msg))
}

/// Next-token distributions served by the bridge.
pub struct BridgeScorer<'a> {
    client: &'a BridgeClient,
    vocab: Vocab,
    eos: TokenId,
    unk: Option<TokenId>,
    conditioning: String,
}

impl<'a> BridgeScorer<'a> {
    pub fn new(client: &'a BridgeClient) -> Result<Self, BridgeError> {
        let v: VocabPayload = client.call_as(VOCAB, json!({}))?;
        let n = v.tokens.len();
        if v.eos as usize >= n || v.unk.is_some_and(|u| u as usize >= n) {
            return Err(BridgeError::Protocol("special token outside vocabulary".into()));
        }
        Ok(BridgeScorer {
            client,
            vocab: Vocab::new(v.tokens),
            eos: v.eos,
            unk: v.unk,
            conditioning: String::new(),
        })
    }

    /// Source text the served model conditions on.
    pub fn with_conditioning(mut self, text: impl Into<String>) -> Self {
        self.conditioning = text.into();
        self
    }
}

impl SequenceScorer for BridgeScorer<'_> {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn eos(&self) -> TokenId {
        self.eos
    }

    fn unk(&self) -> Option<TokenId> {
        self.unk
    }

    fn logprobs(&self, prefix: &[TokenId]) -> Result<Vec<f64>, LmError> {
        #[derive(Deserialize)]
        struct Out {
            logprobs: Vec<f64>,
        }
        let out: Out = self
            .client
            .call_as(LOGPROBS, json!({"prefix": prefix, "conditioning": self.conditioning}))?;
        if out.logprobs.len() != self.vocab.len() {
            return Err(BridgeError::TokenizationMismatch(format!(
                "{} scores for {} tokens",
                out.logprobs.len(),
                self.vocab.len()
            ))
            .into());
        }
        if out.logprobs.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(BridgeError::Protocol("non-finite log-probability".into()).into());
        }
        let mass: f64 = out.logprobs.iter().map(|x| x.exp()).sum();
        if (mass - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(BridgeError::Protocol(format!("distribution sums to {mass}")).into());
        }
        Ok(out.logprobs)
    }
}

pub struct BridgeSimilarity<'a>(pub &'a BridgeClient);

impl SimilarityScorer for BridgeSimilarity<'_> {
    fn score(&self, a: &str, b: &str) -> Result<f64, FilterError> {
        #[derive(Deserialize)]
        struct Out {
            score: f64,
        }
        let out: Out = self.0.call_as(SIMILARITY, json!({"a": a, "b": b}))?;
        if !(0.0..=1.0).contains(&out.score) {
            return Err(FilterError::Backend(format!("similarity {} outside [0, 1]", out.score)));
        }
        Ok(out.score)
    }
}

pub struct BridgeRelation<'a> {
    client: &'a BridgeClient,
    labels: Vec<String>,
}

impl<'a> BridgeRelation<'a> {
    pub fn new(client: &'a BridgeClient) -> Result<Self, BridgeError> {
        let labels = client.meta()?.relations;
        if labels.is_empty() {
            return Err(BridgeError::ModelUnavailable("no relation labels announced".into()));
        }
        Ok(BridgeRelation { client, labels })
    }
}

impl RelationPredictor for BridgeRelation<'_> {
    fn labels(&self) -> Vec<String> {
        self.labels.clone()
    }

    fn predict(&self, text: &str, regulator: &str, regulated: &str) -> Result<String, FilterError> {
        #[derive(Deserialize)]
        struct Out {
            label: String,
        }
        let out: Out = self
            .client
            .call_as(RELATION, json!({"text": text, "regulator": regulator, "regulated": regulated}))?;
        if !self.labels.contains(&out.label) {
            return Err(FilterError::Backend(format!("label {:?} not announced", out.label)));
        }
        Ok(out.label)
    }
}

pub struct BridgeTyper<'a> {
    client: &'a BridgeClient,
    labels: Vec<String>,
}

impl<'a> BridgeTyper<'a> {
    pub fn new(client: &'a BridgeClient) -> Result<Self, BridgeError> {
        let labels = client.meta()?.entity_types;
        Ok(BridgeTyper { client, labels })
    }
}

impl EntityTyper for BridgeTyper<'_> {
    /// Transport failures read as "untyped".
    fn type_of(&self, surface: &str, context: &str) -> Option<String> {
        #[derive(Deserialize)]
        struct Out {
            label: Option<String>,
        }
        self.client
            .call_as::<Out>(ENTITY_TYPE, json!({"surface": surface, "context": context}))
            .ok()?
            .label
    }

    fn labels(&self) -> Vec<String> {
        self.labels.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_shapes() {
        let r = Request {
            id: 3,
            endpoint: LOGPROBS.into(),
            payload: json!({"prefix": [1, 2]}),
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"id":3,"endpoint":"/v1/logprobs","payload":{"prefix":[1,2]}}"#
        );
        assert_eq!(
            serde_json::to_string(&Response::failure(4, "down")).unwrap(),
            r#"{"id":4,"ok":false,"error":"down"}"#
        );
        let ok: Response = serde_json::from_str(r#"{"id":5,"ok":true,"payload":{"score":0.5}}"#).unwrap();
        assert_eq!(unpack(ok).unwrap(), json!({"score": 0.5}));
    }

    #[test]
    fn error_mapping() {
        assert!(matches!(
            unpack(Response::failure(1, "TokenizationMismatch: bad id")),
            Err(BridgeError::TokenizationMismatch(m)) if m == "bad id"
        ));
        assert!(matches!(unpack(Response::failure(1, "loading")), Err(BridgeError::ModelUnavailable(_))));
    }

    #[test]
    fn unset_env_is_not_configured() {
        if std::env::var(ADDRESS_ENV).is_err() {
            assert!(matches!(BridgeClient::from_env(), Err(BridgeError::NotConfigured)));
        }
    }
}
