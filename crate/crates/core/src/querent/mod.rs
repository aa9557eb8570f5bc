//! Querying models with the standard prompt, caching replies, and turning
//! replies into hallucination / exact-match judgments.

pub mod cache;
pub mod client;
pub mod http;
pub mod mock;
pub mod protocol;

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::LogoRecord;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::perturb::PerturbationKind;

pub use cache::{cache_key, CachedResponse, ResponseCache};
pub use client::{QueryItem, Querent};
pub use mock::{MockConfig, MockModel, MockRates};
pub use protocol::{judge, normalize_text, parse_structured, Judgment, ParsedReply};

/// Greedy decoding settings sent with each request and folded into the cache key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_max_tokens() -> u32 {
    64
}

impl Default for DecodingParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: default_max_tokens(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TransportConfig {
    /// OpenAI-compatible chat-completions endpoint that accepts image parts.
    HttpChatWithImage {
        url: String,
        /// Name of the environment variable holding the bearer token.
        #[serde(default)]
        auth_env: Option<String>,
        /// Model name sent on the wire; defaults to the endpoint's model id.
        #[serde(default)]
        remote_model: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
    Mock(MockConfig),
}

fn default_timeout() -> u64 {
    120
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub model_id: String,
    pub transport: TransportConfig,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub params: DecodingParams,
}

fn default_concurrency() -> usize {
    4
}

impl ModelEndpoint {
    pub fn validate(&self) -> Result<()> {
        if self.model_id.trim().is_empty() {
            return Err(Error::Config("endpoint model_id must be non-empty".into()));
        }
        if self.max_concurrency == 0 {
            return Err(Error::Config(format!("{}: max_concurrency must be >= 1", self.model_id)));
        }
        if self.retry.max_attempts == 0 {
            return Err(Error::Config(format!("{}: retry.max_attempts must be >= 1", self.model_id)));
        }
        Ok(())
    }
}

/// One request to a model.
#[derive(Debug, Clone, Copy)]
pub struct QueryRequest<'a> {
    pub model_id: &'a str,
    pub logo_id: &'a str,
    pub perturbation: Option<PerturbationKind>,
    pub prompt_id: &'a str,
    pub prompt: &'a str,
    pub image: &'a ImageBuffer,
    pub params: &'a DecodingParams,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Worth retrying: connection failures, timeouts, 429 and 5xx.
    Transient(String),
    Permanent(String),
    Auth(String),
    Malformed(String),
}

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportError::Transient(m) => write!(f, "transient: {m}"),
            TransportError::Permanent(m) => write!(f, "permanent: {m}"),
            TransportError::Auth(m) => write!(f, "auth: {m}"),
            TransportError::Malformed(m) => write!(f, "malformed: {m}"),
        }
    }
}

/// Anything that can answer a [`QueryRequest`] with raw reply text.
pub trait Transport: Send + Sync {
    fn complete(&self, request: &QueryRequest<'_>) -> Result<String, TransportError>;

    /// Whether replies come from a remote service (and get timestamps).
    fn is_network(&self) -> bool {
        true
    }
}

/// Which ablation condition produced a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    #[default]
    Base,
    Targeted,
    Placebo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbSource {
    Model,
    Probe,
}

mod perturbation_or_none {
    use super::PerturbationKind;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<PerturbationKind>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(v.map_or("none", PerturbationKind::as_str))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<PerturbationKind>, D::Error> {
        let s = String::deserialize(d)?;
        if s == "none" {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(serde::de::Error::custom)
        }
    }
}

/// Outcome of one (model, logo, perturbation, prompt) query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub logo_id: String,
    pub model_id: String,
    #[serde(with = "perturbation_or_none")]
    pub perturbation: Option<PerturbationKind>,
    #[serde(default)]
    pub condition: Condition,
    pub prompt_id: String,
    pub raw_response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emitted_text: Option<String>,
    pub y_hat: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_match: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prob_source: Option<ProbSource>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    pub cache_key: String,
    /// Unix seconds of the network call; absent for mock replies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

impl PredictionRecord {
    /// Parse and judge a reply for a logo.
    pub fn from_response(
        logo: &LogoRecord,
        model_id: &str,
        perturbation: Option<PerturbationKind>,
        prompt_id: &str,
        response: &CachedResponse,
        lexicon: &[String],
    ) -> Self {
        let parsed = parse_structured(&response.response, lexicon);
        let j = judge(logo, parsed.emitted_text.as_deref());
        let mut flags = Vec::new();
        if parsed.unstructured {
            flags.push(protocol::FLAG_UNSTRUCTURED.to_string());
        }
        PredictionRecord {
            logo_id: logo.id.clone(),
            model_id: model_id.to_string(),
            perturbation,
            condition: Condition::Base,
            prompt_id: prompt_id.to_string(),
            raw_response: response.response.clone(),
            emitted_text: parsed.emitted_text,
            y_hat: j.y_hat as u8,
            exact_match: j.exact_match,
            prob_source: parsed.confidence.map(|_| ProbSource::Model),
            prob: parsed.confidence,
            flags,
            cache_key: response.key.clone(),
            timestamp: response.timestamp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::RecordInvariant { id: self.logo_id.clone(), message: m.into() });
        if self.y_hat > 1 {
            return fail("y_hat must be 0 or 1");
        }
        if self.y_hat == 0 && self.emitted_text.is_some() {
            return fail("y_hat = 0 but emitted_text present");
        }
        if self.y_hat == 1 && self.emitted_text.is_none() {
            return fail("y_hat = 1 but emitted_text absent");
        }
        if let Some(p) = self.prob {
            if !(0.0..=1.0).contains(&p) {
                return fail("prob outside [0, 1]");
            }
        }
        Ok(())
    }
}

pub fn write_predictions(path: impl AsRef<Path>, records: &[PredictionRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}
