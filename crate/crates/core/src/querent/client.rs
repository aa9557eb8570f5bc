//! Cached, retrying, bounded-concurrency querying of one endpoint.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use super::cache::{cache_key, CachedResponse, ResponseCache};
use super::http::HttpTransport;
use super::mock::MockModel;
use super::protocol::prompt_text;
use super::{ModelEndpoint, PredictionRecord, QueryRequest, Transport, TransportConfig, TransportError};
use crate::corpus::LogoRecord;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::perturb::PerturbationKind;

/// One image to ask about.
#[derive(Debug, Clone)]
pub struct QueryItem {
    pub logo_id: String,
    pub perturbation: Option<PerturbationKind>,
    pub image: ImageBuffer,
}

pub struct Querent<'c> {
    endpoint: ModelEndpoint,
    transport: Box<dyn Transport + 'c>,
    cache: &'c ResponseCache,
    calls: AtomicUsize,
}

impl<'c> Querent<'c> {
    pub fn new(endpoint: ModelEndpoint, transport: Box<dyn Transport + 'c>, cache: &'c ResponseCache) -> Result<Self> {
        endpoint.validate()?;
        Ok(Self {
            endpoint,
            transport,
            cache,
            calls: AtomicUsize::new(0),
        })
    }

    /// Build the transport described by the endpoint. The mock needs the
    /// manifest to know categories and ground truth.
    pub fn from_endpoint(endpoint: ModelEndpoint, logos: &[LogoRecord], cache: &'c ResponseCache) -> Result<Self> {
        let transport: Box<dyn Transport> = match &endpoint.transport {
            TransportConfig::HttpChatWithImage {
                url,
                auth_env,
                remote_model,
                timeout_secs,
            } => {
                let token = match auth_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| {
                        Error::Config(format!("{}: environment variable {var} is not set", endpoint.model_id))
                    })?),
                    None => None,
                };
                Box::new(HttpTransport::new(
                    url.clone(),
                    token,
                    remote_model.clone(),
                    Duration::from_secs(*timeout_secs),
                ))
            }
            TransportConfig::Mock(cfg) => {
                cfg.validate().map_err(Error::Config)?;
                Box::new(MockModel::new(cfg.clone(), logos))
            }
        };
        Self::new(endpoint, transport, cache)
    }

    pub fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }

    /// Number of transport calls made so far (cache hits excluded).
    pub fn transport_calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn key(&self, image: &ImageBuffer, prompt_id: &str) -> String {
        cache_key(image, prompt_id, &self.endpoint.model_id, &self.endpoint.params)
    }

    fn call_with_retries(&self, req: &QueryRequest<'_>) -> Result<String> {
        let model_id = &self.endpoint.model_id;
        let policy = &self.endpoint.retry;
        let mut log = Vec::new();
        let mut delay = policy.backoff_ms;
        for attempt in 1..=policy.max_attempts {
            self.calls.fetch_add(1, Ordering::Relaxed);
            match self.transport.complete(req) {
                Ok(s) => return Ok(s),
                Err(TransportError::Auth(m)) => {
                    return Err(Error::Auth { model_id: model_id.clone(), message: m })
                }
                Err(TransportError::Malformed(m)) => {
                    return Err(Error::MalformedResponse { model_id: model_id.clone(), message: m })
                }
                Err(TransportError::Permanent(m)) => {
                    log.push(format!("attempt {attempt}: permanent: {m}"));
                    return Err(Error::Transport {
                        model_id: model_id.clone(),
                        attempts: attempt,
                        message: m,
                        attempt_log: log,
                    });
                }
                Err(TransportError::Transient(m)) => {
                    log::warn!("{model_id} attempt {attempt}/{} failed: {m}", policy.max_attempts);
                    log.push(format!("attempt {attempt}: transient: {m}"));
                    if attempt < policy.max_attempts {
                        std::thread::sleep(Duration::from_millis(delay));
                        delay = delay.saturating_mul(2);
                    }
                }
            }
        }
        Err(Error::Transport {
            model_id: model_id.clone(),
            attempts: policy.max_attempts,
            message: "retries exhausted".into(),
            attempt_log: log,
        })
    }

    /// Ask about one image; served from the cache when possible.
    pub fn query(
        &self,
        logo_id: &str,
        perturbation: Option<PerturbationKind>,
        image: &ImageBuffer,
        prompt_id: &str,
    ) -> Result<CachedResponse> {
        let key = self.key(image, prompt_id);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let prompt = prompt_text(prompt_id)
            .ok_or_else(|| Error::Config(format!("unknown prompt id {prompt_id:?}")))?;
        let req = QueryRequest {
            model_id: &self.endpoint.model_id,
            logo_id,
            perturbation,
            prompt_id,
            prompt,
            image,
            params: &self.endpoint.params,
        };
        let response = self.call_with_retries(&req)?;
        let timestamp = self
            .transport
            .is_network()
            .then(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()));
        let entry = CachedResponse { key, response, timestamp };
        self.cache.insert(entry.clone())?;
        Ok(entry)
    }

    /// Query many images with at most `max_concurrency` requests in flight.
    /// Items with identical cache keys are sent once. Output order matches
    /// input order.
    pub fn query_batch(&self, items: &[QueryItem], prompt_id: &str) -> Result<Vec<CachedResponse>> {
        let keys: Vec<String> = items.iter().map(|it| self.key(&it.image, prompt_id)).collect();
        let mut first_of: HashMap<&str, usize> = HashMap::new();
        let mut unique = Vec::new();
        for (i, k) in keys.iter().enumerate() {
            if !first_of.contains_key(k.as_str()) {
                first_of.insert(k, i);
                unique.push(i);
            }
        }
        let results: Vec<Mutex<Option<Result<CachedResponse>>>> = unique.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.endpoint.max_concurrency.min(unique.len()).max(1);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let j = next.fetch_add(1, Ordering::Relaxed);
                    if j >= unique.len() {
                        break;
                    }
                    let it = &items[unique[j]];
                    let r = self.query(&it.logo_id, it.perturbation, &it.image, prompt_id);
                    *results[j].lock().expect("result slot") = Some(r);
                });
            }
        });
        let mut by_key: HashMap<&str, CachedResponse> = HashMap::new();
        for (j, slot) in results.into_iter().enumerate() {
            let r = slot.into_inner().expect("result slot").expect("every slot filled")?;
            by_key.insert(keys[unique[j]].as_str(), r);
        }
        Ok(keys.iter().map(|k| by_key[k.as_str()].clone()).collect())
    }

    /// Query and judge a batch. Every item's logo must appear in `logos`.
    pub fn predict(
        &self,
        logos: &HashMap<&str, &LogoRecord>,
        items: &[QueryItem],
        prompt_id: &str,
        lexicon: &[String],
    ) -> Result<Vec<PredictionRecord>> {
        for it in items {
            if !logos.contains_key(it.logo_id.as_str()) {
                return Err(Error::InvalidArgument(format!("no manifest record for {}", it.logo_id)));
            }
        }
        let responses = self.query_batch(items, prompt_id)?;
        Ok(items
            .iter()
            .zip(&responses)
            .map(|(it, r)| {
                PredictionRecord::from_response(
                    logos[it.logo_id.as_str()],
                    &self.endpoint.model_id,
                    it.perturbation,
                    prompt_id,
                    r,
                    lexicon,
                )
            })
            .collect())
    }
}
