//! HTTP client for a model server speaking the `/v1` JSON protocol.
//!
//! Responses are validated before use and before caching, retried with
//! exponential backoff on transport failures and 5xx/429 statuses, and
//! memoised in memory plus (optionally) the on-disk cache. Cache keys cover
//! the request input, the endpoint and the model tag from `/v1/health`.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::sync::{Arc, Mutex, OnceLock};
use std::thread;
use std::time::Duration;

use base64::Engine;
use fgvp_core::proposals::SegmentedMask;
use fgvp_core::scoring::UNIT_NORM_TOLERANCE;
use fgvp_core::{Bbox, ImageBuffer, ScorerBackend, SegmenterBackend};
use serde::{Deserialize, Serialize};

use crate::cache::{CacheKey, DiskCache};
use crate::imageio::encode_png;
use crate::wire::{
    EmbedImageRequest, EmbedResponse, EmbedTextRequest, HealthResponse, ModelTags, SegmentRequest,
    SegmentResponse, EMBED_IMAGE, EMBED_TEXT, HEALTH, SEGMENT,
};

const MAX_BODY: u64 = 256 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    pub timeout_secs: f64,
    /// Extra attempts after the first.
    pub retries: u32,
    pub backoff_ms: u64,
    pub batch_size: usize,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            timeout_secs: 60.0,
            retries: 3,
            backoff_ms: 200,
            batch_size: 8,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size == 0 {
            return Err("batch size must be at least 1".into());
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err("timeout must be positive".into());
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(format!("url {:?} must start with http:// or https://", self.base_url));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RemoteErrorKind {
    Config(String),
    Transport(String),
    Status { code: u16, body: String },
    Protocol(String),
    Encode(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteError {
    pub endpoint: String,
    pub attempts: u32,
    pub kind: RemoteErrorKind,
}

impl fmt::Display for RemoteError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} after {} attempt(s): ", self.endpoint, self.attempts)?;
        match &self.kind {
            RemoteErrorKind::Config(m) => write!(f, "invalid configuration: {m}"),
            RemoteErrorKind::Transport(m) => write!(f, "transport error: {m}"),
            RemoteErrorKind::Status { code, body } => write!(f, "HTTP {code}: {body}"),
            RemoteErrorKind::Protocol(m) => write!(f, "protocol violation: {m}"),
            RemoteErrorKind::Encode(m) => write!(f, "cannot encode request: {m}"),
        }
    }
}

impl std::error::Error for RemoteError {}

impl RemoteError {
    fn new(endpoint: &str, attempts: u32, kind: RemoteErrorKind) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            attempts,
            kind,
        }
    }
}

pub struct RemoteClient {
    config: RemoteConfig,
    base: String,
    agent: ureq::Agent,
    cache: DiskCache,
    memo: Mutex<HashMap<CacheKey, Arc<Vec<u8>>>>,
    tags: OnceLock<ModelTags>,
    dim: OnceLock<usize>,
}

impl RemoteClient {
    /// Builds a client without touching the network.
    pub fn new(config: RemoteConfig, cache: DiskCache) -> Result<Self, RemoteError> {
        config
            .validate()
            .map_err(|m| RemoteError::new("client", 0, RemoteErrorKind::Config(m)))?;
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build();
        Ok(Self {
            base: config.base_url.trim_end_matches('/').to_string(),
            config,
            agent,
            cache,
            memo: Mutex::new(HashMap::new()),
            tags: OnceLock::new(),
            dim: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    pub fn cache(&self) -> &DiskCache {
        &self.cache
    }

    pub fn health(&self) -> Result<HealthResponse, RemoteError> {
        let (body, attempts) = self.exchange(HEALTH, None)?;
        let h: HealthResponse = serde_json::from_slice(&body)
            .map_err(|e| RemoteError::new(HEALTH, attempts, RemoteErrorKind::Protocol(e.to_string())))?;
        if !h.ok {
            return Err(RemoteError::new(
                HEALTH,
                attempts,
                RemoteErrorKind::Protocol("server reports not ok".into()),
            ));
        }
        Ok(h)
    }

    /// Model tags reported by the server, fetched once.
    pub fn model_tags(&self) -> Result<&ModelTags, RemoteError> {
        if let Some(t) = self.tags.get() {
            return Ok(t);
        }
        let h = self.health()?;
        Ok(self.tags.get_or_init(|| h.models))
    }

    /// One request with retries. Returns the body and the attempt count.
    fn exchange(&self, endpoint: &str, body: Option<&[u8]>) -> Result<(Vec<u8>, u32), RemoteError> {
        let url = format!("{}{}", self.base, endpoint);
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let result = match body {
                Some(b) => self
                    .agent
                    .post(&url)
                    .set("Content-Type", "application/json")
                    .send_bytes(b),
                None => self.agent.get(&url).call(),
            };
            let kind = match result {
                Ok(resp) => {
                    let mut buf = Vec::new();
                    match resp.into_reader().take(MAX_BODY).read_to_end(&mut buf) {
                        Ok(_) => return Ok((buf, attempt)),
                        Err(e) => RemoteErrorKind::Transport(e.to_string()),
                    }
                }
                Err(ureq::Error::Status(code, resp)) => {
                    let body = resp.into_string().unwrap_or_default();
                    let kind = RemoteErrorKind::Status { code, body };
                    if code < 500 && code != 429 {
                        return Err(RemoteError::new(endpoint, attempt, kind));
                    }
                    kind
                }
                Err(ureq::Error::Transport(t)) => RemoteErrorKind::Transport(t.to_string()),
            };
            if attempt > self.config.retries {
                return Err(RemoteError::new(endpoint, attempt, kind));
            }
            log::debug!("{endpoint}: attempt {attempt} failed, retrying");
            let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
            thread::sleep(Duration::from_millis(delay));
        }
    }

    /// Memo, then disk cache, then network. Only validated bodies are stored.
    fn cached<T>(
        &self,
        endpoint: &str,
        model: &str,
        key_input: &[u8],
        request: &[u8],
        parse: impl Fn(&[u8]) -> Result<T, String>,
    ) -> Result<T, RemoteError> {
        let key = CacheKey::new(endpoint, model, key_input);
        let memo = self.memo.lock().expect("memo lock").get(&key).cloned();
        if let Some(body) = memo {
            if let Ok(v) = parse(&body) {
                return Ok(v);
            }
        }
        if let Some(body) = self.cache.get(&key) {
            match parse(&body) {
                Ok(v) => {
                    self.memo.lock().expect("memo lock").insert(key, Arc::new(body));
                    return Ok(v);
                }
                Err(e) => log::warn!("ignoring cached {endpoint} response that fails validation: {e}"),
            }
        }
        let (body, attempts) = self.exchange(endpoint, Some(request))?;
        let v = parse(&body).map_err(|m| RemoteError::new(endpoint, attempts, RemoteErrorKind::Protocol(m)))?;
        self.cache.put(&key, &body);
        self.memo.lock().expect("memo lock").insert(key, Arc::new(body));
        Ok(v)
    }

    fn parse_embedding(&self, body: &[u8]) -> Result<Vec<f32>, String> {
        let r: EmbedResponse = serde_json::from_slice(body).map_err(|e| e.to_string())?;
        if r.embedding.is_empty() {
            return Err("empty embedding".into());
        }
        if r.dim != r.embedding.len() {
            return Err(format!("dim field says {} but embedding has {} values", r.dim, r.embedding.len()));
        }
        if let Some(&d) = self.dim.get() {
            if d != r.dim {
                return Err(format!("embedding dimension changed from {d} to {}", r.dim));
            }
        }
        if r.embedding.iter().any(|v| !v.is_finite()) {
            return Err("non-finite embedding value".into());
        }
        let norm = r.embedding.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(format!("embedding norm {norm} is not 1"));
        }
        self.dim.get_or_init(|| r.dim);
        Ok(r.embedding)
    }

    fn png_b64(&self, endpoint: &str, image: &ImageBuffer) -> Result<(Vec<u8>, String), RemoteError> {
        let png = encode_png(image).map_err(|e| RemoteError::new(endpoint, 0, RemoteErrorKind::Encode(e.to_string())))?;
        let b64 = base64::engine::general_purpose::STANDARD.encode(&png);
        Ok((png, b64))
    }

    fn segment(&self, image: &ImageBuffer, mut req: SegmentRequest, queries: usize) -> Result<Vec<SegmentedMask>, RemoteError> {
        if queries == 0 {
            return Ok(Vec::new());
        }
        let model = self.model_tags()?.segmenter.clone();
        let (png, b64) = self.png_b64(SEGMENT, image)?;
        req.image_png_b64 = b64;
        let request = serde_json::to_vec(&req).expect("serializable request");
        // The key covers the image bytes plus the queries, not the base64 copy.
        let mut key_input = png;
        key_input.extend_from_slice(&serde_json::to_vec(&(&req.boxes, &req.points)).expect("serializable"));
        let (h, w) = image.dims();
        self.cached(SEGMENT, &model, &key_input, &request, |body| {
            let r: SegmentResponse = serde_json::from_slice(body).map_err(|e| e.to_string())?;
            if r.masks.len() != queries {
                return Err(format!("{} masks for {queries} queries", r.masks.len()));
            }
            r.masks
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    if m.rle.size != [h, w] {
                        return Err(format!("mask {i} has size {:?}, image is [{h}, {w}]", m.rle.size));
                    }
                    if !m.quality.is_finite() {
                        return Err(format!("mask {i} has non-finite quality"));
                    }
                    let mask = m.rle.to_mask().map_err(|e| format!("mask {i}: {e}"))?;
                    Ok(SegmentedMask {
                        mask,
                        quality: m.quality,
                    })
                })
                .collect()
        })
    }
}

impl ScorerBackend for RemoteClient {
    type Error = RemoteError;

    fn embed_image(&self, image: &ImageBuffer) -> Result<Vec<f32>, RemoteError> {
        let model = self.model_tags()?.scorer.clone();
        let (png, b64) = self.png_b64(EMBED_IMAGE, image)?;
        let request = serde_json::to_vec(&EmbedImageRequest { image_png_b64: b64 }).expect("serializable request");
        self.cached(EMBED_IMAGE, &model, &png, &request, |b| self.parse_embedding(b))
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f32>, RemoteError> {
        let model = self.model_tags()?.scorer.clone();
        let request = serde_json::to_vec(&EmbedTextRequest { text: text.to_string() }).expect("serializable request");
        self.cached(EMBED_TEXT, &model, text.as_bytes(), &request, |b| self.parse_embedding(b))
    }
}

impl SegmenterBackend for RemoteClient {
    type Error = RemoteError;

    fn segment_boxes(&self, image: &ImageBuffer, boxes: &[Bbox]) -> Result<Vec<SegmentedMask>, RemoteError> {
        let req = SegmentRequest {
            image_png_b64: String::new(),
            boxes: Some(boxes.iter().map(|b| b.to_array()).collect()),
            points: None,
        };
        self.segment(image, req, boxes.len())
    }

    fn segment_points(&self, image: &ImageBuffer, points: &[(f64, f64)]) -> Result<Vec<SegmentedMask>, RemoteError> {
        let req = SegmentRequest {
            image_png_b64: String::new(),
            boxes: None,
            points: Some(points.iter().map(|&(x, y)| [x, y]).collect()),
        };
        self.segment(image, req, points.len())
    }
}
