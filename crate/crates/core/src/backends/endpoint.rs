//! Client for OpenAI-compatible `/v1/completions` servers (vLLM, TGI,
//! TensorRT-LLM front ends).
//!
//! One call fans out `batch` concurrent streaming requests and joins them all.
//! Every streamed chunk counts as one token arrival.

use std::io::{BufRead, BufReader};
use std::sync::Barrier;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Backend, BackendError, CallTiming};
use crate::stats::median;
use crate::syninput::random_tokens;
use crate::types::SweepPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointBackendConfig {
    pub base_url: String,
    pub model_name: String,
    /// Seconds.
    pub request_timeout: f64,
    /// Bearer token; never serialized.
    #[serde(skip)]
    pub api_key: Option<String>,
}

/// Supplies prompts as token-id sequences.
pub trait PromptSource: Send {
    fn prompts(&mut self, count: u32, len: u32) -> Vec<Vec<u32>>;
}

/// Uniformly random token ids from a seeded generator.
pub struct SyntheticPrompts {
    vocab_size: u32,
    rng: ChaCha8Rng,
}

impl SyntheticPrompts {
    pub fn new(vocab_size: u32, seed: u64) -> Self {
        Self { vocab_size: vocab_size.max(2), rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl PromptSource for SyntheticPrompts {
    fn prompts(&mut self, count: u32, len: u32) -> Vec<Vec<u32>> {
        (0..count).map(|_| random_tokens(&mut self.rng, len, self.vocab_size)).collect()
    }
}

pub struct EndpointBackend {
    cfg: EndpointBackendConfig,
    client: reqwest::blocking::Client,
    prompts: Box<dyn PromptSource>,
    id: String,
}

/// Per-request timings relative to the shared start instant.
#[derive(Debug, Clone, Copy)]
struct StreamTiming {
    first_token: Duration,
    done: Duration,
    tokens: u32,
}

#[derive(Debug, Deserialize)]
struct Chunk {
    #[serde(default)]
    choices: Vec<ChunkChoice>,
}

#[derive(Debug, Deserialize)]
struct ChunkChoice {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    finish_reason: Option<String>,
}

impl Chunk {
    /// A chunk carries a token unless it is a bare finish marker.
    fn carries_token(&self) -> bool {
        self.choices.iter().any(|c| {
            c.text.as_deref().is_some_and(|t| !t.is_empty()) || c.finish_reason.is_none()
        })
    }
}

impl EndpointBackend {
    pub fn new(cfg: EndpointBackendConfig, prompts: Box<dyn PromptSource>) -> Result<Self, BackendError> {
        if !(cfg.request_timeout > 0.0) {
            return Err(BackendError::Config("request_timeout must be > 0".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.request_timeout))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        let id = format!("endpoint:{}", cfg.base_url.trim_end_matches('/'));
        Ok(Self { cfg, client, prompts, id })
    }

    fn url(&self) -> String {
        format!("{}/v1/completions", self.cfg.base_url.trim_end_matches('/'))
    }
}

/// What a request thread needs from the backend.
struct RequestCtx<'a> {
    cfg: &'a EndpointBackendConfig,
    client: &'a reqwest::blocking::Client,
    url: String,
}

impl RequestCtx<'_> {
    fn stream_one(
        &self,
        index: u32,
        prompt: &[u32],
        max_tokens: u32,
        start: &Barrier,
        t0: &std::sync::OnceLock<Instant>,
    ) -> Result<StreamTiming, BackendError> {
        let body = json!({
            "model": self.cfg.model_name,
            "prompt": prompt,
            "max_tokens": max_tokens,
            "temperature": 0,
            "stream": true,
        });
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.cfg.api_key {
            req = req.bearer_auth(key);
        }
        start.wait();
        let t0 = *t0.get_or_init(Instant::now);
        let resp = req
            .send()
            .map_err(|e| BackendError::Transport { index, message: e.to_string() })?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(BackendError::Http { index, status: status.as_u16(), body });
        }

        let mut first_token = None;
        let mut tokens = 0u32;
        for line in BufReader::new(resp).lines() {
            let line = line.map_err(|e| BackendError::Transport { index, message: e.to_string() })?;
            let Some(data) = line.strip_prefix("data:") else { continue };
            let data = data.trim();
            if data == "[DONE]" {
                break;
            }
            let chunk: Chunk = serde_json::from_str(data).map_err(|e| BackendError::Transport {
                index,
                message: format!("malformed stream chunk: {e}"),
            })?;
            if chunk.carries_token() {
                tokens += 1;
                first_token.get_or_insert_with(|| t0.elapsed());
            }
        }
        let done = t0.elapsed();
        Ok(StreamTiming { first_token: first_token.unwrap_or(done), done, tokens })
    }
}

impl Backend for EndpointBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn call(&mut self, point: SweepPoint) -> Result<CallTiming, BackendError> {
        let prompts = self.prompts.prompts(point.batch, point.input);
        let barrier = Barrier::new(prompts.len());
        let t0 = std::sync::OnceLock::new();
        let this = RequestCtx { cfg: &self.cfg, client: &self.client, url: self.url() };
        let this = &this;
        let results: Vec<Result<StreamTiming, BackendError>> = std::thread::scope(|s| {
            let handles: Vec<_> = prompts
                .iter()
                .enumerate()
                .map(|(i, prompt)| {
                    let (barrier, t0) = (&barrier, &t0);
                    s.spawn(move || this.stream_one(i as u32, prompt, point.output, barrier, t0))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("request thread panicked")).collect()
        });

        let mut timings = Vec::with_capacity(results.len());
        for r in results {
            timings.push(r?);
        }
        let firsts: Vec<f64> = timings.iter().map(|t| t.first_token.as_secs_f64() * 1e3).collect();
        let total_ms = timings.iter().map(|t| t.done.as_secs_f64() * 1e3).fold(0.0, f64::max);
        Ok(CallTiming {
            ttft_ms: median(&firsts).unwrap_or(total_ms),
            total_ms,
            token_mismatch: timings.iter().any(|t| t.tokens != point.output),
        })
    }
}
