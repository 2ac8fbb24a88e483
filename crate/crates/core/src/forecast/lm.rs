use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{BackendKind, BackendSpec, GenerationParams, RetryPolicy};
use crate::error::{Error, Result};

/// Request body posted to the inference endpoint, one prompt per request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmRequest {
    pub prompt: String,
    pub max_new_tokens: u32,
    pub temperature: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmResponse {
    pub text: String,
}

enum Failure {
    /// Worth retrying. `reached` is true when the server answered at all.
    Transient { reached: bool, message: String },
    Permanent { message: String },
}

/// Blocking client for a text-generation service.
///
/// Up to `concurrency_limit` requests are in flight at once. Results are
/// reassembled in prompt order; a prompt whose retries are exhausted yields
/// an empty string, which later decodes as missing.
#[derive(Debug, Clone)]
pub struct LmClient {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
    params: GenerationParams,
    concurrency_limit: usize,
    retry: RetryPolicy,
}

impl LmClient {
    pub fn new(
        endpoint: &str,
        api_key: Option<String>,
        params: GenerationParams,
        concurrency_limit: usize,
        retry: RetryPolicy,
        timeout: Duration,
    ) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        LmClient {
            agent,
            endpoint: endpoint.to_string(),
            api_key,
            params,
            concurrency_limit: concurrency_limit.max(1),
            retry,
        }
    }

    pub fn from_spec(spec: &BackendSpec) -> Result<Self> {
        let BackendKind::LmService {
            endpoint,
            api_key_env,
            timeout_ms,
        } = &spec.kind
        else {
            return Err(Error::Config(format!(
                "backend {} is not a language-model service",
                spec.name
            )));
        };
        let api_key = match api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Config(format!(
                    "backend {}: environment variable {var} is not set",
                    spec.name
                ))
            })?),
            None => None,
        };
        Ok(Self::new(
            endpoint,
            api_key,
            spec.generation.clone(),
            spec.concurrency_limit,
            spec.retry.clone(),
            Duration::from_millis(*timeout_ms),
        ))
    }

    fn attempt(&self, body: &LmRequest) -> std::result::Result<String, Failure> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => {
                return Err(Failure::Transient {
                    reached: false,
                    message: e.to_string(),
                })
            }
        };
        let status = resp.status().as_u16();
        match status {
            200..=299 => resp
                .body_mut()
                .read_json::<LmResponse>()
                .map(|r| r.text)
                .map_err(|e| Failure::Transient {
                    reached: true,
                    message: format!("malformed response body: {e}"),
                }),
            408 | 429 | 500..=599 => Err(Failure::Transient {
                reached: true,
                message: format!("HTTP {status}"),
            }),
            _ => Err(Failure::Permanent {
                message: format!("HTTP {status}"),
            }),
        }
    }

    fn request_with_retry(&self, prompt: &str, seed: u64) -> (Option<String>, bool, String) {
        let body = LmRequest {
            prompt: prompt.to_string(),
            max_new_tokens: self.params.max_new_tokens,
            temperature: self.params.temperature,
            seed,
        };
        let mut reached = false;
        let mut last = String::new();
        for attempt in 1..=self.retry.max_attempts {
            match self.attempt(&body) {
                Ok(text) => return (Some(text), true, String::new()),
                Err(Failure::Permanent { message }) => return (None, true, message),
                Err(Failure::Transient { reached: r, message }) => {
                    reached |= r;
                    last = message;
                }
            }
            if attempt < self.retry.max_attempts {
                let factor = 1u64 << (attempt - 1).min(16);
                thread::sleep(Duration::from_millis(self.retry.backoff_ms.saturating_mul(factor)));
            }
        }
        (None, reached, last)
    }

    /// Generate one text per prompt, in prompt order.
    ///
    /// Fails only when no request reached the server at all.
    pub fn generate(&self, prompts: &[String], seed: u64) -> Result<Vec<String>> {
        let n = prompts.len();
        if n == 0 {
            return Ok(Vec::new());
        }
        let next = AtomicUsize::new(0);
        let (tx, rx) = mpsc::channel();
        thread::scope(|s| {
            for _ in 0..self.concurrency_limit.min(n) {
                let tx = tx.clone();
                let next = &next;
                s.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let outcome = self.request_with_retry(&prompts[i], seed);
                    if tx.send((i, outcome)).is_err() {
                        break;
                    }
                });
            }
        });
        drop(tx);

        let mut out = vec![String::new(); n];
        let mut any_reached = false;
        let mut last_error = String::new();
        for (i, (text, reached, message)) in rx {
            any_reached |= reached;
            match text {
                Some(t) => out[i] = t,
                None => {
                    warn!("prompt {i}: generation failed after retries: {message}");
                    last_error = message;
                }
            }
        }
        if !any_reached {
            return Err(Error::Backend(format!(
                "endpoint {} unreachable for all {n} requests: {last_error}",
                self.endpoint
            )));
        }
        Ok(out)
    }
}
