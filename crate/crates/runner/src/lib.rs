//! Chat-completions driver: k sampled completions per prompt, bounded
//! concurrency, retry with full-jitter backoff, and an append-only response
//! file that a rerun resumes from.

mod config;
mod store;
#[cfg(feature = "stub")]
pub mod stub;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use reqwest::header::CONTENT_TYPE;
use reqwest::StatusCode;
use serde_json::Value;
use thiserror::Error;
use tokio::task::JoinSet;

pub use config::{EndpointConfig, RetryPolicy};
pub use store::{read_responses, response_from_line, response_to_line, ModelResponse, ResponseStore};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid endpoint config: {0}")]
    Config(String),
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("authentication rejected (HTTP {status}): {body}")]
    Auth { status: u16, body: String },
    #[error("response file line {line}: {message}")]
    Store { line: usize, message: String },
    #[error("http client: {0}")]
    Client(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One prompt to be sampled `k` times.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Job {
    pub instance_id: String,
    pub prompt: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BatchSummary {
    pub requested: usize,
    pub skipped_existing: usize,
    pub succeeded: usize,
    pub failed: usize,
    /// Instance id to failed run count; only instances with failures.
    pub failures_by_instance: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct Runner {
    client: reqwest::Client,
    config: Arc<EndpointConfig>,
    api_key: Option<String>,
}

enum Attempt {
    Done { text: String, prompt_tokens: i64, output_tokens: i64 },
    Retry(String),
    Fail(String),
    Auth { status: u16, body: String },
}

impl Runner {
    /// Validates the config and reads the API key from the environment.
    pub fn new(config: EndpointConfig) -> Result<Self, RunError> {
        config.validate()?;
        let api_key = match &config.api_key_env_var_name {
            Some(var) => Some(std::env::var(var).map_err(|_| RunError::MissingApiKey(var.clone()))?),
            None => None,
        };
        let client = reqwest::Client::builder()
            .timeout(Duration::from_millis(config.request_timeout_ms))
            .build()
            .map_err(|e| RunError::Client(e.to_string()))?;
        Ok(Self {
            client,
            config: Arc::new(config),
            api_key,
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    async fn attempt(&self, body: &str) -> Attempt {
        let mut req = self
            .client
            .post(self.config.completions_url())
            .header(CONTENT_TYPE, "application/json")
            .body(body.to_string());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send().await {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(format!("transport: {e}")),
        };
        let status = resp.status();
        let text = match resp.text().await {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(format!("reading body: {e}")),
        };
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Attempt::Auth {
                status: status.as_u16(),
                body: text,
            };
        }
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Attempt::Retry(format!("HTTP {}", status.as_u16()));
        }
        if !status.is_success() {
            return Attempt::Fail(format!("HTTP {}: {text}", status.as_u16()));
        }
        parse_completion(&text)
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let policy = &self.config.retry;
        let window = policy
            .backoff_base_ms
            .saturating_mul(1u64 << (attempt - 1).min(30))
            .min(policy.backoff_cap_ms);
        Duration::from_millis(rand::random_range(0..=window))
    }

    /// Runs one request to completion or exhaustion of the retry budget.
    /// Only an authentication rejection is an error; other failures yield a
    /// record with `error` set.
    pub async fn complete(&self, instance_id: &str, run_index: u32, prompt: &str) -> Result<ModelResponse, RunError> {
        let body = self.config.request_body(prompt);
        let started = Instant::now();
        let mut attempts = 0;
        let outcome = loop {
            attempts += 1;
            match self.attempt(&body).await {
                Attempt::Retry(why) if attempts < self.config.retry.max_attempts => {
                    let wait = self.backoff(attempts);
                    log::warn!("{instance_id}#{run_index}: {why}; retry {attempts} after {wait:?}");
                    tokio::time::sleep(wait).await;
                }
                Attempt::Retry(why) => break Err(format!("{why} after {attempts} attempts")),
                Attempt::Fail(why) => break Err(why),
                Attempt::Auth { status, body } => return Err(RunError::Auth { status, body }),
                Attempt::Done {
                    text,
                    prompt_tokens,
                    output_tokens,
                } => break Ok((text, prompt_tokens, output_tokens)),
            }
        };
        let latency_ms = started.elapsed().as_millis() as u64;
        Ok(match outcome {
            Ok((raw_text, prompt_tokens, output_tokens)) => ModelResponse {
                instance_id: instance_id.to_string(),
                run_index,
                raw_text,
                prompt_tokens,
                output_tokens,
                latency_ms,
                attempts,
                error: None,
            },
            Err(error) => ModelResponse {
                instance_id: instance_id.to_string(),
                run_index,
                raw_text: String::new(),
                prompt_tokens: -1,
                output_tokens: -1,
                latency_ms,
                attempts,
                error: Some(error),
            },
        })
    }

    /// `k` sequential samples of one prompt, returned in run order.
    pub async fn run_instance(&self, job: &Job, k: u32) -> Result<Vec<ModelResponse>, RunError> {
        let mut out = Vec::with_capacity(k as usize);
        for run in 0..k {
            out.push(self.complete(&job.instance_id, run, &job.prompt).await?);
        }
        Ok(out)
    }

    /// Samples every job `k` times into `store`, skipping pairs it already
    /// holds. At most `max_concurrent_requests` requests are in flight; each
    /// finished record is appended before the next is counted. An
    /// authentication rejection stops new requests, drains those in flight
    /// and returns the error.
    pub async fn run_batch(&self, jobs: &[Job], k: u32, store: &mut ResponseStore) -> Result<BatchSummary, RunError> {
        let mut summary = BatchSummary::default();
        let mut pending = Vec::new();
        for (j, job) in jobs.iter().enumerate() {
            for run in 0..k {
                if store.is_done(&job.instance_id, run) {
                    summary.skipped_existing += 1;
                } else {
                    pending.push((j, run));
                }
            }
        }
        pending.reverse();
        let limit = self.config.max_concurrent_requests;
        let mut in_flight: JoinSet<Result<ModelResponse, RunError>> = JoinSet::new();
        let mut abort: Option<RunError> = None;
        loop {
            while abort.is_none() && in_flight.len() < limit {
                let Some((j, run)) = pending.pop() else { break };
                let runner = self.clone();
                let job = jobs[j].clone();
                summary.requested += 1;
                in_flight.spawn(async move { runner.complete(&job.instance_id, run, &job.prompt).await });
            }
            let Some(joined) = in_flight.join_next().await else { break };
            match joined.map_err(|e| RunError::Client(e.to_string()))? {
                Ok(r) => {
                    store.append(&r)?;
                    if r.is_success() {
                        summary.succeeded += 1;
                    } else {
                        summary.failed += 1;
                        *summary.failures_by_instance.entry(r.instance_id.clone()).or_default() += 1;
                    }
                }
                Err(e) => {
                    if abort.is_none() {
                        log::error!("{e}; aborting batch");
                        abort = Some(e);
                    }
                }
            }
        }
        match abort {
            Some(e) => Err(e),
            None => Ok(summary),
        }
    }

    /// Opens `path` for resumption and runs the batch into it.
    pub async fn run_batch_to_file(&self, jobs: &[Job], k: u32, path: &Path) -> Result<BatchSummary, RunError> {
        let mut store = ResponseStore::open(path)?;
        self.run_batch(jobs, k, &mut store).await
    }
}

fn parse_completion(text: &str) -> Attempt {
    let v: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => return Attempt::Fail(format!("response is not JSON: {e}")),
    };
    let Some(content) = v.pointer("/choices/0/message/content") else {
        return Attempt::Fail("response has no choices[0].message.content".into());
    };
    let text = match content {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => return Attempt::Fail(format!("message content is not text: {other}")),
    };
    let usage = |field: &str| {
        v.pointer(&format!("/usage/{field}"))
            .and_then(Value::as_i64)
            .unwrap_or(-1)
    };
    Attempt::Done {
        text,
        prompt_tokens: usage("prompt_tokens"),
        output_tokens: usage("completion_tokens"),
    }
}
