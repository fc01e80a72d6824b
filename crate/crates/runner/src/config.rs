use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::RunError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    /// Total attempts per request, including the first.
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    /// Cap on a single backoff window.
    pub backoff_cap_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            backoff_base_ms: 500,
            backoff_cap_ms: 60_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    /// Prefix of `/chat/completions`, e.g. `https://host/v1`.
    pub base_url: String,
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    pub max_output_tokens: u32,
    /// Environment variable holding the bearer token; no auth header when unset.
    #[serde(default)]
    pub api_key_env_var_name: Option<String>,
    #[serde(default = "default_concurrency")]
    pub max_concurrent_requests: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_timeout")]
    pub request_timeout_ms: u64,
    /// Passed through verbatim as additional top-level request fields.
    #[serde(default)]
    pub extra_body: BTreeMap<String, Value>,
}

fn default_temperature() -> f64 {
    1.0
}

fn default_top_p() -> f64 {
    0.95
}

fn default_concurrency() -> usize {
    4
}

fn default_timeout() -> u64 {
    600_000
}

const RESERVED: [&str; 5] = ["model", "messages", "temperature", "top_p", "max_tokens"];

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>, max_output_tokens: u32) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            temperature: default_temperature(),
            top_p: default_top_p(),
            max_output_tokens,
            api_key_env_var_name: None,
            max_concurrent_requests: default_concurrency(),
            retry: RetryPolicy::default(),
            request_timeout_ms: default_timeout(),
            extra_body: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad(format!("top_p {} outside (0, 1]", self.top_p));
        }
        if self.max_concurrent_requests == 0 {
            return bad("max_concurrent_requests must be at least 1".into());
        }
        if self.retry.max_attempts == 0 {
            return bad("retry.max_attempts must be at least 1".into());
        }
        if self.max_output_tokens == 0 {
            return bad("max_output_tokens must be at least 1".into());
        }
        if let Some(k) = self.extra_body.keys().find(|k| RESERVED.contains(&k.as_str())) {
            return bad(format!("extra_body may not override `{k}`"));
        }
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    /// Request body with keys in sorted order; identical for identical
    /// (prompt, config).
    pub fn request_body(&self, prompt: &str) -> String {
        let mut body = Map::new();
        body.insert("model".into(), Value::from(self.model_name.clone()));
        body.insert(
            "messages".into(),
            serde_json::json!([{ "role": "user", "content": prompt }]),
        );
        body.insert("temperature".into(), Value::from(self.temperature));
        body.insert("top_p".into(), Value::from(self.top_p));
        body.insert("max_tokens".into(), Value::from(self.max_output_tokens));
        for (k, v) in &self.extra_body {
            body.insert(k.clone(), v.clone());
        }
        serde_json::to_string(&Value::Object(body)).expect("json values serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_is_stable_and_sorted() {
        let mut c = EndpointConfig::new("http://x/v1/", "m", 64);
        c.extra_body.insert("reasoning".into(), serde_json::json!({"effort": "low"}));
        let a = c.request_body("hi");
        assert_eq!(a, c.request_body("hi"));
        assert_eq!(
            a,
            r#"{"max_tokens":64,"messages":[{"content":"hi","role":"user"}],"model":"m","reasoning":{"effort":"low"},"temperature":1.0,"top_p":0.95}"#
        );
        assert_eq!(c.completions_url(), "http://x/v1/chat/completions");
        c.validate().unwrap();
    }

    #[test]
    fn validation() {
        let base = EndpointConfig::new("http://x", "m", 8);
        let mut c = base.clone();
        c.top_p = 0.0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.max_concurrent_requests = 0;
        assert!(c.validate().is_err());
        let mut c = base;
        c.extra_body.insert("messages".into(), Value::Null);
        assert!(c.validate().is_err());
    }
}
