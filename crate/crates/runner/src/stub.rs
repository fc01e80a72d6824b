//! In-process chat-completions endpoint for tests. Records request bodies,
//! peak concurrency, and can rate-limit the first requests or reject auth.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

pub type Reply = Arc<dyn Fn(&str) -> String + Send + Sync>;

#[derive(Clone)]
pub struct StubBehavior {
    /// Maps the user message to the completion text.
    pub reply: Reply,
    /// The first this-many requests get HTTP 429.
    pub rate_limit_first: usize,
    pub delay: Duration,
    /// When set, requests without this bearer token get HTTP 401.
    pub require_token: Option<String>,
    /// Omit the usage block from replies.
    pub omit_usage: bool,
}

impl StubBehavior {
    pub fn echo(text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            reply: Arc::new(move |_| text.clone()),
            rate_limit_first: 0,
            delay: Duration::ZERO,
            require_token: None,
            omit_usage: false,
        }
    }
}

#[derive(Default)]
pub struct StubStats {
    pub requests: AtomicUsize,
    pub in_flight: AtomicUsize,
    pub max_in_flight: AtomicUsize,
    pub bodies: Mutex<Vec<String>>,
}

impl StubStats {
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }
}

struct Shared {
    behavior: StubBehavior,
    stats: Arc<StubStats>,
}

pub struct StubServer {
    pub addr: SocketAddr,
    pub stats: Arc<StubStats>,
    handle: tokio::task::JoinHandle<()>,
}

impl StubServer {
    /// Binds an ephemeral localhost port and serves until dropped.
    pub async fn start(behavior: StubBehavior) -> std::io::Result<Self> {
        let stats = Arc::new(StubStats::default());
        let shared = Arc::new(Shared {
            behavior,
            stats: stats.clone(),
        });
        let app = Router::new()
            .route("/v1/chat/completions", post(handle))
            .with_state(shared);
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let handle = tokio::spawn(async move {
            axum::serve(listener, app).await.expect("stub server");
        });
        Ok(Self { addr, stats, handle })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.handle.abort();
    }
}

struct InFlight<'a>(&'a StubStats);

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

async fn handle(State(shared): State<Arc<Shared>>, headers: HeaderMap, body: String) -> Response {
    let stats = &shared.stats;
    let b = &shared.behavior;
    let index = stats.requests.fetch_add(1, Ordering::SeqCst);
    let now = stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    stats.max_in_flight.fetch_max(now, Ordering::SeqCst);
    let _guard = InFlight(stats);
    stats.bodies.lock().expect("stats lock").push(body.clone());

    if let Some(token) = &b.require_token {
        let expected = format!("Bearer {token}");
        if headers.get("authorization").and_then(|v| v.to_str().ok()) != Some(expected.as_str()) {
            return (StatusCode::UNAUTHORIZED, "bad token").into_response();
        }
    }
    if !b.delay.is_zero() {
        tokio::time::sleep(b.delay).await;
    }
    if index < b.rate_limit_first {
        return (StatusCode::TOO_MANY_REQUESTS, "slow down").into_response();
    }
    let Ok(req) = serde_json::from_str::<Value>(&body) else {
        return (StatusCode::BAD_REQUEST, "body is not JSON").into_response();
    };
    let prompt = req
        .pointer("/messages/0/content")
        .and_then(Value::as_str)
        .unwrap_or_default();
    let text = (b.reply)(prompt);
    let mut out = json!({
        "id": format!("stub-{index}"),
        "object": "chat.completion",
        "choices": [{ "index": 0, "message": { "role": "assistant", "content": text }, "finish_reason": "stop" }],
    });
    if !b.omit_usage {
        out["usage"] = json!({
            "prompt_tokens": prompt.split_whitespace().count(),
            "completion_tokens": text.split_whitespace().count(),
        });
    }
    Json(out).into_response()
}
