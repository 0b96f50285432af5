//! In-process stub of a chat-completion endpoint.
#![allow(dead_code)]

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::Router;
use serde_json::json;

pub const SINGLE_STAGE_REPLY: &str = "- **Label**: [1]\n- **Reason**: [stub reason]";
pub const MULTIMODAL_REPLY: &str = "Caption in Image: [none]\nSupporting Text Analysis:\n  - Label: [1]\n  - Reason: [mock praise]\nImage-Caption Analysis:\n  - Label: [1]\n  - Reason: [the photo is grim]";

#[derive(Default)]
pub struct StubState {
    pub calls: AtomicUsize,
    pub in_flight: AtomicUsize,
    pub max_in_flight: AtomicUsize,
    pub requests: Mutex<Vec<serde_json::Value>>,
    /// Status/body pairs served before falling back to the default reply.
    pub script: Mutex<VecDeque<(u16, String)>>,
    pub default_status: Mutex<Option<u16>>,
    pub delay_ms: AtomicUsize,
}

impl StubState {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }
}

pub fn chat_body(text: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

async fn handle(State(state): State<Arc<StubState>>, body: String) -> (StatusCode, String) {
    state.calls.fetch_add(1, Ordering::SeqCst);
    let now = state.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    state.max_in_flight.fetch_max(now, Ordering::SeqCst);
    let request: serde_json::Value = serde_json::from_str(&body).unwrap_or(serde_json::Value::Null);
    state.requests.lock().unwrap().push(request.clone());
    let delay = state.delay_ms.load(Ordering::SeqCst) as u64;
    if delay > 0 {
        tokio::time::sleep(Duration::from_millis(delay)).await;
    }
    let scripted = state.script.lock().unwrap().pop_front();
    let default_status = *state.default_status.lock().unwrap();
    let reply = match (scripted, default_status) {
        (Some((status, body)), _) => (StatusCode::from_u16(status).unwrap(), body),
        (None, Some(status)) => (StatusCode::from_u16(status).unwrap(), "{\"error\":\"stub\"}".into()),
        (None, None) => {
            let text = request["messages"][0]["content"][0]["text"].as_str().unwrap_or("");
            let reply = if text.contains("Supporting Text:") {
                MULTIMODAL_REPLY
            } else {
                SINGLE_STAGE_REPLY
            };
            (StatusCode::OK, chat_body(reply))
        }
    };
    state.in_flight.fetch_sub(1, Ordering::SeqCst);
    reply
}

pub struct StubServer {
    pub url: String,
    pub state: Arc<StubState>,
    _runtime: tokio::runtime::Runtime,
}

impl StubServer {
    pub fn start() -> Self {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        let state = Arc::new(StubState::default());
        let app = Router::new()
            .route("/v1/chat/completions", post(handle))
            .with_state(state.clone());
        let listener = runtime
            .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
            .unwrap();
        let addr = listener.local_addr().unwrap();
        runtime.spawn(async move {
            axum::serve(listener, app).await.unwrap();
        });
        Self {
            url: format!("http://{addr}/v1/chat/completions"),
            state,
            _runtime: runtime,
        }
    }

    pub fn script(&self, replies: &[(u16, &str)]) {
        let mut s = self.state.script.lock().unwrap();
        for (status, body) in replies {
            s.push_back((*status, body.to_string()));
        }
    }

    pub fn always(&self, status: u16) {
        *self.state.default_status.lock().unwrap() = Some(status);
    }

    pub fn set_delay(&self, ms: usize) {
        self.state.delay_ms.store(ms, Ordering::SeqCst);
    }
}
