mod common;

use std::sync::Arc;

use common::{chat_body, StubServer};
use midre::rationale::{
    generate_all, generate_bundle, HttpLvlmClient, ImagePayload, LvlmClient, LvlmEndpointConfig, ParseStatus,
    PromptSet, RationaleCache, RationaleInput, Stage,
};
use midre::Error;
use serde_json::json;

fn endpoint(stub: &StubServer, concurrency: usize) -> LvlmEndpointConfig {
    LvlmEndpointConfig {
        base_url: stub.url.clone(),
        model_name: "stub-model".into(),
        max_retries: 2,
        backoff_ms: vec![5, 10],
        max_concurrency: concurrency,
        timeout_ms: 10_000,
        ..Default::default()
    }
}

fn input(id: &str) -> RationaleInput {
    RationaleInput {
        sample_id: id.into(),
        text: Some("what a lovely monday".into()),
        image: Some(ImagePayload {
            media_type: "image/png".into(),
            bytes: vec![137, 80, 78, 71],
        }),
    }
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap()
}

#[test]
fn passthrough_of_completion_text() {
    let stub = StubServer::start();
    stub.script(&[(200, &chat_body("fixed body"))]);
    let client = HttpLvlmClient::new(endpoint(&stub, 1)).unwrap();
    let c = runtime().block_on(client.complete(&json!({"x": 1}))).unwrap();
    assert_eq!(c.text, "fixed body");
    assert_eq!(c.attempts, 1);
}

#[test]
fn rate_limit_is_retried_once() {
    let stub = StubServer::start();
    stub.script(&[(429, "{}"), (200, &chat_body("ok"))]);
    let client = HttpLvlmClient::new(endpoint(&stub, 1)).unwrap();
    let c = runtime().block_on(client.complete(&json!({}))).unwrap();
    assert_eq!((c.text.as_str(), c.attempts), ("ok", 2));
    assert_eq!(stub.state.calls(), 2);
}

#[test]
fn server_errors_exhaust_retries() {
    let stub = StubServer::start();
    stub.always(500);
    let client = HttpLvlmClient::new(endpoint(&stub, 1)).unwrap();
    match runtime().block_on(client.complete(&json!({}))) {
        Err(Error::Transport { attempts }) => assert_eq!(attempts.len(), 3),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(stub.state.calls(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let stub = StubServer::start();
    stub.always(400);
    let client = HttpLvlmClient::new(endpoint(&stub, 1)).unwrap();
    assert!(matches!(runtime().block_on(client.complete(&json!({}))), Err(Error::Protocol(_))));
    assert_eq!(stub.state.calls(), 1);
}

#[test]
fn non_json_reply_is_a_protocol_error() {
    let stub = StubServer::start();
    stub.script(&[(200, "<html>busy</html>")]);
    let client = HttpLvlmClient::new(endpoint(&stub, 1)).unwrap();
    assert!(matches!(runtime().block_on(client.complete(&json!({}))), Err(Error::Protocol(_))));
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let stub = StubServer::start();
    let mut e = endpoint(&stub, 1);
    e.base_url = "http://127.0.0.1:9/v1/chat/completions".into();
    let client = HttpLvlmClient::new(e).unwrap();
    match runtime().block_on(client.complete(&json!({}))) {
        Err(Error::Transport { attempts }) => assert_eq!(attempts.len(), 3),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn three_calls_per_sample_then_cache_hits() {
    let stub = StubServer::start();
    let e = endpoint(&stub, 2);
    let client = HttpLvlmClient::new(e.clone()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cache_path = dir.path().join("cache.jsonl");
    let cache = RationaleCache::open(&cache_path).unwrap();
    let prompts = PromptSet::shipped();
    let rt = runtime();
    let out = rt
        .block_on(generate_bundle(&client, &e, &input("a"), &Stage::ALL, &prompts, &cache))
        .unwrap();
    assert_eq!(stub.state.calls(), 3);
    assert_eq!(out.bundle.r_image.as_ref().unwrap().parse_status, ParseStatus::Ok);
    assert_eq!(out.bundle.r_multi.as_ref().unwrap().parse_status, ParseStatus::Ok);
    assert_eq!(
        out.bundle.combined,
        "[IMG-RAT] stub reason [TXT-RAT] stub reason [MM-RAT] mock praise the photo is grim"
    );

    // stage isolation on the wire
    let requests = stub.state.requests.lock().unwrap().clone();
    let parts = |i: usize| requests[i]["messages"][0]["content"].as_array().unwrap().clone();
    assert_eq!(parts(0).len(), 2);
    assert!(!parts(0)[0]["text"].as_str().unwrap().contains("lovely monday"));
    assert_eq!(parts(1).len(), 1);
    assert!(parts(1)[0]["text"].as_str().unwrap().ends_with("Text: what a lovely monday"));
    assert_eq!(parts(2).len(), 2);

    let reopened = RationaleCache::open(&cache_path).unwrap();
    let again = rt
        .block_on(generate_bundle(&client, &e, &input("a"), &Stage::ALL, &prompts, &reopened))
        .unwrap();
    assert!(again.cached);
    assert_eq!(stub.state.calls(), 3);
    assert_eq!(again.bundle, out.bundle);

    let mut edited = prompts.clone();
    edited.text.body.push_str("\nBe brief.");
    let miss = rt
        .block_on(generate_bundle(&client, &e, &input("a"), &Stage::ALL, &edited, &reopened))
        .unwrap();
    assert!(!miss.cached);
    assert_eq!(stub.state.calls(), 6);
}

#[test]
fn failed_stage_is_not_cached() {
    let stub = StubServer::start();
    stub.script(&[(200, &chat_body("- **Label**: [0]\n- **Reason**: [x]")), (404, "missing")]);
    let e = endpoint(&stub, 1);
    let client = HttpLvlmClient::new(e.clone()).unwrap();
    let cache = RationaleCache::in_memory();
    let err = runtime()
        .block_on(generate_bundle(&client, &e, &input("a"), &Stage::ALL, &PromptSet::shipped(), &cache))
        .unwrap_err();
    assert!(matches!(err, Error::Rationale { .. }), "{err}");
    assert!(cache.is_empty());
}

#[test]
fn in_flight_requests_stay_within_the_limit() {
    let stub = StubServer::start();
    stub.set_delay(40);
    let e = endpoint(&stub, 2);
    let client = Arc::new(HttpLvlmClient::new(e.clone()).unwrap());
    let inputs: Vec<_> = (0..6).map(|i| input(&format!("s{i}"))).collect();
    let results = runtime().block_on(generate_all(
        client,
        &e,
        inputs,
        &Stage::ALL,
        Arc::new(PromptSet::shipped()),
        Arc::new(RationaleCache::in_memory()),
    ));
    assert!(results.iter().all(|(_, r)| r.is_ok()));
    assert_eq!(stub.state.calls(), 18);
    assert!(stub.state.max_in_flight() <= 2, "{}", stub.state.max_in_flight());
    assert!(stub.state.max_in_flight() >= 1);
}
