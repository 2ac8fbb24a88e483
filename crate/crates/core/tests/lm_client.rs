mod common;

use std::sync::Arc;
use std::time::Duration;

use common::{dead_endpoint, StubServer};
use promptcast::forecast::{BackendKind, BackendSpec, GenerationParams, LmClient, RetryPolicy};
use promptcast::Error;

fn client(url: &str, concurrency: usize, attempts: u32) -> LmClient {
    LmClient::new(
        url,
        None,
        GenerationParams {
            max_new_tokens: 16,
            temperature: 0.5,
        },
        concurrency,
        RetryPolicy {
            max_attempts: attempts,
            backoff_ms: 1,
        },
        Duration::from_secs(10),
    )
}

fn prompts(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("p{i}")).collect()
}

#[test]
fn echo_two_prompts() {
    let stub = StubServer::echo(|_| "OK".into());
    let out = client(&stub.url, 2, 1).generate(&prompts(2), 0).unwrap();
    assert_eq!(out, vec!["OK", "OK"]);
}

#[test]
fn request_body_follows_contract() {
    let stub = StubServer::echo(|p| p.to_uppercase());
    let out = client(&stub.url, 1, 1).generate(&["abc".into()], 42).unwrap();
    assert_eq!(out, vec!["ABC"]);
    let bodies = stub.stats.bodies.lock().unwrap();
    assert_eq!(
        bodies[0],
        serde_json::json!({"prompt": "abc", "max_new_tokens": 16, "temperature": 0.5, "seed": 42})
    );
}

#[test]
fn retries_a_transient_failure() {
    let stub = StubServer::start(
        Arc::new(|_: &str, attempt| {
            if attempt == 1 {
                (503, "busy".into())
            } else {
                (200, r#"{"text":"fine"}"#.into())
            }
        }),
        Duration::ZERO,
    );
    let out = client(&stub.url, 1, 2).generate(&["x".into()], 0).unwrap();
    assert_eq!(out, vec!["fine"]);
    assert_eq!(stub.stats.attempts_for("x"), 2);
}

#[test]
fn exhausted_retries_yield_empty_text() {
    let stub = StubServer::start(Arc::new(|_: &str, _| (500, "down".into())), Duration::ZERO);
    let out = client(&stub.url, 1, 3).generate(&["x".into()], 0).unwrap();
    assert_eq!(out, vec![""]);
    assert_eq!(stub.stats.attempts_for("x"), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let stub = StubServer::start(Arc::new(|_: &str, _| (400, "bad".into())), Duration::ZERO);
    let out = client(&stub.url, 1, 5).generate(&["x".into()], 0).unwrap();
    assert_eq!(out, vec![""]);
    assert_eq!(stub.stats.attempts_for("x"), 1);
}

#[test]
fn malformed_body_counts_as_failure() {
    let stub = StubServer::start(Arc::new(|_: &str, _| (200, "not json".into())), Duration::ZERO);
    let out = client(&stub.url, 1, 2).generate(&["x".into()], 0).unwrap();
    assert_eq!(out, vec![""]);
}

#[test]
fn unreachable_endpoint_is_a_run_error() {
    let err = client(&dead_endpoint(), 2, 2).generate(&prompts(3), 0).unwrap_err();
    assert!(matches!(err, Error::Backend(_)), "{err}");
}

#[test]
fn empty_prompt_list_needs_no_server() {
    assert!(client(&dead_endpoint(), 1, 1).generate(&[], 0).unwrap().is_empty());
}

#[test]
fn order_survives_out_of_order_completion() {
    // Later prompts finish first.
    let stub = StubServer::start(
        Arc::new(|p: &str, _| {
            let i: u64 = p[1..].parse().unwrap();
            std::thread::sleep(Duration::from_millis(30u64.saturating_sub(i)));
            (200, serde_json::json!({ "text": format!("r{i}") }).to_string())
        }),
        Duration::ZERO,
    );
    let out = client(&stub.url, 8, 1).generate(&prompts(30), 0).unwrap();
    let expected: Vec<String> = (0..30).map(|i| format!("r{i}")).collect();
    assert_eq!(out, expected);
    assert!(stub.stats.max_in_flight.load(std::sync::atomic::Ordering::SeqCst) <= 8);
}

#[test]
fn bearer_token_from_environment() {
    let stub = StubServer::echo(|_| "ok".into());
    std::env::set_var("PROMPTCAST_TEST_KEY", "s3cret");
    let mut spec = BackendSpec::new(
        "lm",
        BackendKind::LmService {
            endpoint: stub.url.clone(),
            api_key_env: Some("PROMPTCAST_TEST_KEY".into()),
            timeout_ms: 5_000,
        },
    );
    spec.concurrency_limit = 1;
    let out = LmClient::from_spec(&spec).unwrap().generate(&["a".into()], 0).unwrap();
    assert_eq!(out, vec!["ok"]);
    assert_eq!(
        stub.stats.auth.lock().unwrap()[0].as_deref(),
        Some("Bearer s3cret")
    );

    spec.kind = BackendKind::LmService {
        endpoint: stub.url.clone(),
        api_key_env: Some("PROMPTCAST_TEST_KEY_UNSET".into()),
        timeout_ms: 5_000,
    };
    assert!(matches!(LmClient::from_spec(&spec), Err(Error::Config(_))));
}
