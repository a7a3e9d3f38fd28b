mod common;

use acsr_core::recognizer::{recognize_remote, EndpointConfig, RemoteError, RemoteRecognizer};
use common::*;

const KEY_VAR: &str = "ACSR_REMOTE_TEST_KEY";

fn config(server: &StubServer, max_retries: u32) -> EndpointConfig {
    std::env::set_var(KEY_VAR, "k");
    EndpointConfig {
        base_url: server.base_url(),
        api_key_env_var_name: KEY_VAR.into(),
        max_retries,
        retry_backoff_ms: 1,
        ..EndpointConfig::default()
    }
}

#[test]
fn blocking_wrapper_returns_absolute_frames() {
    let server = StubServer::start(StubMode::Valid { delay_ms: 0 }, "k");
    let p = payload(3);
    let r = recognize_remote(&p, &config(&server, 0)).unwrap();
    assert_eq!(
        r.labels.iter().map(|l| l.frame).collect::<Vec<_>>(),
        p.keyframe_frames
    );
    assert!(r
        .labels
        .iter()
        .all(|l| l.position.id() == 1 && l.shape.id() == 1));
    assert_eq!(server.authorized(), 1);
}

#[test]
fn rate_limit_is_retried() {
    let server = StubServer::start(StubMode::Status(429), "k");
    let err = recognize_remote(&payload(1), &config(&server, 1)).unwrap_err();
    assert!(
        matches!(
            err,
            RemoteError::Status {
                status: 429,
                attempts: 2,
                ..
            }
        ),
        "{err}"
    );
    assert_eq!(server.requests(), 2);
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    std::env::set_var(KEY_VAR, "k");
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let cfg = EndpointConfig {
        base_url: format!("http://{addr}/v1"),
        api_key_env_var_name: KEY_VAR.into(),
        max_retries: 2,
        retry_backoff_ms: 1,
        ..EndpointConfig::default()
    };
    let err = recognize_remote(&payload(1), &cfg).unwrap_err();
    assert!(
        matches!(err, RemoteError::Transport { attempts: 3, .. }),
        "{err}"
    );
}

#[test]
fn schema_error_carries_raw_body() {
    let server = StubServer::start(StubMode::BadPosition, "k");
    let err = recognize_remote(&payload(2), &config(&server, 0)).unwrap_err();
    let RemoteError::Schema { body, .. } = &err else {
        panic!("expected schema error, got {err}");
    };
    assert!(body.contains("\\\"position\\\":6"), "{body}");
    assert!(err.to_string().contains("position"));
}

#[test]
fn missing_key_variable() {
    let cfg = EndpointConfig {
        api_key_env_var_name: "ACSR_REMOTE_TEST_KEY_UNSET".into(),
        ..EndpointConfig::default()
    };
    assert!(matches!(
        RemoteRecognizer::new(cfg),
        Err(RemoteError::MissingApiKey(_))
    ));
}
