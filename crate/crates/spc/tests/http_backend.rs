//! Integration tests for the HTTP generation backend against a local
//! stub server speaking just enough HTTP/1.1 for one request per connection.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use spc::backend::{
    Backend, BackendConfig, BackendKind, FinishReason, GenerationRequest, HttpBackend, Message,
    RetryPolicy,
};

/// A captured request: the raw header block and the parsed JSON body.
struct CapturedRequest {
    headers: String,
    body: serde_json::Value,
}

/// Serve `responses` (status line + JSON body) one connection each, closing
/// after every response, and hand captured requests back over a channel.
fn stub_server(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<CapturedRequest>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().expect("accept");
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            // Read the header block, then exactly Content-Length body bytes.
            let header_end = loop {
                let n = stream.read(&mut chunk).expect("read");
                buf.extend_from_slice(&chunk[..n]);
                if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                    break pos + 4;
                }
            };
            let headers = String::from_utf8_lossy(&buf[..header_end]).to_string();
            let content_length: usize = headers
                .lines()
                .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse().unwrap()))
                .unwrap_or(0);
            while buf.len() < header_end + content_length {
                let n = stream.read(&mut chunk).expect("read body");
                buf.extend_from_slice(&chunk[..n]);
            }
            let body_json: serde_json::Value =
                serde_json::from_slice(&buf[header_end..header_end + content_length])
                    .unwrap_or(serde_json::Value::Null);
            tx.send(CapturedRequest {
                headers,
                body: body_json,
            })
            .ok();
            let reason = if status == 200 { "OK" } else { "Internal Server Error" };
            let response = format!(
                "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(response.as_bytes()).expect("write");
        }
    });
    (format!("http://{addr}"), rx)
}

fn backend_config(url: &str) -> BackendConfig {
    BackendConfig {
        kind: BackendKind::Http,
        endpoint_url: Some(url.to_string()),
        model_name: Some("test-model".to_string()),
        api_key_env_var: None,
        max_concurrent_requests: 2,
        request_timeout_ms: 5_000,
        retry_policy: RetryPolicy {
            max_retries: 2,
            backoff_ms: 1,
        },
        script_path: None,
    }
}

fn request() -> GenerationRequest {
    let mut r = GenerationRequest::new(vec![
        Message::system("be brief"),
        Message::user("2 + 2 = ?"),
    ]);
    r.temperature = 0.25;
    r.seed = Some(99);
    r.stop_sequences = vec!["\n\n".to_string()];
    r
}

fn completion_body(content: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
        "usage": {"prompt_tokens": 12, "completion_tokens": 3},
    })
    .to_string()
}

#[test]
fn success_parses_response_and_sends_chat_payload() {
    let (url, rx) = stub_server(vec![(200, completion_body("4"))]);
    let backend = HttpBackend::new(&backend_config(&url)).unwrap();
    let resp = backend.generate(&request());
    assert_eq!(resp.finish_reason, FinishReason::Stop);
    assert_eq!(resp.text, "4");
    let usage = resp.usage.expect("usage");
    assert_eq!((usage.prompt_tokens, usage.completion_tokens), (12, 3));

    let captured = rx.recv().unwrap();
    assert!(captured.headers.starts_with("POST /chat/completions HTTP/1.1"));
    // No api_key_env_var configured: the request carries no credentials.
    assert!(!captured.headers.to_ascii_lowercase().contains("authorization"));
    assert_eq!(captured.body["model"], "test-model");
    assert_eq!(captured.body["temperature"], 0.25);
    assert_eq!(captured.body["seed"], 99);
    assert_eq!(captured.body["messages"][0]["role"], "system");
    assert_eq!(captured.body["messages"][1]["content"], "2 + 2 = ?");
    assert_eq!(captured.body["stop"][0], "\n\n");
}

#[test]
fn api_key_is_read_from_named_environment_variable() {
    let (url, rx) = stub_server(vec![(200, completion_body("ok"))]);
    let var = "SPC_TEST_API_KEY_A1";
    std::env::set_var(var, "secret-token-17");
    let mut cfg = backend_config(&url);
    cfg.api_key_env_var = Some(var.to_string());
    let backend = HttpBackend::new(&cfg).unwrap();
    std::env::remove_var(var);
    let resp = backend.generate(&request());
    assert_eq!(resp.finish_reason, FinishReason::Stop);
    let captured = rx.recv().unwrap();
    assert!(
        captured.headers.contains("authorization: Bearer secret-token-17")
            || captured.headers.contains("Authorization: Bearer secret-token-17"),
        "missing bearer credential in: {}",
        captured.headers
    );
}

#[test]
fn server_error_is_retried_until_success() {
    let (url, rx) = stub_server(vec![
        (500, "{\"error\": \"overloaded\"}".to_string()),
        (200, completion_body("recovered")),
    ]);
    let backend = HttpBackend::new(&backend_config(&url)).unwrap();
    let resp = backend.generate(&request());
    assert_eq!(resp.finish_reason, FinishReason::Stop);
    assert_eq!(resp.text, "recovered");
    // Both attempts reached the server.
    assert!(rx.recv().is_ok());
    assert!(rx.recv().is_ok());
}

#[test]
fn persistent_failure_reports_transport_error_after_retries() {
    let fail = (500, "{\"error\": \"down\"}".to_string());
    let (url, rx) = stub_server(vec![fail.clone(), fail.clone(), fail]);
    let backend = HttpBackend::new(&backend_config(&url)).unwrap();
    let resp = backend.generate(&request());
    assert_eq!(resp.finish_reason, FinishReason::Error);
    let err = resp.error.expect("error detail");
    assert_eq!(err.kind, "transport");
    assert!(err.message.contains("500"));
    // max_retries = 2 means exactly three attempts.
    for _ in 0..3 {
        assert!(rx.recv().is_ok());
    }
    assert!(rx.try_recv().is_err());
}

#[test]
fn malformed_success_body_fails_without_retry() {
    let (url, rx) = stub_server(vec![(200, "{\"no_choices\": true}".to_string())]);
    let backend = HttpBackend::new(&backend_config(&url)).unwrap();
    let resp = backend.generate(&request());
    assert_eq!(resp.finish_reason, FinishReason::Error);
    assert_eq!(resp.error.expect("error detail").kind, "malformed_response");
    // Exactly one request: a malformed 200 is not retried.
    assert!(rx.recv().is_ok());
    assert!(rx.try_recv().is_err());
}
