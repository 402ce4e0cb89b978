//! Exercises the remote oracle wire contract against a minimal in-process
//! HTTP server: request body shape, history window, auth header, error and
//! timeout behavior.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use chatmonkey::oracle::{
    open_session, OracleConfig, OracleError, RemoteBackend,
};
use chatmonkey::prompter::{Prompt, PromptKind};

struct Exchange {
    headers: String,
    body: String,
}

/// Accepts `count` connections; each gets `status` with `response_body` and
/// `Connection: close`. Captured requests are sent back over the channel.
fn spawn_server(
    count: usize,
    status: u16,
    response_body: &'static str,
) -> (String, mpsc::Receiver<Exchange>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for _ in 0..count {
            let Ok((mut stream, _)) = listener.accept() else { return };
            let mut raw = Vec::new();
            let mut buf = [0u8; 4096];
            let (headers, mut body) = loop {
                let n = stream.read(&mut buf).unwrap();
                raw.extend_from_slice(&buf[..n]);
                if let Some(pos) = find_header_end(&raw) {
                    let headers = String::from_utf8_lossy(&raw[..pos]).to_string();
                    let body = raw[pos + 4..].to_vec();
                    break (headers, body);
                }
                if n == 0 {
                    return;
                }
            };
            let content_length: usize = headers
                .lines()
                .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse().unwrap()))
                .unwrap_or(0);
            while body.len() < content_length {
                let n = stream.read(&mut buf).unwrap();
                if n == 0 {
                    break;
                }
                body.extend_from_slice(&buf[..n]);
            }
            let _ = tx.send(Exchange {
                headers,
                body: String::from_utf8_lossy(&body).to_string(),
            });
            let response = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{response_body}",
                response_body.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    (addr, rx)
}

fn find_header_end(raw: &[u8]) -> Option<usize> {
    raw.windows(4).position(|w| w == b"\r\n\r\n")
}

fn prompt(kind: PromptKind, text: &str) -> Prompt {
    Prompt { kind, text: text.into(), truncated: false }
}

#[test]
fn request_carries_window_and_wire_fields() {
    let (addr, rx) = spawn_server(5, 200, r#"{"text": "click ok"}"#);
    let backend = RemoteBackend::with_api_key(addr, Duration::from_secs(5), None);
    let config = OracleConfig { history_window: 2, ..OracleConfig::default() };
    let mut session = open_session(config, Box::new(backend)).unwrap();
    for i in 1..=4 {
        session.ask(&prompt(PromptKind::Test, &format!("p{i}"))).unwrap();
    }
    session.ask(&prompt(PromptKind::Test, "p5")).unwrap();
    let exchanges: Vec<Exchange> = rx.try_iter().collect();
    assert_eq!(exchanges.len(), 5);
    let last: serde_json::Value = serde_json::from_str(&exchanges[4].body).unwrap();
    assert!(last.get("model").is_some());
    assert!(last.get("temperature").is_some());
    assert!(last.get("max_tokens").is_some());
    // exactly turns 3 and 4 plus the new prompt, roles alternating
    let messages = last["messages"].as_array().unwrap();
    let texts: Vec<&str> = messages.iter().map(|m| m["text"].as_str().unwrap()).collect();
    assert_eq!(texts, vec!["p3", "click ok", "p4", "click ok", "p5"]);
    let roles: Vec<&str> = messages.iter().map(|m| m["role"].as_str().unwrap()).collect();
    assert_eq!(roles, vec!["user", "assistant", "user", "assistant", "user"]);
    assert!(exchanges[4].headers.starts_with("POST"));
}

#[test]
fn bearer_token_rides_the_auth_header() {
    let (addr, rx) = spawn_server(1, 200, r#"{"text": "ok then"}"#);
    let backend = RemoteBackend::with_api_key(addr, Duration::from_secs(5), Some("sekrit".into()));
    let mut session = open_session(OracleConfig::default(), Box::new(backend)).unwrap();
    session.ask(&prompt(PromptKind::Start, "hello")).unwrap();
    let exchange = rx.recv_timeout(Duration::from_secs(5)).unwrap();
    assert!(
        exchange.headers.to_ascii_lowercase().contains("authorization: bearer sekrit"),
        "{}",
        exchange.headers
    );
}

#[test]
fn non_2xx_surfaces_status_and_message() {
    let (addr, _rx) = spawn_server(1, 503, r#"{"error": "overloaded"}"#);
    let backend = RemoteBackend::with_api_key(addr, Duration::from_secs(5), None);
    let mut session = open_session(OracleConfig::default(), Box::new(backend)).unwrap();
    let err = session.ask(&prompt(PromptKind::Start, "hello")).unwrap_err();
    match err {
        OracleError::Remote { status, message } => {
            assert_eq!(status, 503);
            assert!(message.contains("overloaded"));
        }
        other => panic!("expected Remote, got {other:?}"),
    }
}

#[test]
fn timeout_retries_once_then_surfaces() {
    // A listener that accepts but never responds: both the first attempt and
    // the single retry must time out.
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut held = Vec::new();
        for _ in 0..2 {
            let Ok((stream, _)) = listener.accept() else { return };
            let _ = tx.send(());
            held.push(stream);
            thread::sleep(Duration::from_millis(50));
        }
        thread::sleep(Duration::from_secs(2));
        drop(held);
    });
    let backend = RemoteBackend::with_api_key(addr, Duration::from_millis(250), None);
    let mut session = open_session(OracleConfig::default(), Box::new(backend)).unwrap();
    let err = session.ask(&prompt(PromptKind::Start, "hello")).unwrap_err();
    assert!(matches!(err, OracleError::Timeout), "got {err:?}");
    // both attempts reached the server
    assert!(rx.recv_timeout(Duration::from_secs(5)).is_ok());
    assert!(rx.recv_timeout(Duration::from_secs(5)).is_ok());
}

#[test]
fn malformed_response_body_is_a_remote_error() {
    let (addr, _rx) = spawn_server(1, 200, "not json at all");
    let backend = RemoteBackend::with_api_key(addr, Duration::from_secs(5), None);
    let mut session = open_session(OracleConfig::default(), Box::new(backend)).unwrap();
    let err = session.ask(&prompt(PromptKind::Start, "hello")).unwrap_err();
    assert!(matches!(err, OracleError::Remote { .. }), "got {err:?}");
}
