#![cfg(feature = "http")]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use emoforge_core::attributes::{AttributeRecord, CaptionRecord};
use emoforge_core::llm::http::HttpBackend;
use emoforge_core::llm::{BackendConfig, ErrorClass, LlmClient};
use emoforge_core::prompt::{build_request, builtin_seed_examples, GenerationRequest};
use emoforge_core::Kind;
use serde_json::Value;

struct Captured {
    authorization: String,
    body: Value,
}

/// Serves one canned response per connection, in order, then stops.
fn serve(responses: Vec<String>) -> (String, mpsc::Receiver<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for response in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut authorization = String::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (name, value) = line.split_once(':').unwrap_or((line, ""));
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => length = value.trim().parse().unwrap(),
                    "authorization" => authorization = value.trim().to_string(),
                    _ => {}
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            tx.send(Captured { authorization, body: serde_json::from_slice(&body).unwrap() }).unwrap();
            let mut stream = stream;
            stream.write_all(response.as_bytes()).unwrap();
        }
    });
    (url, rx)
}

fn response(status: &str, extra_headers: &str, body: &str) -> String {
    format!(
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n{extra_headers}\r\n{body}",
        body.len()
    )
}

fn request() -> GenerationRequest {
    let attrs = AttributeRecord {
        image_id: "img1".into(),
        emotion_class: "awe".into(),
        brightness: 0.7,
        colorfulness: 0.4,
        scene_type: "canyon".into(),
        object_class: vec!["rock".into()],
        facial_expression: None,
        human_action: Some("hiking".into()),
    };
    let caption = CaptionRecord { image_id: "img1".into(), caption: "a hiker above a canyon".into() };
    build_request(Kind::Conversation, &caption, &attrs, &builtin_seed_examples()[..2]).unwrap()
}

fn config(url: String) -> BackendConfig {
    BackendConfig { endpoint: url, base_backoff: Duration::from_millis(5), max_retries: 2, ..BackendConfig::default() }
}

#[test]
fn retries_rate_limit_then_succeeds() {
    let ok_body = r#"{"choices":[{"message":{"role":"assistant","content":"Question: a?\nAnswer: b."}}],"usage":{"prompt_tokens":40,"completion_tokens":6}}"#;
    let (url, seen) = serve(vec![
        response("429 Too Many Requests", "Retry-After: 0\r\n", r#"{"error":"slow down"}"#),
        response("200 OK", "", ok_body),
    ]);
    let client = LlmClient::new(HttpBackend::new("test-key", Duration::from_secs(5)), config(url)).unwrap();
    let req = request();
    let result = client.complete(&req).unwrap();
    assert_eq!(result.raw_text, "Question: a?\nAnswer: b.");
    assert_eq!(result.prompt_hash, req.prompt_hash);

    let ledger = client.ledger();
    assert_eq!(ledger.request_count, 2);
    assert_eq!(ledger.failures(ErrorClass::RateLimit), 1);
    assert_eq!((ledger.prompt_tokens, ledger.completion_tokens), (40, 6));

    let first = seen.recv().unwrap();
    assert_eq!(first.authorization, "Bearer test-key");
    assert_eq!(first.body["model"], "gpt-4");
    let messages = first.body["messages"].as_array().unwrap();
    assert_eq!(messages[0]["role"], "system");
    assert_eq!(messages.last().unwrap()["role"], "user");
    assert_eq!(messages.len(), req.messages.len());
    assert!(first.body["temperature"].is_number());
}

#[test]
fn auth_failure_is_not_retried() {
    let (url, _seen) = serve(vec![response("401 Unauthorized", "", r#"{"error":"bad key"}"#)]);
    let client = LlmClient::new(HttpBackend::new("wrong", Duration::from_secs(5)), config(url)).unwrap();
    let err = client.complete(&request()).unwrap_err();
    assert_eq!(err.class, ErrorClass::Auth);
    assert_eq!(err.attempts, 1);
}

#[test]
fn server_errors_exhaust_retries() {
    let (url, _seen) = serve(vec![response("503 Service Unavailable", "", "{}"); 3]);
    let client = LlmClient::new(HttpBackend::new("k", Duration::from_secs(5)), config(url)).unwrap();
    let err = client.complete(&request()).unwrap_err();
    assert_eq!(err.class, ErrorClass::Server);
    assert_eq!(err.attempts, 3);
    assert_eq!(client.ledger().failures(ErrorClass::Server), 3);
}

#[test]
fn malformed_body_is_reported() {
    let (url, _seen) = serve(vec![response("200 OK", "", r#"{"choices":[]}"#)]);
    let client = LlmClient::new(HttpBackend::new("k", Duration::from_secs(5)), config(url)).unwrap();
    assert_eq!(client.complete(&request()).unwrap_err().class, ErrorClass::Malformed);
}

#[test]
fn connection_refused_is_transport() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = BackendConfig { max_retries: 0, ..config(format!("http://127.0.0.1:{port}/v1")) };
    let client = LlmClient::new(HttpBackend::new("k", Duration::from_secs(2)), cfg).unwrap();
    assert_eq!(client.complete(&request()).unwrap_err().class, ErrorClass::Transport);
}
