use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use warsim::policy::{
    CacheMode, ChatCache, ChatClient, ChatMessage, ChatRequest, HttpTransport, PolicyError,
    RetryPolicy, Transport,
};

struct Captured {
    head: String,
    body: String,
}

/// Serves the scripted `(status, body)` replies in order, one per connection.
fn serve(replies: Vec<(u16, String)>) -> (String, mpsc::Receiver<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                head.push_str(&line);
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            tx.send(Captured {
                head,
                body: String::from_utf8(buf).unwrap(),
            })
            .unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, rx)
}

fn completion(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn request() -> ChatRequest {
    ChatRequest {
        model: "m".into(),
        messages: vec![ChatMessage::user("hi")],
        temperature: 1.0,
        seed: Some(3),
    }
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        max_attempts: 3,
        base_delay: Duration::from_millis(1),
        max_delay: Duration::from_millis(4),
    }
}

#[test]
fn cache_key_matches_external_digest() {
    // sha256 of the canonical body, computed with Python's hashlib
    assert_eq!(
        String::from_utf8(request().canonical_json()).unwrap(),
        r#"{"model":"m","messages":[{"role":"user","content":"hi"}],"temperature":1.0,"seed":3}"#
    );
    assert_eq!(
        request().cache_key(),
        "29804982fd29e829e0caee3b713f8b1bcf7ebd3073fefbeb1ec929df2e12dd44"
    );
}

#[test]
fn posts_wire_format_with_bearer_token() {
    let (url, rx) = serve(vec![(200, completion("Qin has chosen to Wait without Action"))]);
    let t = HttpTransport::new(url, Some("k-123".into()), Duration::from_secs(5)).unwrap();
    let text = t.send(&request()).unwrap();
    assert_eq!(text, "Qin has chosen to Wait without Action");
    let seen = rx.recv().unwrap();
    assert!(seen.head.starts_with("POST /v1/chat/completions"));
    assert!(seen.head.to_ascii_lowercase().contains("authorization: bearer k-123"));
    let body: serde_json::Value = serde_json::from_str(&seen.body).unwrap();
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["seed"], 3);
}

#[test]
fn retries_server_errors_then_caches() {
    let (url, _rx) = serve(vec![
        (503, "busy".into()),
        (429, "slow down".into()),
        (200, completion("ok")),
    ]);
    let dir = tempfile::tempdir().unwrap();
    let transport: Arc<dyn Transport> =
        Arc::new(HttpTransport::new(url, None, Duration::from_secs(5)).unwrap());
    let client = ChatClient::new(Some(transport), Some(ChatCache::new(dir.path())), CacheMode::Record)
        .with_retry(fast_retry());
    let (text, key) = client.chat(&request()).unwrap();
    assert_eq!(text, "ok");
    assert_eq!(client.network_calls(), 3);
    assert!(dir.path().join(format!("{key}.json")).is_file());

    let replay = ChatClient::new(None, Some(ChatCache::new(dir.path())), CacheMode::Replay);
    assert_eq!(replay.chat(&request()).unwrap().0, "ok");
    assert_eq!(replay.network_calls(), 0);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, _rx) = serve(vec![(400, "bad request".into())]);
    let transport: Arc<dyn Transport> =
        Arc::new(HttpTransport::new(url, None, Duration::from_secs(5)).unwrap());
    let client = ChatClient::new(Some(transport), None, CacheMode::Record).with_retry(fast_retry());
    let err = client.chat(&request()).unwrap_err();
    assert!(matches!(err, PolicyError::Unavailable(ref m) if m.contains("400")));
    assert!(!err.is_fatal());
    assert_eq!(client.network_calls(), 1);
}

#[test]
fn replay_miss_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let client = ChatClient::new(None, Some(ChatCache::new(dir.path())), CacheMode::Replay);
    let err = client.chat(&request()).unwrap_err();
    assert!(matches!(err, PolicyError::ReplayMiss { .. }));
    assert!(err.is_fatal());
}

#[test]
fn malformed_completion_is_a_transport_error() {
    let (url, _rx) = serve(vec![(200, "{\"choices\": []}".into())]);
    let t = HttpTransport::new(url, None, Duration::from_secs(5)).unwrap();
    let err = t.send(&request()).unwrap_err();
    assert!(err.message.contains("choices"));
    assert!(!err.retryable());
}
