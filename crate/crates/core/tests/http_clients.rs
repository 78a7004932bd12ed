use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use hypersoc_core::enhance::{
    embed, ChatClientConfig, ChatCompletionClient, EmbedderKind, EmbedderSpec, LlmClient,
};
use serde_json::{json, Value};

/// Serves `responses` in order, one per connection, and sends back each request body.
fn serve(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<(String, Value)>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            let req: Value = serde_json::from_slice(&buf).unwrap_or(Value::Null);
            tx.send((head, req)).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}"), rx)
}

#[test]
fn chat_client_sends_single_user_message_and_reads_first_choice() {
    let reply = json!({"choices": [{"message": {"role": "assistant", "content": "A calm reader."}}]});
    let (base, rx) = serve(vec![(200, reply.to_string())]);
    let cfg = ChatClientConfig {
        base_url: format!("{base}/v1"),
        model: "test-model".into(),
        ..Default::default()
    };
    let client = ChatCompletionClient::with_token(cfg, Some("secret".into()));
    assert_eq!(client.model_id(), "test-model");
    assert_eq!(client.complete("hello prompt").unwrap(), "A calm reader.");
    let (head, body) = rx.recv().unwrap();
    assert!(head.starts_with("POST /v1/chat/completions"));
    assert!(head.to_ascii_lowercase().contains("authorization: bearer secret"));
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"], json!([{"role": "user", "content": "hello prompt"}]));
}

#[test]
fn chat_client_surfaces_http_errors() {
    let (base, _rx) = serve(vec![(500, "{}".into())]);
    let client = ChatCompletionClient::with_token(
        ChatClientConfig { base_url: base, ..Default::default() },
        None,
    );
    assert!(client.complete("x").is_err());
}

#[test]
fn external_embedder_normalises_rows_and_keeps_order() {
    let reply = json!({"data": [
        {"index": 0, "embedding": [3.0, 4.0]},
        {"index": 1, "embedding": [0.0, 2.0]},
    ]});
    let (base, rx) = serve(vec![(200, reply.to_string())]);
    let spec = EmbedderSpec {
        kind: EmbedderKind::External,
        dim: 2,
        endpoint: format!("{base}/v1/embeddings"),
        ..Default::default()
    };
    let texts = vec!["first".to_string(), "".to_string(), "third".to_string()];
    let e = embed(&spec, &texts).unwrap();
    let (_, body) = rx.recv().unwrap();
    assert_eq!(body["input"], json!(["first", "third"]));
    assert_eq!(e.zero_rows, vec![1]);
    let m = e.features.as_array();
    assert!((m[[0, 0]] - 0.6).abs() < 1e-15 && (m[[0, 1]] - 0.8).abs() < 1e-15);
    assert_eq!(m.row(1).to_vec(), vec![0.0, 0.0]);
    assert_eq!(m.row(2).to_vec(), vec![0.0, 1.0]);
}
