//! Exercises the real HTTP transport against a scripted local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use veritrace_core::infer::{collect, EndpointConfig, InferError, Outcome};
use veritrace_core::trace::{SftMode, SftRecord, TraceMeta};

#[derive(Default)]
struct Stats {
    requests: AtomicUsize,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    auth: Mutex<Vec<String>>,
}

/// Serves the scripted status codes first, then echoes the prompt.
fn serve(script: Vec<u16>, delay: Duration) -> (String, Arc<Stats>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let stats = Arc::new(Stats::default());
    let script = Arc::new(Mutex::new(script.into_iter()));
    let s = stats.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            let (s, script) = (s.clone(), script.clone());
            thread::spawn(move || handle(stream, &s, &script, delay));
        }
    });
    (url, stats)
}

fn handle(stream: TcpStream, stats: &Stats, script: &Mutex<std::vec::IntoIter<u16>>, delay: Duration) {
    let now = stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    stats.peak.fetch_max(now, Ordering::SeqCst);
    stats.requests.fetch_add(1, Ordering::SeqCst);
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut content_length = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        let lower = line.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            content_length = v.trim().parse().unwrap();
        }
        if lower.starts_with("authorization:") {
            stats.auth.lock().unwrap().push(line.to_string());
        }
    }
    let mut body = vec![0; content_length];
    reader.read_exact(&mut body).unwrap();
    thread::sleep(delay);
    let request: serde_json::Value = serde_json::from_slice(&body).unwrap();

    let status = script.lock().unwrap().next().unwrap_or(200);
    let (reason, payload, extra) = match status {
        200 => {
            let prompt = request["messages"][0]["content"].as_str().unwrap();
            let reply = serde_json::json!({
                "id": "cmpl-1",
                "choices": [{"index": 0, "message": {"role": "assistant", "content": format!("echo:{prompt}")}, "finish_reason": "stop"}],
                "usage": {"prompt_tokens": 3, "completion_tokens": 2}
            });
            ("OK", reply.to_string(), "")
        }
        429 => ("Too Many Requests", "{\"error\":\"slow down\"}".to_string(), "Retry-After: 0\r\n"),
        _ => ("Error", "{}".to_string(), ""),
    };
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\n{extra}Connection: close\r\n\r\n{payload}",
        payload.len()
    )
    .unwrap();
    stream.flush().unwrap();
    stats.in_flight.fetch_sub(1, Ordering::SeqCst);
}

fn records(n: usize) -> Vec<SftRecord> {
    (0..n)
        .map(|i| SftRecord {
            id: format!("r{i}"),
            mode: SftMode::Vanilla,
            prompt: format!("prompt {i}"),
            completion: String::new(),
            meta: TraceMeta { category: None, support: None },
        })
        .collect()
}

fn config(url: &str) -> EndpointConfig {
    EndpointConfig { backoff_base_ms: 5, api_key: Some("sk-test".into()), ..EndpointConfig::new(url, "student") }
}

#[test]
fn rate_limited_twice_then_served() {
    let (url, stats) = serve(vec![429, 429], Duration::ZERO);
    let cache = tempfile::tempdir().unwrap();
    let cfg = EndpointConfig { max_retries: 3, ..config(&url) };
    let report = collect(&records(1), &cfg, cache.path()).unwrap();
    assert_eq!(report.items[0].attempts, 3);
    assert_eq!(report.items[0].outcome, Outcome::Completed { completion: "echo:prompt 0".into(), cached: false });
    assert_eq!(stats.requests.load(Ordering::SeqCst), 3);
    assert!(stats.auth.lock().unwrap().iter().all(|h| h.ends_with("Bearer sk-test")));
}

#[test]
fn warm_cache_rerun_is_identical_and_offline() {
    let (url, stats) = serve(vec![], Duration::ZERO);
    let cache = tempfile::tempdir().unwrap();
    let cfg = config(&url);
    let first = collect(&records(3), &cfg, cache.path()).unwrap();
    assert_eq!(stats.requests.load(Ordering::SeqCst), 3);
    let second = collect(&records(3), &cfg, cache.path()).unwrap();
    assert_eq!(second.network_calls, 0);
    assert_eq!(stats.requests.load(Ordering::SeqCst), 3);
    assert_eq!(first.completions(), second.completions());
}

#[test]
fn concurrency_never_exceeds_limit() {
    let (url, stats) = serve(vec![], Duration::from_millis(20));
    let cache = tempfile::tempdir().unwrap();
    let cfg = EndpointConfig { max_in_flight: 3, ..config(&url) };
    let report = collect(&records(15), &cfg, cache.path()).unwrap();
    assert_eq!(report.completions().len(), 15);
    assert!(stats.peak.load(Ordering::SeqCst) <= 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, stats) = serve(vec![400], Duration::ZERO);
    let cache = tempfile::tempdir().unwrap();
    let report = collect(&records(1), &config(&url), cache.path()).unwrap();
    assert_eq!(stats.requests.load(Ordering::SeqCst), 1);
    assert!(matches!(report.items[0].outcome, Outcome::Failed { .. }));
}

#[test]
fn closed_port_aborts_with_uncollected_ids() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cache = tempfile::tempdir().unwrap();
    let cfg = EndpointConfig { max_retries: 1, max_in_flight: 1, ..config(&format!("http://127.0.0.1:{port}")) };
    let err = collect(&records(2), &cfg, cache.path()).unwrap_err();
    assert_eq!(err, InferError::Unreachable { uncollected: vec!["r0".into(), "r1".into()] });
}
