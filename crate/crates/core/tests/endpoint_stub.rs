//! Endpoint backend against a loopback stub server with scripted delays.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use fmbench_core::backends::{Backend, BackendError, EndpointBackend, EndpointBackendConfig, SyntheticPrompts};
use fmbench_core::SweepPoint;

#[derive(Clone)]
struct Script {
    status: u16,
    first_delay: Duration,
    complete_delay: Duration,
    /// Tokens to stream; `None` streams `max_tokens`.
    tokens: Option<u32>,
}

struct Stub {
    base_url: String,
    requests: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<serde_json::Value>>>,
    auth: Arc<Mutex<Vec<Option<String>>>>,
}

fn read_request(stream: &mut TcpStream) -> (Option<String>, serde_json::Value) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut content_length = 0usize;
    let mut auth = None;
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
            auth = Some(line["authorization:".len()..].trim().to_string());
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body).unwrap();
    (auth, serde_json::from_slice(&body).unwrap())
}

fn serve(script: Script) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base_url = format!("http://{}", listener.local_addr().unwrap());
    let requests = Arc::new(AtomicUsize::new(0));
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let auth = Arc::new(Mutex::new(Vec::new()));
    let (r, b, a) = (requests.clone(), bodies.clone(), auth.clone());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let script = script.clone();
            let (r, b, a) = (r.clone(), b.clone(), a.clone());
            thread::spawn(move || {
                let (auth, body) = read_request(&mut stream);
                r.fetch_add(1, Ordering::SeqCst);
                a.lock().unwrap().push(auth);
                let max_tokens = body["max_tokens"].as_u64().unwrap() as u32;
                b.lock().unwrap().push(body);
                if script.status != 200 {
                    let msg = "overloaded";
                    let _ = write!(
                        stream,
                        "HTTP/1.1 {} Error\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{msg}",
                        script.status,
                        msg.len()
                    );
                    return;
                }
                let _ = write!(
                    stream,
                    "HTTP/1.1 200 OK\r\nContent-Type: text/event-stream\r\nConnection: close\r\n\r\n"
                );
                let _ = stream.flush();
                let n = script.tokens.unwrap_or(max_tokens);
                thread::sleep(script.first_delay);
                for k in 0..n {
                    if k == 1 {
                        thread::sleep(script.complete_delay - script.first_delay);
                    }
                    let finish = if k + 1 == n { "\"length\"" } else { "null" };
                    let _ = write!(
                        stream,
                        "data: {{\"choices\":[{{\"index\":0,\"text\":\"t{k}\",\"finish_reason\":{finish}}}]}}\n\n"
                    );
                    let _ = stream.flush();
                }
                let _ = write!(stream, "data: [DONE]\n\n");
                let _ = stream.flush();
            });
        }
    });
    Stub { base_url, requests, bodies, auth }
}

fn backend(base_url: &str, api_key: Option<&str>) -> EndpointBackend {
    let cfg = EndpointBackendConfig {
        base_url: base_url.to_string(),
        model_name: "stub-model".to_string(),
        request_timeout: 5.0,
        api_key: api_key.map(str::to_string),
    };
    EndpointBackend::new(cfg, Box::new(SyntheticPrompts::new(32000, 1))).unwrap()
}

const SCHED_TOL_MS: f64 = 40.0;

#[test]
fn scripted_delays_are_measured() {
    let stub = serve(Script {
        status: 200,
        first_delay: Duration::from_millis(50),
        complete_delay: Duration::from_millis(150),
        tokens: None,
    });
    let mut be = backend(&stub.base_url, None);
    let t = be.call(SweepPoint::new(16, 4, 1).unwrap()).unwrap();
    assert!((t.ttft_ms - 50.0).abs() < SCHED_TOL_MS, "ttft {}", t.ttft_ms);
    assert!((t.total_ms - 150.0).abs() < SCHED_TOL_MS, "total {}", t.total_ms);
    assert!(t.ttft_ms >= 50.0 && t.total_ms >= 150.0);
    assert!(!t.token_mismatch);
    assert_eq!(stub.requests.load(Ordering::SeqCst), 1);

    let body = &stub.bodies.lock().unwrap()[0];
    assert_eq!(body["model"], "stub-model");
    assert_eq!(body["max_tokens"], 4);
    assert_eq!(body["temperature"], 0);
    assert_eq!(body["stream"], true);
    assert_eq!(body["prompt"].as_array().unwrap().len(), 16);
}

#[test]
fn batch_fans_out_concurrently() {
    let stub = serve(Script {
        status: 200,
        first_delay: Duration::from_millis(50),
        complete_delay: Duration::from_millis(150),
        tokens: None,
    });
    let mut be = backend(&stub.base_url, Some("secret"));
    let t = be.call(SweepPoint::new(8, 3, 6).unwrap()).unwrap();
    assert_eq!(stub.requests.load(Ordering::SeqCst), 6);
    // Concurrent: six requests finish in about one request's time.
    assert!(t.total_ms < 150.0 + 3.0 * SCHED_TOL_MS, "total {}", t.total_ms);
    assert!(stub.auth.lock().unwrap().iter().all(|a| a.as_deref() == Some("Bearer secret")));
}

#[test]
fn token_count_mismatch_is_flagged() {
    let stub = serve(Script {
        status: 200,
        first_delay: Duration::from_millis(5),
        complete_delay: Duration::from_millis(10),
        tokens: Some(2),
    });
    let mut be = backend(&stub.base_url, None);
    let t = be.call(SweepPoint::new(4, 5, 1).unwrap()).unwrap();
    assert!(t.token_mismatch);
}

#[test]
fn http_error_carries_index_and_status() {
    let stub = serve(Script {
        status: 503,
        first_delay: Duration::ZERO,
        complete_delay: Duration::ZERO,
        tokens: None,
    });
    let mut be = backend(&stub.base_url, None);
    match be.call(SweepPoint::new(4, 2, 1).unwrap()) {
        Err(BackendError::Http { index, status, .. }) => assert_eq!((index, status), (0, 503)),
        other => panic!("expected HTTP error, got {other:?}"),
    }
}

#[test]
fn unreachable_url_fails() {
    // Bind then drop to get a port nobody listens on.
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut be = backend(&format!("http://127.0.0.1:{port}"), None);
    let err = be.call(SweepPoint::new(4, 2, 1).unwrap()).unwrap_err();
    assert!(matches!(err, BackendError::Transport { index: 0, .. }), "{err}");
}

#[test]
fn runner_over_endpoint_emits_measurement() {
    let stub = serve(Script {
        status: 200,
        first_delay: Duration::from_millis(2),
        complete_delay: Duration::from_millis(6),
        tokens: None,
    });
    let mut be = backend(&stub.base_url, None);
    let cfg = fmbench_core::runner::RunnerConfig { min_iterations: 3, variability_target: 0.9, ..Default::default() };
    let m = fmbench_core::runner::run_point(&mut be, SweepPoint::new(4, 3, 2).unwrap(), &cfg).unwrap();
    assert!(m.iterations >= 3);
    assert!(m.itl_ms.unwrap() > 0.0);
}
