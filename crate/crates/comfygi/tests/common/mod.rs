//! Minimal HTTP/1.1 server for protocol tests: one thread per connection,
//! `Connection: close` on every response.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::Value;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn fixture_bytes(rel: &str) -> Vec<u8> {
    std::fs::read(fixture(rel)).unwrap()
}

pub fn fixture_json(rel: &str) -> Value {
    serde_json::from_slice(&fixture_bytes(rel)).unwrap()
}

#[derive(Debug, Clone)]
pub struct Request {
    pub method: String,
    pub path: String,
    pub query: String,
    pub body: Vec<u8>,
}

impl Request {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap()
    }

    /// Decoded value of query parameter `key`.
    pub fn param(&self, key: &str) -> Option<String> {
        self.query.split('&').find_map(|kv| {
            let (k, v) = kv.split_once('=')?;
            (k == key).then(|| percent_decode(v))
        })
    }
}

fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'+' => out.push(b' '),
            b'%' if i + 2 < bytes.len() => {
                out.push(u8::from_str_radix(&s[i + 1..i + 3], 16).unwrap());
                i += 2;
            }
            b => out.push(b),
        }
        i += 1;
    }
    String::from_utf8(out).unwrap()
}

pub struct Response {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

impl Response {
    pub fn json(value: &Value) -> Self {
        Response { status: 200, content_type: "application/json", body: value.to_string().into_bytes() }
    }

    pub fn json_status(status: u16, value: &Value) -> Self {
        Response { status, ..Response::json(value) }
    }

    pub fn bytes(content_type: &'static str, body: Vec<u8>) -> Self {
        Response { status: 200, content_type, body }
    }

    pub fn not_found() -> Self {
        Response { status: 404, content_type: "text/plain", body: b"not found".to_vec() }
    }
}

type Handler = dyn Fn(&Request) -> Response + Send + Sync;

pub struct FakeServer {
    pub url: String,
    requests: Arc<Mutex<Vec<Request>>>,
    stop: Arc<AtomicBool>,
}

impl FakeServer {
    pub fn start(handler: impl Fn(&Request) -> Response + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let handler: Arc<Handler> = Arc::new(handler);
        {
            let requests = requests.clone();
            let stop = stop.clone();
            thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let handler = handler.clone();
                    let requests = requests.clone();
                    let stop = stop.clone();
                    thread::spawn(move || serve(stream, &*handler, &requests, &stop));
                }
            });
        }
        FakeServer { url, requests, stop }
    }

    pub fn requests(&self) -> Vec<Request> {
        self.requests.lock().unwrap().clone()
    }

    /// Closes the listener; later connections are refused.
    pub fn stop(&self) {
        stop_listener(&self.url, &self.stop);
    }

    pub fn stop_handle(&self) -> (String, Arc<AtomicBool>) {
        (self.url.clone(), self.stop.clone())
    }
}

pub fn stop_listener(url: &str, stop: &AtomicBool) {
    if !stop.swap(true, Ordering::SeqCst) {
        // Wake the accept loop so it notices the flag and drops the listener.
        let _ = TcpStream::connect(url.trim_start_matches("http://"));
        thread::sleep(std::time::Duration::from_millis(20));
    }
}

fn serve(stream: TcpStream, handler: &Handler, log: &Mutex<Vec<Request>>, stop: &AtomicBool) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let target = parts.next().unwrap_or_default().to_string();
    let mut length = 0usize;
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h).unwrap_or(0) == 0 || h == "\r\n" {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    let (path, query) = target.split_once('?').map_or((target.clone(), String::new()), |(p, q)| (p.into(), q.into()));
    let request = Request { method, path, query, body };
    log.lock().unwrap().push(request.clone());
    if stop.load(Ordering::SeqCst) {
        return;
    }
    let response = handler(&request);
    let mut out = stream;
    let head = format!(
        "HTTP/1.1 {} X\r\nContent-Type: {}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        response.status,
        response.content_type,
        response.body.len()
    );
    let _ = out.write_all(head.as_bytes());
    let _ = out.write_all(&response.body);
}

/// A URL nothing listens on.
pub fn dead_url() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    url
}

/// A ComfyUI stand-in built from the recorded fixtures. `render` turns the
/// submitted workflow JSON into image bytes. Each prompt's history is empty
/// on the first poll and complete from the second on.
pub fn comfyui_server(render: impl Fn(&Value) -> Vec<u8> + Send + Sync + 'static) -> FakeServer {
    use std::collections::HashMap;
    // Submission counter, and per prompt id the rendered image and poll count.
    type State = (usize, HashMap<String, (Vec<u8>, usize)>);
    let state: Mutex<State> = Mutex::new((0, HashMap::new()));
    let submitted = fixture_json("comfyui/prompt_response.json");
    let done = fixture_json("comfyui/history_done.json");
    let recorded_id = submitted["prompt_id"].as_str().unwrap().to_string();
    FakeServer::start(move |req| {
        let mut state = state.lock().unwrap();
        match (req.method.as_str(), req.path.as_str()) {
            ("POST", "/prompt") => {
                let body = req.json();
                state.0 += 1;
                let id = format!("{recorded_id}-{}", state.0);
                state.1.insert(id.clone(), (render(&body["prompt"]), 0));
                let mut reply = submitted.clone();
                reply["prompt_id"] = Value::from(id);
                Response::json(&reply)
            }
            ("GET", p) if p.starts_with("/history/") => {
                let id = &p["/history/".len()..];
                let Some(entry) = state.1.get_mut(id) else { return Response::json(&serde_json::json!({})) };
                entry.1 += 1;
                if entry.1 == 1 {
                    return Response::json(&serde_json::json!({}));
                }
                let mut record = done[recorded_id.as_str()].clone();
                record["outputs"]["9"]["images"][0]["filename"] = Value::from(format!("{id}.png"));
                Response::json(&serde_json::json!({ id: record }))
            }
            ("GET", "/view") => {
                let name = req.param("filename").unwrap_or_default();
                match state.1.get(name.trim_end_matches(".png")) {
                    Some((image, _)) if req.param("type").as_deref() == Some("output") => {
                        Response::bytes("image/png", image.clone())
                    }
                    _ => Response::not_found(),
                }
            }
            _ => Response::not_found(),
        }
    })
}

/// A scoring sidecar stand-in. Bad base64 gets a 400 like the real one.
pub fn scorer_server(score: impl Fn(&str, &[u8]) -> f64 + Send + Sync + 'static) -> FakeServer {
    use base64::Engine;
    FakeServer::start(move |req| match (req.method.as_str(), req.path.as_str()) {
        ("GET", "/health") => Response::json(&serde_json::json!({"status": "ok", "mode": "stub"})),
        ("POST", "/score") => {
            let body = req.json();
            let prompt = body["prompt"].as_str().unwrap_or_default();
            match base64::engine::general_purpose::STANDARD.decode(body["image_b64"].as_str().unwrap_or_default()) {
                Ok(image) if !prompt.is_empty() => Response::json(&serde_json::json!({"score": score(prompt, &image)})),
                _ => Response::json_status(400, &serde_json::json!({"error": "bad request"})),
            }
        }
        _ => Response::not_found(),
    })
}
