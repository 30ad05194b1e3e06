//! Shared helpers for integration tests: fixture paths and an in-process stub
//! of the `/v1/generate` model server.

#![allow(dead_code)]

pub mod oracles;

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use serde_json::{json, Value};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StubMode {
    Normal,
    /// Answers 200 with a non-JSON body.
    Malformed,
    /// Answers 503 to everything.
    Unavailable,
    /// Answers 503 to the first `n` requests, then behaves normally.
    FlakyFor(usize),
}

/// Canned responses keyed by (task, entity_name, slot_key).
pub type StubTable = HashMap<(String, String, Option<String>), String>;

pub struct StubServer {
    pub address: String,
    pub hits: Arc<AtomicUsize>,
}

impl StubServer {
    pub fn start(table: StubTable, mode: StubMode) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub");
        let address = listener.local_addr().unwrap().to_string();
        let hits = Arc::new(AtomicUsize::new(0));
        let table = Arc::new(table);
        let counter = hits.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let table = table.clone();
                let n = counter.fetch_add(1, Ordering::SeqCst);
                thread::spawn(move || {
                    let _ = handle(stream, &table, mode, n);
                });
            }
        });
        Self { address, hits }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

/// An address nothing listens on.
pub fn dead_address() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    drop(listener);
    addr
}

fn handle(stream: TcpStream, table: &StubTable, mode: StubMode, n: usize) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    let (status, payload) = respond(&request_line, &body, table, mode, n);
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        _ => "Service Unavailable",
    };
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )?;
    stream.flush()
}

fn respond(
    request_line: &str,
    body: &[u8],
    table: &StubTable,
    mode: StubMode,
    n: usize,
) -> (u16, String) {
    if !request_line.starts_with("POST /v1/generate ") {
        return (404, json!({"error": "not found"}).to_string());
    }
    match mode {
        StubMode::Unavailable => return (503, json!({"error": "model not loaded"}).to_string()),
        StubMode::FlakyFor(k) if n < k => return (503, json!({"error": "warming up"}).to_string()),
        StubMode::Malformed => return (200, "this is not json".to_string()),
        _ => {}
    }
    let Ok(v) = serde_json::from_slice::<Value>(body) else {
        return (400, json!({"error": "body is not json"}).to_string());
    };
    match validate(&v) {
        Ok((task, entity, slot_key)) => {
            let output = table
                .get(&(task, entity, slot_key))
                .cloned()
                .unwrap_or_default();
            (
                200,
                json!({"output": output, "backend_id": "stub"}).to_string(),
            )
        }
        Err(msg) => (400, json!({ "error": msg }).to_string()),
    }
}

/// Wire-protocol schema check.
pub fn validate(v: &Value) -> Result<(String, String, Option<String>), String> {
    let obj = v.as_object().ok_or("body must be an object")?;
    let task = obj
        .get("task")
        .and_then(Value::as_str)
        .filter(|t| *t == "template" || *t == "slot")
        .ok_or("task must be \"template\" or \"slot\"")?;
    let entity = obj
        .get("entity_name")
        .and_then(Value::as_str)
        .ok_or("entity_name must be a string")?;
    let docs = obj
        .get("documents")
        .and_then(Value::as_array)
        .ok_or("documents must be an array")?;
    if !docs.iter().all(Value::is_string) {
        return Err("documents must hold strings".into());
    }
    obj.get("input")
        .and_then(Value::as_str)
        .ok_or("input must be a string")?;
    let slot_key = match obj.get("slot_key") {
        Some(Value::String(s)) => Some(s.clone()),
        Some(Value::Null) | None => None,
        Some(_) => return Err("slot_key must be a string or null".into()),
    };
    if task == "slot" && slot_key.is_none() {
        return Err("slot task requires slot_key".into());
    }
    Ok((task.to_string(), entity.to_string(), slot_key))
}
