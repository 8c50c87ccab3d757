#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

pub fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name).display().to_string()
}

pub fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["dualoie"];
    argv.extend_from_slice(args);
    dualoie_cli::run(argv)
}

pub fn p(path: &Path) -> String {
    path.display().to_string()
}

/// Generates a small split into `dir` and returns the file paths.
pub struct Split {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
}

pub fn gen(dir: &Path, size: usize, seed: u64) -> Split {
    let code = run(&["gen", "--seed", &seed.to_string(), "--size", &size.to_string(), "--out", &p(dir)]);
    assert_eq!(code, 0);
    Split { train: dir.join("train.jsonl"), dev: dir.join("dev.jsonl"), test: dir.join("test.jsonl") }
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// A local chat-completions endpoint that answers every request with
/// `reply` and counts requests.
pub struct MockServer {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
}

impl MockServer {
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

fn serve(stream: TcpStream, reply: &str, hits: &AtomicUsize) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    hits.fetch_add(1, Ordering::SeqCst);
    let out = serde_json::json!({ "choices": [{ "message": { "role": "assistant", "content": reply } }] }).to_string();
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{out}",
        out.len()
    )?;
    stream.flush()
}

pub fn mock_chat_server(reply: &'static str) -> MockServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let _ = serve(stream, reply, &counter);
        }
    });
    MockServer { url, hits }
}
