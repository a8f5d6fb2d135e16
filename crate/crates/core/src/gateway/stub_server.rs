//! Minimal local HTTP server that answers chat-completion posts from a
//! script. Lets the real HTTP transport run without any external service.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

/// Reply chosen for the `n`th request (0-based) with the given JSON body.
pub type Responder = dyn Fn(usize, &serde_json::Value) -> StubReply + Send + Sync;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubReply {
    pub status: u16,
    pub body: String,
    /// Wait this long before answering.
    pub delay: Duration,
}

impl StubReply {
    pub fn status(status: u16) -> Self {
        StubReply {
            status,
            body: String::new(),
            delay: Duration::ZERO,
        }
    }

    /// A 200 reply carrying `text` as the assistant message.
    pub fn text(model: &str, text: &str) -> Self {
        StubReply {
            status: 200,
            body: super::wire::response_body(model, text).to_string(),
            delay: Duration::ZERO,
        }
    }

    pub fn delayed(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

struct Shared {
    responder: Box<Responder>,
    requests: AtomicUsize,
    bodies: Mutex<Vec<serde_json::Value>>,
    headers: Mutex<Vec<Vec<(String, String)>>>,
    stop: AtomicBool,
}

pub struct StubServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    accept: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(
        responder: impl Fn(usize, &serde_json::Value) -> StubReply + Send + Sync + 'static,
    ) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            responder: Box::new(responder),
            requests: AtomicUsize::new(0),
            bodies: Mutex::new(Vec::new()),
            headers: Mutex::new(Vec::new()),
            stop: AtomicBool::new(false),
        });
        let accept_shared = Arc::clone(&shared);
        let accept = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if accept_shared.stop.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(stream) = stream {
                    let s = Arc::clone(&accept_shared);
                    std::thread::spawn(move || {
                        if let Err(e) = serve(stream, &s) {
                            log::debug!("stub server connection: {e}");
                        }
                    });
                }
            }
        });
        Ok(StubServer {
            addr,
            shared,
            accept: Some(accept),
        })
    }

    /// Replies to the `n`th request with `script[n]`, repeating the last entry.
    pub fn scripted(script: Vec<StubReply>) -> std::io::Result<Self> {
        assert!(!script.is_empty(), "script needs at least one reply");
        StubServer::start(move |n, _| script[n.min(script.len() - 1)].clone())
    }

    /// Base URL suitable for `endpoint_url`.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn requests(&self) -> usize {
        self.shared.requests.load(Ordering::SeqCst)
    }

    pub fn bodies(&self) -> Vec<serde_json::Value> {
        self.shared
            .bodies
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .clone()
    }

    /// Lower-cased request headers, per request.
    pub fn headers(&self) -> Vec<Vec<(String, String)>> {
        self.shared
            .headers
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

fn serve(stream: TcpStream, shared: &Shared) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    let mut headers = Vec::new();
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            let name = name.trim().to_ascii_lowercase();
            let value = value.trim().to_string();
            if name == "content-length" {
                content_length = value.parse().unwrap_or(0);
            }
            headers.push((name, value));
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    let json: serde_json::Value = serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);

    let n = shared.requests.fetch_add(1, Ordering::SeqCst);
    shared
        .bodies
        .lock()
        .unwrap_or_else(|p| p.into_inner())
        .push(json.clone());
    shared
        .headers
        .lock()
        .unwrap_or_else(|p| p.into_inner())
        .push(headers);
    let reply = (shared.responder)(n, &json);
    std::thread::sleep(reply.delay);
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        reply.status,
        reply.body.len(),
        reply.body
    )?;
    stream.flush()
}
