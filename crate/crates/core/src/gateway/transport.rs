use std::time::Duration;

/// One POST of a chat-completion body.
#[derive(Debug, Clone)]
pub struct WireCall {
    pub url: String,
    pub api_key: Option<String>,
    pub body: serde_json::Value,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireReply {
    pub status: u16,
    pub body: String,
}

impl WireReply {
    pub fn ok(body: impl Into<String>) -> Self {
        WireReply {
            status: 200,
            body: body.into(),
        }
    }

    pub fn status(status: u16) -> Self {
        WireReply {
            status,
            body: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportFailure {
    Timeout,
    Connect(String),
}

/// Sends a request body and returns the raw HTTP reply.
pub trait Transport: Send + Sync {
    fn post(&self, call: &WireCall) -> Result<WireReply, TransportFailure>;
}

impl<F> Transport for F
where
    F: Fn(&WireCall) -> Result<WireReply, TransportFailure> + Send + Sync,
{
    fn post(&self, call: &WireCall) -> Result<WireReply, TransportFailure> {
        self(call)
    }
}

/// Blocking HTTP transport.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Result<Self, TransportFailure> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| TransportFailure::Connect(e.to_string()))?;
        Ok(HttpTransport { client })
    }
}

impl Transport for HttpTransport {
    fn post(&self, call: &WireCall) -> Result<WireReply, TransportFailure> {
        let body = serde_json::to_vec(&call.body).expect("json value serializes");
        let mut req = self
            .client
            .post(&call.url)
            .timeout(call.timeout)
            .header("content-type", "application/json")
            .body(body);
        if let Some(key) = &call.api_key {
            req = req.bearer_auth(key);
        }
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                TransportFailure::Timeout
            } else {
                TransportFailure::Connect(e.to_string())
            }
        };
        let resp = req.send().map_err(classify)?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(classify)?;
        Ok(WireReply { status, body })
    }
}
