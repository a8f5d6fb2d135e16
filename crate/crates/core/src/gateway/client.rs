use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use super::cache::{CacheKey, CachedResponse, ResponseCache};
use super::transport::{Transport, TransportFailure, WireCall};
use super::{wire, Backend, BackendConfig, BackendError, ChatRequest, ChatResponse};

const MAX_BACKOFF: Duration = Duration::from_secs(30);

type Outcome = Result<ChatResponse, BackendError>;

#[derive(Default)]
struct InFlight {
    outcome: Mutex<Option<Outcome>>,
    done: Condvar,
}

/// Chat-completion client over a [`Transport`].
///
/// Identical concurrent requests share one wire call; completed responses are
/// stored in the optional on-disk cache.
pub struct Gateway<T> {
    config: BackendConfig,
    transport: T,
    cache: Option<ResponseCache>,
    inflight: Mutex<HashMap<CacheKey, Arc<InFlight>>>,
}

enum Attempt {
    Done(ChatResponse),
    Transient(BackendError),
    Fatal(BackendError),
}

impl<T: Transport> Gateway<T> {
    pub fn new(
        config: BackendConfig,
        transport: T,
        cache: Option<ResponseCache>,
    ) -> Result<Self, BackendError> {
        config.validate()?;
        Ok(Gateway {
            config,
            transport,
            cache,
            inflight: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_ref()
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn key(&self, request: &ChatRequest) -> CacheKey {
        CacheKey::compute(&self.config, request)
    }

    fn cached(&self, key: &CacheKey) -> Result<Option<ChatResponse>, BackendError> {
        match &self.cache {
            Some(cache) => Ok(cache.get(key)?.map(CachedResponse::into_response)),
            None => Ok(None),
        }
    }

    fn api_key(&self) -> Result<Option<String>, BackendError> {
        if self.config.api_key_env.is_empty() {
            return Ok(None);
        }
        std::env::var(&self.config.api_key_env)
            .map(Some)
            .map_err(|_| BackendError::AuthMissing(self.config.api_key_env.clone()))
    }

    fn attempt(&self, call: &WireCall) -> Attempt {
        let started = Instant::now();
        let reply = match self.transport.post(call) {
            Ok(reply) => reply,
            Err(TransportFailure::Timeout) => return Attempt::Transient(BackendError::Timeout),
            Err(TransportFailure::Connect(msg)) => {
                return Attempt::Transient(BackendError::TransportError(msg))
            }
        };
        match reply.status {
            200..=299 => match wire::parse_response_body(&reply.body) {
                Ok((text, usage)) => Attempt::Done(ChatResponse {
                    text,
                    usage,
                    latency_ms: started.elapsed().as_millis() as u64,
                    backend_id: self.backend_id(),
                    retry_count: 0,
                    from_cache: false,
                }),
                Err(e) => Attempt::Fatal(e),
            },
            429 => Attempt::Transient(BackendError::RateLimited { attempts: 0 }),
            status @ (408 | 500 | 502 | 503 | 504) => Attempt::Transient(BackendError::HttpError {
                status,
                body: reply.body,
            }),
            status => Attempt::Fatal(BackendError::HttpError {
                status,
                body: reply.body,
            }),
        }
    }

    fn backoff(&self, retry: u32) -> Duration {
        let base = Duration::from_millis(self.config.retry_base_delay_ms);
        base.saturating_mul(1u32 << retry.min(16)).min(MAX_BACKOFF)
    }

    fn call_with_retry(&self, request: &ChatRequest) -> Outcome {
        let call = WireCall {
            url: self.config.chat_url(),
            api_key: self.api_key()?,
            body: wire::request_body(&self.config, request),
            timeout: Duration::from_millis(self.config.timeout_ms),
        };
        let mut retries = 0;
        loop {
            match self.attempt(&call) {
                Attempt::Done(mut resp) => {
                    resp.retry_count = retries;
                    return Ok(resp);
                }
                Attempt::Fatal(e) => return Err(e),
                Attempt::Transient(e) => {
                    if retries >= self.config.max_retries {
                        return Err(match e {
                            BackendError::RateLimited { .. } => BackendError::RateLimited {
                                attempts: retries + 1,
                            },
                            other => other,
                        });
                    }
                    log::warn!("transient backend failure ({e}); retry {}", retries + 1);
                    std::thread::sleep(self.backoff(retries));
                    retries += 1;
                }
            }
        }
    }

    fn fetch_and_store(&self, key: &CacheKey, request: &ChatRequest) -> Outcome {
        if let Some(hit) = self.cached(key)? {
            return Ok(hit);
        }
        let resp = self.call_with_retry(request)?;
        if let Some(cache) = &self.cache {
            cache.put(
                key,
                &CachedResponse {
                    model: self.config.model_name.clone(),
                    backend_id: resp.backend_id.clone(),
                    text: resp.text.clone(),
                    usage: resp.usage,
                    latency_ms: resp.latency_ms,
                },
            )?;
        }
        Ok(resp)
    }
}

impl<T: Transport> Backend for Gateway<T> {
    fn backend_id(&self) -> String {
        format!("http:{}", self.config.model_name)
    }

    fn complete(&self, request: &ChatRequest) -> Outcome {
        let key = self.key(request);
        if let Some(hit) = self.cached(&key)? {
            return Ok(hit);
        }
        let (slot, leader) = {
            let mut map = self.inflight.lock().unwrap_or_else(|p| p.into_inner());
            match map.get(&key) {
                Some(slot) => (Arc::clone(slot), false),
                None => {
                    let slot = Arc::new(InFlight::default());
                    map.insert(key.clone(), Arc::clone(&slot));
                    (slot, true)
                }
            }
        };
        if leader {
            let outcome = self.fetch_and_store(&key, request);
            *slot.outcome.lock().unwrap_or_else(|p| p.into_inner()) = Some(outcome.clone());
            self.inflight
                .lock()
                .unwrap_or_else(|p| p.into_inner())
                .remove(&key);
            slot.done.notify_all();
            outcome
        } else {
            let mut guard = slot.outcome.lock().unwrap_or_else(|p| p.into_inner());
            while guard.is_none() {
                guard = slot.done.wait(guard).unwrap_or_else(|p| p.into_inner());
            }
            guard.clone().expect("outcome present")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::transport::WireReply;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn fast_config() -> BackendConfig {
        BackendConfig {
            model_name: "m".into(),
            retry_base_delay_ms: 1,
            ..Default::default()
        }
    }

    fn request(text: &str) -> ChatRequest {
        ChatRequest {
            user_text: text.into(),
            ..Default::default()
        }
    }

    #[test]
    fn non_retryable_status_fails_immediately() {
        let calls = AtomicUsize::new(0);
        let gw = Gateway::new(
            fast_config(),
            |_: &WireCall| {
                calls.fetch_add(1, Ordering::SeqCst);
                Ok(WireReply::status(400))
            },
            None,
        )
        .unwrap();
        assert!(matches!(
            gw.complete(&request("x")),
            Err(BackendError::HttpError { status: 400, .. })
        ));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn exhausted_rate_limit() {
        let calls = AtomicUsize::new(0);
        let gw = Gateway::new(
            BackendConfig {
                max_retries: 2,
                ..fast_config()
            },
            |_: &WireCall| {
                calls.fetch_add(1, Ordering::SeqCst);
                Ok(WireReply::status(429))
            },
            None,
        )
        .unwrap();
        assert_eq!(
            gw.complete(&request("x")),
            Err(BackendError::RateLimited { attempts: 3 })
        );
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn timeout_then_success() {
        let calls = AtomicUsize::new(0);
        let gw = Gateway::new(
            fast_config(),
            |_: &WireCall| {
                if calls.fetch_add(1, Ordering::SeqCst) == 0 {
                    Err(TransportFailure::Timeout)
                } else {
                    Ok(WireReply::ok(wire::response_body("m", "fine")))
                }
            },
            None,
        )
        .unwrap();
        let resp = gw.complete(&request("x")).unwrap();
        assert_eq!(resp.text, "fine");
        assert_eq!(resp.retry_count, 1);
    }

    #[test]
    fn missing_api_key() {
        let gw = Gateway::new(
            BackendConfig {
                api_key_env: "SAP_TEST_KEY_THAT_IS_NOT_SET".into(),
                ..fast_config()
            },
            |_: &WireCall| Ok(WireReply::ok(wire::response_body("m", "x"))),
            None,
        )
        .unwrap();
        assert_eq!(
            gw.complete(&request("x")),
            Err(BackendError::AuthMissing(
                "SAP_TEST_KEY_THAT_IS_NOT_SET".into()
            ))
        );
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let gw = Gateway::new(
            BackendConfig {
                retry_base_delay_ms: 100,
                ..fast_config()
            },
            |_: &WireCall| Ok(WireReply::status(500)),
            None,
        )
        .unwrap();
        assert_eq!(gw.backoff(0), Duration::from_millis(100));
        assert_eq!(gw.backoff(1), Duration::from_millis(200));
        assert_eq!(gw.backoff(3), Duration::from_millis(800));
        assert_eq!(gw.backoff(20), MAX_BACKOFF);
    }
}
