use std::fmt;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::seed::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Get,
    Post,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Get => "GET",
            Method::Post => "POST",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiRequest {
    pub method: Method,
    pub path: String,
    pub body: Value,
}

impl ApiRequest {
    pub fn get(path: impl Into<String>) -> Self {
        Self { method: Method::Get, path: path.into(), body: Value::Null }
    }

    pub fn post(path: impl Into<String>, body: Value) -> Self {
        Self { method: Method::Post, path: path.into(), body }
    }

    /// Stable hash of endpoint and canonical body. Object keys serialize in
    /// sorted order, so equal requests always hash equally.
    pub fn digest(&self) -> String {
        let body = serde_json::to_string(&self.body).expect("json values serialize");
        sha256_hex(format!("{} {}\n{}", self.method, self.path, body).as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiResponse {
    pub status: u16,
    pub body: Value,
}

impl ApiResponse {
    pub fn ok(body: Value) -> Self {
        Self { status: 200, body }
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("transport i/o failure: {0}")]
    Io(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: Value },
    #[error("cassette miss: no recorded response for request digest {digest} (occurrence {index})")]
    CassetteMiss { digest: String, index: usize },
    #[error("cassette error: {0}")]
    Cassette(String),
    #[error("transport configuration: {0}")]
    Config(String),
}

impl TransportError {
    fn is_transient(&self) -> bool {
        match self {
            TransportError::Io(_) => true,
            TransportError::Status { status, .. } => is_retryable_status(*status),
            _ => false,
        }
    }
}

pub fn is_retryable_status(status: u16) -> bool {
    matches!(status, 429 | 500 | 502 | 503 | 504)
}

/// Request/response port to a text-generation service.
pub trait Transport: Send + Sync {
    fn send(&self, request: &ApiRequest) -> Result<ApiResponse, TransportError>;

    /// Offline transports (replay, mocks) skip real waits between attempts
    /// and polls.
    fn is_offline(&self) -> bool {
        false
    }
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn send(&self, request: &ApiRequest) -> Result<ApiResponse, TransportError> {
        (**self).send(request)
    }

    fn is_offline(&self) -> bool {
        (**self).is_offline()
    }
}

impl<T: Transport + ?Sized> Transport for &T {
    fn send(&self, request: &ApiRequest) -> Result<ApiResponse, TransportError> {
        (**self).send(request)
    }

    fn is_offline(&self) -> bool {
        (**self).is_offline()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 5, base_delay_ms: 500, max_delay_ms: 30_000 }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`; doubles each time, capped.
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.saturating_sub(1).min(20);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

/// Sends with exponential backoff on rate-limit and transient failures.
/// Returns the successful response and the number of retries it took.
pub fn send_with_retry(
    transport: &dyn Transport,
    request: &ApiRequest,
    policy: &RetryPolicy,
) -> Result<(ApiResponse, u32), TransportError> {
    let attempts = policy.max_attempts.max(1);
    let mut attempt = 1;
    loop {
        let result = transport.send(request).and_then(|resp| {
            if resp.is_success() {
                Ok(resp)
            } else {
                Err(TransportError::Status { status: resp.status, body: resp.body })
            }
        });
        match result {
            Ok(resp) => return Ok((resp, attempt - 1)),
            Err(e) if e.is_transient() && attempt < attempts => {
                if !transport.is_offline() {
                    thread::sleep(policy.delay(attempt));
                }
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Token bucket limiting request rate.
#[derive(Debug)]
pub struct RateLimiter {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Self {
        let capacity = f64::from(requests.max(1));
        Self {
            capacity,
            per_second: capacity / 60.0,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("rate limiter poisoned");
                let now = Instant::now();
                let refill = now.duration_since(state.1).as_secs_f64() * self.per_second;
                state.0 = (state.0 + refill).min(self.capacity);
                state.1 = now;
                if state.0 >= 1.0 {
                    state.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - state.0) / self.per_second)
            };
            thread::sleep(wait);
        }
    }
}
