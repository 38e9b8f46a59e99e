use std::time::Duration;

use serde_json::Value;

use super::transport::{ApiRequest, ApiResponse, Method, RateLimiter, Transport, TransportError};

pub const ENV_API_BASE: &str = "AUGBENCH_API_BASE";
pub const ENV_API_KEY: &str = "AUGBENCH_API_KEY";
pub const ENV_ENGINE: &str = "AUGBENCH_ENGINE";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub requests_per_minute: u32,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            requests_per_minute: 60,
        }
    }

    /// Reads the endpoint and key from `AUGBENCH_API_BASE` / `AUGBENCH_API_KEY`.
    pub fn from_env() -> Result<Self, TransportError> {
        let base = std::env::var(ENV_API_BASE)
            .map_err(|_| TransportError::Config(format!("{ENV_API_BASE} is not set")))?;
        let mut config = Self::new(base);
        config.api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        Ok(config)
    }
}

/// Live transport over blocking HTTP.
pub struct HttpTransport {
    config: HttpConfig,
    agent: ureq::Agent,
    limiter: RateLimiter,
}

impl HttpTransport {
    pub fn new(config: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        let limiter = RateLimiter::per_minute(config.requests_per_minute);
        Self { config, agent, limiter }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.base_url.trim_end_matches('/'), path)
    }
}

const BOUNDARY: &str = "augbench-form-boundary-7f3a9c";

/// File uploads travel as JSON internally (so cassettes stay readable) and
/// as multipart on the wire.
fn multipart_upload(body: &Value) -> Option<Vec<u8>> {
    let content = body.get("content")?.as_str()?;
    let purpose = body.get("purpose").and_then(Value::as_str).unwrap_or("fine-tune");
    let filename = body.get("filename").and_then(Value::as_str).unwrap_or("data.jsonl");
    let mut out = String::new();
    out.push_str(&format!(
        "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"purpose\"\r\n\r\n{purpose}\r\n"
    ));
    out.push_str(&format!(
        "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{filename}\"\r\n\
         Content-Type: application/jsonl\r\n\r\n{content}\r\n--{BOUNDARY}--\r\n"
    ));
    Some(out.into_bytes())
}

impl Transport for HttpTransport {
    fn send(&self, request: &ApiRequest) -> Result<ApiResponse, TransportError> {
        self.limiter.acquire();
        let url = self.url(&request.path);
        let auth = self.config.api_key.as_ref().map(|k| format!("Bearer {k}"));
        let io = |e: ureq::Error| TransportError::Io(e.to_string());
        let mut response = match request.method {
            Method::Get => {
                let mut req = self.agent.get(&url);
                if let Some(a) = &auth {
                    req = req.header("Authorization", a);
                }
                req.call().map_err(io)?
            }
            Method::Post => {
                let mut req = self.agent.post(&url);
                if let Some(a) = &auth {
                    req = req.header("Authorization", a);
                }
                match multipart_upload(&request.body).filter(|_| request.path.ends_with("/files")) {
                    Some(form) => req
                        .header("Content-Type", format!("multipart/form-data; boundary={BOUNDARY}"))
                        .send(&form[..])
                        .map_err(io)?,
                    None => req.send_json(&request.body).map_err(io)?,
                }
            }
        };
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(io)?;
        let body = serde_json::from_str(&text).unwrap_or(Value::String(text));
        Ok(ApiResponse { status, body })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn multipart_wraps_content() {
        let form = multipart_upload(&json!({"purpose": "fine-tune", "filename": "a.jsonl", "content": "{}\n"})).unwrap();
        let text = String::from_utf8(form).unwrap();
        assert!(text.contains("name=\"purpose\"\r\n\r\nfine-tune"));
        assert!(text.contains("filename=\"a.jsonl\""));
        assert!(text.ends_with(&format!("--{BOUNDARY}--\r\n")));
        assert!(multipart_upload(&json!({"model": "x"})).is_none());
    }
}
