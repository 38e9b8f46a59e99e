use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompt::{render_prompt, to_upload_jsonl, PromptCompletion, DEFAULT_SEPARATOR};
use super::transport::{send_with_retry, ApiRequest, RetryPolicy, Transport};
use super::{cost::estimate_tokens, GeneratorError};
use crate::corpus::ClassSchema;

pub const DEFAULT_ENGINE: &str = "curie";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FineTuneConfig {
    pub engine: String,
    pub epochs: u32,
    pub poll_interval_ms: u64,
    pub max_polls: u32,
    pub retry: RetryPolicy,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        Self {
            engine: DEFAULT_ENGINE.to_string(),
            epochs: 4,
            poll_interval_ms: 10_000,
            max_polls: 720,
            retry: RetryPolicy::default(),
        }
    }
}

impl FineTuneConfig {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        if self.epochs == 0 {
            return Err(GeneratorError::InvalidParams("epochs must be at least 1".into()));
        }
        if self.engine.trim().is_empty() {
            return Err(GeneratorError::InvalidParams("engine name is empty".into()));
        }
        Ok(())
    }
}

/// A completed fine-tune job.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineTuneHandle {
    pub model: String,
    pub job_id: String,
    pub file_id: String,
    pub retries: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub stop: Vec<String>,
    pub samples_per_request: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 0.8,
            max_tokens: 64,
            stop: vec![DEFAULT_SEPARATOR.to_string()],
            samples_per_request: 16,
        }
    }
}

impl GenerationParams {
    /// Defaults with `max_tokens` set to the 95th-percentile (nearest rank)
    /// completion length of the fine-tune set.
    pub fn scaled_to(records: &[PromptCompletion]) -> Self {
        let mut lengths: Vec<u64> = records.iter().map(|r| estimate_tokens(&r.completion)).collect();
        lengths.sort_unstable();
        let mut params = Self::default();
        if !lengths.is_empty() {
            let rank = (0.95 * lengths.len() as f64).ceil() as usize;
            params.max_tokens = lengths[rank.clamp(1, lengths.len()) - 1].max(1) as u32;
        }
        params
    }

    pub fn validate(&self, separator: &str) -> Result<(), GeneratorError> {
        let bad = |m: &str| Err(GeneratorError::InvalidParams(m.to_string()));
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be a finite value >= 0");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive");
        }
        if self.samples_per_request == 0 {
            return bad("samples_per_request must be positive");
        }
        if !self.stop.iter().any(|s| s == separator) {
            return bad("stop sequences must include the record separator");
        }
        Ok(())
    }
}

fn str_field<'a>(body: &'a Value, field: &str) -> Result<&'a str, GeneratorError> {
    body.get(field)
        .and_then(Value::as_str)
        .ok_or_else(|| GeneratorError::BadResponse(format!("missing string field `{field}` in {body}")))
}

/// Uploads the records, starts a fine-tune job and polls it to completion.
pub fn submit_finetune(
    transport: &dyn Transport,
    records: &[PromptCompletion],
    config: &FineTuneConfig,
) -> Result<FineTuneHandle, GeneratorError> {
    if records.is_empty() {
        return Err(GeneratorError::EmptyFineTuneSet);
    }
    config.validate()?;
    let mut retries = 0;

    let upload = ApiRequest::post(
        "/v1/files",
        json!({
            "purpose": "fine-tune",
            "filename": "augbench-finetune.jsonl",
            "content": to_upload_jsonl(records),
        }),
    );
    let (resp, r) = send_with_retry(transport, &upload, &config.retry)?;
    retries += r;
    let file_id = str_field(&resp.body, "id")?.to_string();

    let create = ApiRequest::post(
        "/v1/fine-tunes",
        json!({"training_file": file_id, "model": config.engine, "n_epochs": config.epochs}),
    );
    let (resp, r) = send_with_retry(transport, &create, &config.retry)?;
    retries += r;
    let job_id = str_field(&resp.body, "id")?.to_string();

    let poll = ApiRequest::get(format!("/v1/fine-tunes/{job_id}"));
    for n in 0..config.max_polls.max(1) {
        if n > 0 && !transport.is_offline() {
            thread::sleep(Duration::from_millis(config.poll_interval_ms));
        }
        let (resp, r) = send_with_retry(transport, &poll, &config.retry)?;
        retries += r;
        match str_field(&resp.body, "status")? {
            "succeeded" => {
                let model = str_field(&resp.body, "fine_tuned_model")?.to_string();
                return Ok(FineTuneHandle { model, job_id, file_id, retries });
            }
            status @ ("failed" | "cancelled") => {
                return Err(GeneratorError::JobFailed { job: job_id, status: status.to_string() })
            }
            _ => {}
        }
    }
    Err(GeneratorError::PollTimeout { job: job_id, polls: config.max_polls })
}

/// Raw completions from a generation batch plus the number of retries spent.
#[derive(Debug, Clone, PartialEq)]
pub struct Completions {
    pub texts: Vec<String>,
    pub retries: u32,
}

/// Samples exactly `n` raw completions for `class` from a fine-tuned model.
pub fn generate(
    transport: &dyn Transport,
    model: &str,
    schema: &ClassSchema,
    class: &str,
    n: usize,
    params: &GenerationParams,
    retry: &RetryPolicy,
) -> Result<Completions, GeneratorError> {
    if n == 0 {
        return Err(GeneratorError::InvalidParams("n must be at least 1".into()));
    }
    let prompt = render_prompt(schema, class)?;
    let mut texts = Vec::with_capacity(n);
    let mut retries = 0;
    while texts.len() < n {
        let batch = (n - texts.len()).min(params.samples_per_request.max(1) as usize);
        let request = ApiRequest::post(
            "/v1/completions",
            json!({
                "model": model,
                "prompt": prompt,
                "temperature": params.temperature,
                "max_tokens": params.max_tokens,
                "stop": params.stop,
                "n": batch,
            }),
        );
        let (resp, r) = send_with_retry(transport, &request, retry)?;
        retries += r;
        let choices = resp
            .body
            .get("choices")
            .and_then(Value::as_array)
            .ok_or_else(|| GeneratorError::BadResponse(format!("no `choices` array in {}", resp.body)))?;
        if choices.is_empty() {
            return Err(GeneratorError::BadResponse("endpoint returned zero choices".into()));
        }
        for c in choices.iter().take(batch) {
            texts.push(str_field(c, "text")?.to_string());
        }
    }
    Ok(Completions { texts, retries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(completion: &str) -> PromptCompletion {
        PromptCompletion { prompt: "p ->".into(), completion: completion.into(), class: "c".into(), source_id: None }
    }

    #[test]
    fn max_tokens_tracks_p95() {
        let records: Vec<_> = (1..=20).map(|i| rec(&"x".repeat(4 * i))).collect();
        assert_eq!(GenerationParams::scaled_to(&records).max_tokens, 19);
        assert_eq!(GenerationParams::scaled_to(&[]).max_tokens, 64);
    }

    #[test]
    fn params_validation() {
        let p = GenerationParams::default();
        assert!(p.validate(DEFAULT_SEPARATOR).is_ok());
        assert!(p.validate("@@").is_err());
        assert!(GenerationParams { temperature: -1.0, ..p.clone() }.validate(DEFAULT_SEPARATOR).is_err());
        assert!(GenerationParams { samples_per_request: 0, ..p }.validate(DEFAULT_SEPARATOR).is_err());
    }
}
