use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Mutex;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::{json, Value};

use super::prompt::{render_prompt, DEFAULT_SEPARATOR};
use super::transport::{ApiRequest, ApiResponse, Method, Transport, TransportError};
use crate::corpus::ClassSchema;
use crate::seed::derive_rng;
use crate::synthetic::TemplateGrammar;

/// Offline stand-in for a fine-tunable completion endpoint.
///
/// Samples come from a class-conditional template grammar rather than from
/// the uploaded data, but a model only answers prompts it was fine-tuned
/// on. A small share of samples echo a fine-tune completion verbatim.
pub struct MockGenerator {
    grammar: TemplateGrammar,
    prompts: BTreeMap<String, String>,
    seed: u64,
    polls_before_success: u32,
    echo_rate: f64,
    state: Mutex<MockState>,
}

#[derive(Default)]
struct MockState {
    files: Vec<Vec<(String, String)>>,
    jobs: Vec<Job>,
    calls: HashMap<(String, String), u64>,
    uploaded: Vec<String>,
}

struct Job {
    file: usize,
    base: String,
    polls: u32,
}

struct Model {
    prompts: BTreeSet<String>,
    completions: BTreeMap<String, Vec<String>>,
}

fn error(status: u16, message: impl Into<String>) -> ApiResponse {
    ApiResponse { status, body: json!({"error": {"message": message.into()}}) }
}

impl MockGenerator {
    /// Prompts are rendered from `schema` for every grammar class.
    pub fn new(grammar: TemplateGrammar, schema: &ClassSchema, seed: u64) -> Self {
        let prompts = grammar
            .templates
            .keys()
            .filter_map(|leaf| render_prompt(schema, leaf).ok().map(|p| (p, leaf.clone())))
            .collect();
        Self {
            grammar,
            prompts,
            seed,
            polls_before_success: 1,
            echo_rate: 0.05,
            state: Mutex::new(MockState::default()),
        }
    }

    pub fn with_echo_rate(mut self, rate: f64) -> Self {
        self.echo_rate = rate.clamp(0.0, 1.0);
        self
    }

    /// Completion texts of every file uploaded so far, in upload order.
    pub fn uploaded_completions(&self) -> Vec<String> {
        self.state.lock().expect("mock poisoned").uploaded.clone()
    }

    fn upload(&self, body: &Value) -> ApiResponse {
        let Some(content) = body.get("content").and_then(Value::as_str) else {
            return error(400, "missing file content");
        };
        let mut records = Vec::new();
        for line in content.lines().filter(|l| !l.trim().is_empty()) {
            let parsed: Result<Value, _> = serde_json::from_str(line);
            match parsed.ok().and_then(|v| {
                Some((v.get("prompt")?.as_str()?.to_string(), v.get("completion")?.as_str()?.to_string()))
            }) {
                Some(r) => records.push(r),
                None => return error(400, format!("malformed training line: {line}")),
            }
        }
        if records.is_empty() {
            return error(400, "training file is empty");
        }
        let mut state = self.state.lock().expect("mock poisoned");
        state.uploaded.extend(records.iter().map(|(_, c)| c.clone()));
        state.files.push(records);
        ApiResponse::ok(json!({"id": format!("file-mock-{}", state.files.len()), "object": "file"}))
    }

    fn create_job(&self, body: &Value) -> ApiResponse {
        let mut state = self.state.lock().expect("mock poisoned");
        let file = body
            .get("training_file")
            .and_then(Value::as_str)
            .and_then(|f| f.strip_prefix("file-mock-"))
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|n| (1..=state.files.len()).contains(n));
        let Some(file) = file else {
            return error(404, "unknown training file");
        };
        let base = body.get("model").and_then(Value::as_str).unwrap_or("base").to_string();
        state.jobs.push(Job { file: file - 1, base, polls: 0 });
        ApiResponse::ok(json!({"id": format!("ft-mock-{}", state.jobs.len()), "status": "pending"}))
    }

    fn poll(&self, job_id: &str) -> ApiResponse {
        let mut state = self.state.lock().expect("mock poisoned");
        let Some(n) = job_id.strip_prefix("ft-mock-").and_then(|n| n.parse::<usize>().ok()) else {
            return error(404, "unknown job");
        };
        let Some(job) = n.checked_sub(1).and_then(|i| state.jobs.get_mut(i)) else {
            return error(404, "unknown job");
        };
        job.polls += 1;
        if job.polls <= self.polls_before_success {
            return ApiResponse::ok(json!({"id": job_id, "status": "running"}));
        }
        ApiResponse::ok(json!({
            "id": job_id,
            "status": "succeeded",
            "fine_tuned_model": format!("{}:{job_id}", job.base),
        }))
    }

    fn model(&self, state: &MockState, name: &str) -> Option<Model> {
        let n: usize = name.rsplit_once(":ft-mock-")?.1.parse().ok()?;
        let job = state.jobs.get(n.checked_sub(1)?)?;
        let mut model = Model { prompts: BTreeSet::new(), completions: BTreeMap::new() };
        for (p, c) in &state.files[job.file] {
            model.prompts.insert(p.clone());
            model.completions.entry(p.clone()).or_default().push(c.clone());
        }
        Some(model)
    }

    fn complete(&self, body: &Value) -> ApiResponse {
        let model_name = body.get("model").and_then(Value::as_str).unwrap_or_default().to_string();
        let prompt = body.get("prompt").and_then(Value::as_str).unwrap_or_default().to_string();
        let n = body.get("n").and_then(Value::as_u64).unwrap_or(1).max(1);
        let mut state = self.state.lock().expect("mock poisoned");
        let Some(model) = self.model(&state, &model_name) else {
            return error(404, format!("model `{model_name}` does not exist"));
        };
        let call = state.calls.entry((model_name.clone(), prompt.clone())).or_insert(0);
        *call += 1;
        let call = call.to_string();
        let mut rng = derive_rng(self.seed, &["mock-completion", &model_name, &prompt, &call]);
        let class = self.prompts.get(&prompt).filter(|_| model.prompts.contains(&prompt));
        let known: Vec<&String> = model.completions.values().flatten().collect();
        let choices: Vec<Value> = (0..n)
            .map(|i| {
                let own = model.completions.get(&prompt);
                let text = match (class, own) {
                    (Some(_), Some(own)) if rng.random_bool(self.echo_rate) => own.choose(&mut rng).unwrap().clone(),
                    (Some(class), _) => {
                        let s = self.grammar.sample(class, &mut rng).unwrap_or_default();
                        format!(" {s}{DEFAULT_SEPARATOR}")
                    }
                    // Unfamiliar prompt: drift into whatever the model saw.
                    _ => known.choose(&mut rng).map(|s| s.to_string()).unwrap_or_default(),
                };
                json!({"text": text, "index": i})
            })
            .collect();
        ApiResponse::ok(json!({"model": model_name, "choices": choices}))
    }
}

impl Transport for MockGenerator {
    fn send(&self, request: &ApiRequest) -> Result<ApiResponse, TransportError> {
        Ok(match (request.method, request.path.as_str()) {
            (Method::Post, "/v1/files") => self.upload(&request.body),
            (Method::Post, "/v1/fine-tunes") => self.create_job(&request.body),
            (Method::Get, path) if path.starts_with("/v1/fine-tunes/") => self.poll(&path["/v1/fine-tunes/".len()..]),
            (Method::Post, "/v1/completions") => self.complete(&request.body),
            (m, p) => error(404, format!("no route for {m} {p}")),
        })
    }

    fn is_offline(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::client::{generate, submit_finetune, FineTuneConfig, GenerationParams};
    use crate::generator::prompt::PromptCompletion;
    use crate::generator::transport::RetryPolicy;
    use crate::synthetic::spam_task;

    fn records(schema: &ClassSchema, class: &str, n: usize) -> Vec<PromptCompletion> {
        (0..n)
            .map(|i| PromptCompletion {
                prompt: render_prompt(schema, class).unwrap(),
                completion: format!(" sample {i}{DEFAULT_SEPARATOR}"),
                class: class.into(),
                source_id: None,
            })
            .collect()
    }

    #[test]
    fn fine_tune_then_generate_class_conditional() {
        let task = spam_task(3);
        let mock = MockGenerator::new(task.grammar.clone(), &task.schema, 1).with_echo_rate(0.0);
        let handle = submit_finetune(&mock, &records(&task.schema, "spam", 4), &FineTuneConfig::default()).unwrap();
        assert_eq!(handle.model, "curie:ft-mock-1");
        let out = generate(&mock, &handle.model, &task.schema, "spam", 20, &GenerationParams::default(), &RetryPolicy::default()).unwrap();
        assert_eq!(out.texts.len(), 20);
        let spam: BTreeSet<&str> = task.grammar.slots["spam"].iter().map(String::as_str).collect();
        assert!(out.texts.iter().all(|t| t.split_whitespace().any(|w| spam.contains(w))));
        assert_eq!(mock.uploaded_completions().len(), 4);
    }

    #[test]
    fn untrained_prompt_echoes_training_data() {
        let task = spam_task(3);
        let mock = MockGenerator::new(task.grammar.clone(), &task.schema, 1);
        let handle = submit_finetune(&mock, &records(&task.schema, "spam", 2), &FineTuneConfig::default()).unwrap();
        let out = generate(&mock, &handle.model, &task.schema, "ham", 5, &GenerationParams::default(), &RetryPolicy::default()).unwrap();
        assert!(out.texts.iter().all(|t| t.starts_with(" sample ")));
    }

    #[test]
    fn unknown_model_is_an_error() {
        let task = spam_task(3);
        let mock = MockGenerator::new(task.grammar, &task.schema, 1);
        let err = generate(&mock, "curie:ft-mock-9", &task.schema, "spam", 1, &GenerationParams::default(), &RetryPolicy::default());
        assert!(err.is_err());
    }
}
