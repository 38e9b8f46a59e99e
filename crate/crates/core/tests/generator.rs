use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use augbench_core::corpus::{class_counts, leaf_counts, truncate, ClassSchema, Dataset, Origin, Provenance, Sample};
use augbench_core::generator::*;
use augbench_core::synthetic::TemplateGrammar;
use augbench_core::{TruncationMode, TruncationSpec};
use proptest::prelude::*;
use rust_decimal::Decimal;
use serde_json::json;

fn fast_retry() -> RetryPolicy {
    RetryPolicy { max_attempts: 5, base_delay_ms: 5, max_delay_ms: 20 }
}

fn records(n: usize) -> Vec<PromptCompletion> {
    (0..n)
        .map(|i| PromptCompletion {
            prompt: "A spam SMS ->".into(),
            completion: format!(" win prize {i}\n###"),
            class: "spam".into(),
            source_id: Some(format!("s{i}")),
        })
        .collect()
}

struct StubRequest {
    line: String,
    content_type: String,
}

/// Minimal HTTP/1.1 server: answers each connection from `script` in order
/// (falling back to `route`) and remembers what it saw.
fn stub_server(
    script: Vec<(u16, serde_json::Value)>,
    route: fn(&str) -> serde_json::Value,
) -> (String, Arc<Mutex<Vec<StubRequest>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        let mut script = script.into_iter();
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let mut length = 0;
            let mut content_type = String::new();
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                if h == "\r\n" || h.is_empty() {
                    break;
                }
                let lower = h.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if lower.starts_with("content-type:") {
                    content_type = lower["content-type:".len()..].trim().to_string();
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            let (status, payload) = script.next().unwrap_or_else(|| (200, route(&line)));
            log.lock().unwrap().push(StubRequest { line: line.trim().to_string(), content_type });
            let text = payload.to_string();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            )
            .unwrap();
        }
    });
    (addr, seen)
}

fn finetune_route(line: &str) -> serde_json::Value {
    if line.starts_with("POST /v1/files") {
        json!({"id": "file-1"})
    } else if line.starts_with("POST /v1/fine-tunes") {
        json!({"id": "ftjob-1", "status": "pending"})
    } else {
        json!({"id": "ftjob-1", "status": "succeeded", "fine_tuned_model": "curie:ft-toy-1"})
    }
}

#[test]
fn live_transport_retries_rate_limits() {
    let rate_limited = json!({"error": {"message": "slow down"}});
    let (base, seen) = stub_server(vec![(429, rate_limited.clone()), (429, rate_limited)], finetune_route);
    let transport = HttpTransport::new(HttpConfig::new(base));
    let config = FineTuneConfig { retry: fast_retry(), poll_interval_ms: 1, ..Default::default() };
    let handle = submit_finetune(&transport, &records(3), &config).unwrap();
    assert_eq!(handle.retries, 2);
    assert_eq!(handle.model, "curie:ft-toy-1");
    assert_eq!(handle.file_id, "file-1");
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 5);
    assert!(seen[2].line.starts_with("POST /v1/files"));
    assert!(seen[2].content_type.starts_with("multipart/form-data"));
    assert!(seen[3].content_type.starts_with("application/json"));
    assert!(seen[4].line.starts_with("GET /v1/fine-tunes/ftjob-1"));
}

#[test]
fn live_transport_gives_up_after_five_attempts() {
    let script = vec![(503, json!({})); 6];
    let (base, seen) = stub_server(script, finetune_route);
    let transport = HttpTransport::new(HttpConfig::new(base));
    let config = FineTuneConfig { retry: fast_retry(), ..Default::default() };
    let err = submit_finetune(&transport, &records(1), &config).unwrap_err();
    assert!(matches!(err, GeneratorError::Transport(TransportError::Status { status: 503, .. })));
    assert_eq!(seen.lock().unwrap().len(), 5);
}

fn entry(request: &ApiRequest, index: usize, body: serde_json::Value) -> CassetteEntry {
    CassetteEntry { digest: request.digest(), index, response: ApiResponse::ok(body) }
}

fn write_cassette(entries: &[CassetteEntry]) -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cassette.jsonl");
    let mut text = String::new();
    for e in entries {
        text.push_str(&serde_json::to_string(e).unwrap());
        text.push('\n');
    }
    std::fs::write(&path, text).unwrap();
    (dir, path)
}

fn toy_finetune_cassette(recs: &[PromptCompletion]) -> Vec<CassetteEntry> {
    let upload = ApiRequest::post(
        "/v1/files",
        json!({"purpose": "fine-tune", "filename": "augbench-finetune.jsonl", "content": to_upload_jsonl(recs)}),
    );
    let create = ApiRequest::post("/v1/fine-tunes", json!({"training_file": "file-toy", "model": "curie", "n_epochs": 4}));
    let poll = ApiRequest::get("/v1/fine-tunes/job-toy");
    vec![
        entry(&upload, 0, json!({"id": "file-toy"})),
        entry(&create, 0, json!({"id": "job-toy", "status": "pending"})),
        entry(&poll, 0, json!({"status": "running"})),
        entry(&poll, 1, json!({"status": "succeeded", "fine_tuned_model": "ft-toy-1"})),
    ]
}

#[test]
fn replayed_finetune_returns_recorded_handle() {
    let recs = records(4);
    let (_dir, path) = write_cassette(&toy_finetune_cassette(&recs));
    let replay = ReplayTransport::open(&path).unwrap();
    let handle = submit_finetune(&replay, &recs, &FineTuneConfig::default()).unwrap();
    assert_eq!(handle.model, "ft-toy-1");
    assert_eq!(handle.job_id, "job-toy");
    assert_eq!(handle.retries, 0);
}

#[test]
fn replay_miss_names_the_digest() {
    let (_dir, path) = write_cassette(&toy_finetune_cassette(&records(4)));
    let replay = ReplayTransport::open(&path).unwrap();
    let other = records(5);
    let err = submit_finetune(&replay, &other, &FineTuneConfig::default()).unwrap_err();
    let upload = ApiRequest::post(
        "/v1/files",
        json!({"purpose": "fine-tune", "filename": "augbench-finetune.jsonl", "content": to_upload_jsonl(&other)}),
    );
    match err {
        GeneratorError::Transport(TransportError::CassetteMiss { digest, index }) => {
            assert_eq!(digest, upload.digest());
            assert_eq!(index, 0);
        }
        other => panic!("expected cassette miss, got {other}"),
    }
}

#[test]
fn failed_job_is_reported() {
    let recs = records(2);
    let mut entries = toy_finetune_cassette(&recs);
    entries[2].response.body = json!({"status": "failed"});
    let (_dir, path) = write_cassette(&entries);
    let err = submit_finetune(&ReplayTransport::open(&path).unwrap(), &recs, &FineTuneConfig::default()).unwrap_err();
    assert!(matches!(err, GeneratorError::JobFailed { ref status, .. } if status == "failed"));
}

fn spam_schema() -> ClassSchema {
    ClassSchema::new(&["ham", "spam"], "spam").with_template("spam", "A spam SMS").with_template("ham", "A regular SMS")
}

#[test]
fn generate_replays_stored_completions_verbatim() {
    let params = GenerationParams::default();
    let request = ApiRequest::post(
        "/v1/completions",
        json!({
            "model": "ft-toy-1", "prompt": "A spam SMS ->", "temperature": 0.8,
            "max_tokens": 64, "stop": ["\n###"], "n": 3,
        }),
    );
    let stored = [" WIN a car\n###", " free ringtones", " claim now!\n###"];
    let choices: Vec<_> = stored.iter().map(|t| json!({"text": t})).collect();
    let (_dir, path) = write_cassette(&[entry(&request, 0, json!({"choices": choices}))]);
    let run = || {
        let replay = ReplayTransport::open(&path).unwrap();
        generate(&replay, "ft-toy-1", &spam_schema(), "spam", 3, &params, &RetryPolicy::default()).unwrap()
    };
    let a = run();
    assert_eq!(a.texts, stored);
    assert_eq!(a, run());
    let replay = ReplayTransport::open(&path).unwrap();
    let err = generate(&replay, "ft-toy-1", &spam_schema(), "spam", 0, &params, &RetryPolicy::default());
    assert!(matches!(err, Err(GeneratorError::InvalidParams(_))));
}

fn review_task() -> (ClassSchema, TemplateGrammar) {
    let schema = ClassSchema::new(&["truthful", "deceptive"], "deceptive")
        .with_template("truthful", "A truthful hotel review")
        .with_template("deceptive", "A deceptive hotel review");
    let slots = BTreeMap::from([
        ("adj".to_string(), ["luxurious", "amazing", "perfect", "stunning", "wonderful", "superb"].map(String::from).to_vec()),
        ("noun".to_string(), ["suite", "spa", "lobby", "staff", "view", "pool", "bar", "bed"].map(String::from).to_vec()),
        ("plain".to_string(), ["room", "desk", "street", "parking", "elevator", "breakfast"].map(String::from).to_vec()),
    ]);
    let templates = BTreeMap::from([
        ("deceptive".to_string(), vec!["my {adj} {noun} was {adj} and the {noun} {adj}".to_string(), "what a {adj} {noun} {noun}".to_string()]),
        ("truthful".to_string(), vec!["the {plain} was fine but the {plain} was small".to_string()]),
    ]);
    (schema, TemplateGrammar { slots, templates })
}

fn review_train(schema: &ClassSchema) -> Dataset {
    let mut samples = Vec::new();
    for i in 0..800 {
        samples.push(Sample::new(format!("t{i}"), format!("ordinary stay number {i}"), "truthful"));
        samples.push(Sample::new(format!("d{i}"), format!("dream stay number {i}"), "deceptive"));
    }
    Dataset::new(schema.clone(), samples, Provenance::default()).unwrap()
}

#[test]
fn gen3_refill_composition() {
    let (schema, grammar) = review_task();
    let spec = TruncationSpec::new(0.03, TruncationMode::Disproportionate, 8);
    let train = truncate(&review_train(&schema), &spec).unwrap();
    assert_eq!(class_counts(&train)["deceptive"], 24);
    let mock: Arc<dyn Transport> = Arc::new(MockGenerator::new(grammar, &schema, 1));
    let target = BTreeMap::from([("deceptive".to_string(), 800), ("truthful".to_string(), 800)]);
    let run = augment_with_generator(&train, FineTuneStrategy::PositiveOnly, &spec, &target, mock, &GeneratorSettings::default(), 4).unwrap();
    let s = run.dataset.samples();
    let synthetic_pos = s.iter().filter(|x| x.label == "deceptive" && !x.origin.is_true()).count();
    let true_pos = s.iter().filter(|x| x.label == "deceptive" && x.origin.is_true()).count();
    let true_neg = s.iter().filter(|x| x.label == "truthful" && x.origin.is_true()).count();
    assert_eq!((synthetic_pos, true_pos, true_neg), (776, 24, 800));
    assert!(s.iter().filter(|x| x.label == "truthful").all(|x| x.origin.is_true()));
    assert!(s.iter().filter(|x| !x.origin.is_true()).all(|x| x.origin == Origin::Synthetic("gen3".into())));
    assert_eq!(run.finetune_records, 24);
    assert!(run.requested >= 776);
    assert_eq!(run.finetune_cost.epochs, 4);
}

#[test]
fn shortfall_when_generator_cannot_produce_enough_distinct_text() {
    let (schema, mut grammar) = review_task();
    grammar.templates.insert("deceptive".into(), vec!["always the same".into()]);
    let spec = TruncationSpec::new(0.03, TruncationMode::Disproportionate, 8);
    let train = truncate(&review_train(&schema), &spec).unwrap();
    let mock: Arc<dyn Transport> = Arc::new(MockGenerator::new(grammar, &schema, 1));
    let target = BTreeMap::from([("deceptive".to_string(), 100)]);
    let err = augment_with_generator(&train, FineTuneStrategy::PositiveOnly, &spec, &target, mock, &GeneratorSettings::default(), 4).unwrap_err();
    assert!(matches!(err, GeneratorError::Shortfall { wanted: 76, got: 1, .. }));
}

#[test]
fn positive_subclasses_keep_their_ratio() {
    let schema = ClassSchema::new(&["NOT", "OFF"], "OFF")
        .with_subclasses("OFF", &["UNT", "IND", "GRP"])
        .with_template("NOT", "A regular tweet")
        .with_template("UNT", "An untargeted offensive tweet")
        .with_template("IND", "An offensive tweet targeting an individual")
        .with_template("GRP", "An offensive tweet targeting a group");
    let mut samples = Vec::new();
    for (sub, n) in [("UNT", 2), ("IND", 5), ("GRP", 3)] {
        for i in 0..n {
            samples.push(Sample::new(format!("{sub}{i}"), format!("{sub} text {i}"), "OFF").with_subclass(sub));
        }
    }
    for i in 0..40 {
        samples.push(Sample::new(format!("n{i}"), format!("nice day {i}"), "NOT"));
    }
    let train = Dataset::new(schema.clone(), samples, Provenance::default()).unwrap();
    let slots = BTreeMap::from([("w".to_string(), (0..50).map(|i| format!("w{i}")).collect::<Vec<_>>())]);
    let templates = ["UNT", "IND", "GRP", "NOT"]
        .iter()
        .map(|c| (c.to_string(), vec![format!("{} {{w}} {{w}} {{w}}", c.to_lowercase())]))
        .collect();
    let mock: Arc<dyn Transport> = Arc::new(MockGenerator::new(TemplateGrammar { slots, templates }, &schema, 2));
    let spec = TruncationSpec::new(1.0, TruncationMode::Disproportionate, 0);
    let target = BTreeMap::from([("OFF".to_string(), 101)]);
    let run = augment_with_generator(&train, FineTuneStrategy::PositiveOnly, &spec, &target, mock, &GeneratorSettings::default(), 3).unwrap();
    let leaves = leaf_counts(&run.dataset);
    // 91 new samples at 2:5:3 -> 18.2, 45.5, 27.3 -> largest remainder 18, 46, 27
    assert_eq!((leaves["UNT"], leaves["IND"], leaves["GRP"]), (2 + 18, 5 + 46, 3 + 27));
    assert!(run.dataset.samples().iter().filter(|s| s.subclass.as_deref() == Some("UNT") && !s.origin.is_true()).all(|s| s.text.starts_with("unt ")));
}

fn serialize(d: &Dataset) -> Vec<u8> {
    let mut buf = Vec::new();
    d.write_jsonl(&mut buf).unwrap();
    buf
}

#[test]
fn replay_closure_is_byte_identical() {
    let (schema, grammar) = review_task();
    let spec = TruncationSpec::new(0.03, TruncationMode::Disproportionate, 3);
    let train = truncate(&review_train(&schema), &spec).unwrap();
    let target = BTreeMap::from([("deceptive".to_string(), 300)]);
    let dir = tempfile::tempdir().unwrap();
    let cassette = dir.path().join("run.jsonl");
    let settings = GeneratorSettings::default();
    let live = {
        let mock = MockGenerator::new(grammar, &schema, 9).with_echo_rate(0.3);
        let rec: Arc<dyn Transport> = Arc::new(RecordingTransport::open(mock, &cassette).unwrap());
        augment_with_generator(&train, FineTuneStrategy::Proportionate, &spec, &target, rec, &settings, 5).unwrap()
    };
    for _ in 0..2 {
        let replay: Arc<dyn Transport> = Arc::new(ReplayTransport::open(&cassette).unwrap());
        let again = augment_with_generator(&train, FineTuneStrategy::Proportionate, &spec, &target, replay, &settings, 5).unwrap();
        assert_eq!(serialize(&again.dataset), serialize(&live.dataset));
    }
    // echoed fine-tune completions never survive
    let inputs: BTreeSet<&str> = train.samples().iter().map(|s| s.text.as_str()).collect();
    assert!(live.dataset.samples().iter().filter(|s| !s.origin.is_true()).all(|s| !inputs.contains(s.text.as_str())));
    assert!(live.requested > live.kept);
}

#[test]
fn unrecorded_seed_misses_in_replay() {
    let (schema, grammar) = review_task();
    let spec = TruncationSpec::new(0.03, TruncationMode::Disproportionate, 3);
    let train = truncate(&review_train(&schema), &spec).unwrap();
    let target = BTreeMap::from([("deceptive".to_string(), 50)]);
    let dir = tempfile::tempdir().unwrap();
    let cassette = dir.path().join("run.jsonl");
    {
        let rec: Arc<dyn Transport> = Arc::new(RecordingTransport::open(MockGenerator::new(grammar, &schema, 9), &cassette).unwrap());
        augment_with_generator(&train, FineTuneStrategy::PositiveOnly, &spec, &target, rec, &GeneratorSettings::default(), 5).unwrap();
    }
    let replay: Arc<dyn Transport> = Arc::new(ReplayTransport::open(&cassette).unwrap());
    let err = augment_with_generator(&train, FineTuneStrategy::PositiveOnly, &spec, &target, replay, &GeneratorSettings::default(), 6).unwrap_err();
    assert!(matches!(err, GeneratorError::Transport(TransportError::CassetteMiss { .. })));
}

proptest! {
    #[test]
    fn cost_is_monotone_and_linear_in_epochs(texts in proptest::collection::vec(".{0,40}", 0..20), extra in ".{1,40}", epochs in 1u32..10) {
        let rate = Decimal::new(3, 3);
        let recs: Vec<PromptCompletion> = texts.iter().map(|t| PromptCompletion {
            prompt: "p ->".into(), completion: t.clone(), class: "c".into(), source_id: None,
        }).collect();
        let base = estimate_cost(&recs, rate, epochs).unwrap();
        let mut more = recs.clone();
        more.push(PromptCompletion { prompt: "p ->".into(), completion: extra, class: "c".into(), source_id: None });
        prop_assert!(estimate_cost(&more, rate, epochs).unwrap().total >= base.total);
        let single = estimate_cost(&recs, rate, 1).unwrap();
        prop_assert_eq!(base.total, (single.total * Decimal::from(epochs)).normalize());
        prop_assert_eq!(base.token_count, single.token_count);
    }

    #[test]
    fn prompts_always_end_with_arrow(template in "[A-Za-z ]{1,30}") {
        let schema = ClassSchema::new(&["a", "b"], "b").with_template("b", &template);
        prop_assert!(render_prompt(&schema, "b").unwrap().ends_with("->"));
    }
}

#[test]
fn slow_stub_is_not_needed_for_replay() {
    // Replay never sleeps even when the recorded session retried.
    let recs = records(1);
    let mut entries = toy_finetune_cassette(&recs);
    let upload_digest = entries[0].digest.clone();
    entries.insert(0, CassetteEntry { digest: upload_digest, index: 0, response: ApiResponse { status: 429, body: json!({}) } });
    entries[1].index = 1;
    let (_dir, path) = write_cassette(&entries);
    let config = FineTuneConfig { retry: RetryPolicy { base_delay_ms: 60_000, ..Default::default() }, ..Default::default() };
    let start = std::time::Instant::now();
    let handle = submit_finetune(&ReplayTransport::open(&path).unwrap(), &recs, &config).unwrap();
    assert_eq!(handle.retries, 1);
    assert!(start.elapsed() < Duration::from_secs(5));
}
