//! Single-step subcommands.

use std::collections::BTreeMap;
use std::path::Path;

use augbench_core::augment::augment_to_target;
use augbench_core::classify::{fit, train_predict, FittedClassifier};
use augbench_core::corpus::{self, class_counts, ingest as ingest_corpus};
use augbench_core::generator::{
    build_finetune_set, estimate_cost as estimate, estimate_tokens, generate as sample_completions,
    postprocess, render_prompt, submit_finetune, to_upload_jsonl, FineTuneConfig, PostprocessConfig,
    RetryPolicy,
};
use augbench_core::generator::client::DEFAULT_ENGINE;
use augbench_core::generator::http::ENV_ENGINE;
use augbench_core::harness::{f1, Confusion};
use augbench_core::{
    AugmentationResources, ClassifierSpec, CostEstimate, EditPolicy, EmbeddingTable, GenerationParams,
    PromptCompletion, SynonymLexicon, TruncationSpec,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::CliError;
use crate::files::{open, read_dataset, read_json_lines, read_schema, read_structured, with_output, write_dataset, write_json};
use crate::transport::{build_transport, TransportSpec};
use crate::{
    AugmentArgs, EstimateCostArgs, EvaluateArgs, FinetuneArgs, GenerateArgs, IngestArgs, SplitArgs, TrainArgs,
    TransportArgs, TruncateArgs,
};

fn print_counts(label: &str, counts: &BTreeMap<String, usize>) {
    let parts: Vec<String> = counts.iter().map(|(c, n)| format!("{c}={n}")).collect();
    eprintln!("{label}: {}", parts.join(" "));
}

pub fn ingest(a: IngestArgs) -> Result<(), CliError> {
    let schema = read_schema(&a.schema.schema)?;
    let dataset = ingest_corpus(a.format, &a.input, &schema)?;
    print_counts("ingested", &class_counts(&dataset));
    if dataset.provenance().skipped_rows > 0 {
        eprintln!("skipped {} rows", dataset.provenance().skipped_rows);
    }
    write_dataset(&dataset, a.out.as_deref())
}

pub fn split(a: SplitArgs) -> Result<(), CliError> {
    let schema = read_schema(&a.schema.schema)?;
    let dataset = read_dataset(&a.input, &schema)?;
    let (train, test) = corpus::split(&dataset, a.test_fraction, a.seed)?;
    print_counts("train", &class_counts(&train));
    print_counts("test", &class_counts(&test));
    write_dataset(&train, Some(&a.train_out))?;
    write_dataset(&test, Some(&a.test_out))
}

pub fn truncate(a: TruncateArgs) -> Result<(), CliError> {
    let schema = read_schema(&a.schema.schema)?;
    let dataset = read_dataset(&a.input, &schema)?;
    let truncated = corpus::truncate(&dataset, &TruncationSpec::new(a.retention, a.mode, a.seed))?;
    print_counts("kept", &class_counts(&truncated));
    write_dataset(&truncated, a.out.as_deref())
}

fn load_lexicon(path: &Path) -> Result<SynonymLexicon, CliError> {
    SynonymLexicon::read(open(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_embeddings(path: &Path) -> Result<EmbeddingTable, CliError> {
    EmbeddingTable::read(open(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub(crate) fn load_resources(
    lexicon: Option<&Path>,
    embeddings: Option<&Path>,
    policy: EditPolicy,
) -> Result<AugmentationResources, CliError> {
    Ok(AugmentationResources {
        lexicon: lexicon.map(load_lexicon).transpose()?,
        embeddings: embeddings.map(load_embeddings).transpose()?,
        policy,
    })
}

pub fn augment(a: AugmentArgs) -> Result<(), CliError> {
    let schema = read_schema(&a.schema.schema)?;
    let dataset = read_dataset(&a.input, &schema)?;
    let policy = match &a.policy {
        Some(p) => read_structured(p, "edit policy")?,
        None => EditPolicy::default(),
    };
    let resources = load_resources(a.lexicon.as_deref(), a.embeddings.as_deref(), policy)?;
    let target: BTreeMap<String, usize> = match &a.reference {
        Some(reference) => {
            if !(a.refill_fraction >= 0.0 && a.refill_fraction <= 1.0) {
                return Err(CliError::Usage("--refill-fraction must lie in [0, 1]".into()));
            }
            let full = class_counts(&read_dataset(reference, &schema)?);
            let now = class_counts(&dataset);
            full.into_iter()
                .map(|(class, n)| {
                    let have = now.get(&class).copied().unwrap_or(0);
                    let refill = (n.saturating_sub(have) as f64 * a.refill_fraction).round() as usize;
                    (class, have + refill)
                })
                .collect()
        }
        None if a.targets.is_empty() => return Err(CliError::Usage("give --target CLASS=COUNT or --reference".into())),
        None => a.targets.iter().cloned().collect(),
    };
    let augmented = augment_to_target(&dataset, a.strategy, &target, &resources, a.seed)?;
    print_counts("augmented", &class_counts(&augmented));
    write_dataset(&augmented, a.out.as_deref())
}

fn transport_spec(t: &TransportArgs) -> TransportSpec<'_> {
    TransportSpec {
        backend: t.backend,
        mode: t.mode,
        cassette: t.cassette.as_deref(),
        grammar: t.grammar.as_deref(),
        mock_seed: t.mock_seed,
        requests_per_minute: None,
    }
}

fn print_cost(label: &str, cost: &CostEstimate) {
    println!("{label}_tokens {}", cost.token_count);
    println!("{label}_cost {}", cost.total);
}

pub fn finetune(a: FinetuneArgs) -> Result<(), CliError> {
    let schema = read_schema(&a.schema.schema)?;
    let train = read_dataset(&a.input, &schema)?;
    let truncation = TruncationSpec::new(a.retention, augbench_core::TruncationMode::Proportionate, a.truncation_seed);
    truncation.validate()?;
    let records = build_finetune_set(&train, a.strategy, &truncation, &a.separator)?;
    if let Some(path) = &a.export {
        with_output(Some(path), |w| w.write_all(to_upload_jsonl(&records).as_bytes()))?;
    }
    let cost = estimate(&records, a.rate, a.epochs)?;
    eprintln!("{} fine-tune records", records.len());
    if a.dry_run {
        print_cost("finetune", &cost);
        return Ok(());
    }
    let engine = a
        .engine
        .clone()
        .or_else(|| std::env::var(ENV_ENGINE).ok().filter(|e| !e.is_empty()))
        .unwrap_or_else(|| DEFAULT_ENGINE.to_string());
    let config = FineTuneConfig { engine, epochs: a.epochs, poll_interval_ms: a.poll_interval_ms, ..Default::default() };
    let transport = build_transport(&transport_spec(&a.transport), &schema)?;
    let handle = submit_finetune(transport.as_ref(), &records, &config)?;
    write_json(
        &json!({
            "model": handle.model,
            "job_id": handle.job_id,
            "file_id": handle.file_id,
            "retries": handle.retries,
            "records": records.len(),
            "cost": cost,
        }),
        a.handle_out.as_deref(),
    )
}

#[derive(Serialize, Deserialize)]
struct Completion {
    class: String,
    text: String,
}

pub fn generate(a: GenerateArgs) -> Result<(), CliError> {
    let schema = read_schema(&a.schema.schema)?;
    let prompt = render_prompt(&schema, &a.class)?;
    let params = GenerationParams {
        temperature: a.temperature,
        max_tokens: a.max_tokens,
        stop: vec![a.separator.clone()],
        samples_per_request: a.samples_per_request,
    };
    params.validate(&a.separator)?;
    if a.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    if a.dry_run {
        // upper bound: every completion runs to max_tokens
        let per_sample = estimate_tokens(&prompt) + u64::from(a.max_tokens);
        print_cost("generation", &CostEstimate::from_tokens(per_sample * a.n as u64, a.rate, 1));
        return Ok(());
    }
    let transport = build_transport(&transport_spec(&a.transport), &schema)?;
    let out = sample_completions(transport.as_ref(), &a.model, &schema, &a.class, a.n, &params, &RetryPolicy::default())?;
    eprintln!("{} completions, {} retries", out.texts.len(), out.retries);
    match (&a.postprocess_against, a.strategy) {
        (Some(inputs), Some(strategy)) => {
            let train = read_dataset(inputs, &schema)?;
            let config = PostprocessConfig { separator: a.separator.clone(), ..Default::default() };
            let samples = postprocess(&out.texts, &train, &a.class, strategy, &config)?;
            eprintln!("{} kept after post-processing", samples.len());
            with_output(a.out.as_deref(), |w| {
                for s in &samples {
                    serde_json::to_writer(&mut *w, s)?;
                    w.write_all(b"\n")?;
                }
                Ok(())
            })
        }
        _ => with_output(a.out.as_deref(), |w| {
            for text in out.texts {
                serde_json::to_writer(&mut *w, &Completion { class: a.class.clone(), text })?;
                w.write_all(b"\n")?;
            }
            Ok(())
        }),
    }
}

#[derive(Deserialize)]
struct UploadRecord {
    prompt: String,
    completion: String,
}

pub fn estimate_cost(a: EstimateCostArgs) -> Result<(), CliError> {
    let records: Vec<UploadRecord> = read_json_lines(&a.input)?;
    let records: Vec<PromptCompletion> = records
        .into_iter()
        .map(|r| PromptCompletion { prompt: r.prompt, completion: r.completion, class: String::new(), source_id: None })
        .collect();
    let cost = estimate(&records, a.rate, a.epochs)?;
    if a.json {
        write_json(&cost, None)
    } else {
        println!("records {}", records.len());
        println!("tokens {}", cost.token_count);
        println!("epochs {}", cost.epochs);
        println!("rate_per_1k {}", cost.rate_per_1k);
        println!("total {}", cost.total);
        Ok(())
    }
}

fn classifier_spec(arg: &str) -> Result<ClassifierSpec, CliError> {
    let path = Path::new(arg);
    if path.exists() {
        return read_structured(path, "classifier spec");
    }
    serde_json::from_value(json!({ "kind": arg }))
        .map_err(|_| CliError::Usage(format!("unknown classifier `{arg}`; use mnb, logreg, knn or a spec file")))
}

pub fn train(a: TrainArgs) -> Result<(), CliError> {
    let schema = read_schema(&a.schema.schema)?;
    let dataset = read_dataset(&a.input, &schema)?;
    let spec = classifier_spec(&a.classifier)?;
    let model = fit(&spec, &dataset, a.min_df, a.seed)?;
    eprintln!("{} fitted on {} samples, {} features", spec.name(), dataset.len(), model.vectorizer().len());
    write_json(&model, Some(&a.out))
}

pub fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let schema = read_schema(&a.schema.schema)?;
    let dataset = read_dataset(&a.input, &schema)?;
    let predictions = match (&a.model, &a.train, &a.classifier) {
        (Some(path), _, _) => {
            let model: FittedClassifier = serde_json::from_reader(open(path)?)
                .map_err(|e| CliError::Data(format!("invalid model `{}`: {e}", path.display())))?;
            model.predict_dataset(&dataset)
        }
        (None, Some(train), Some(spec)) => {
            let train = read_dataset(train, &schema)?;
            train_predict(&classifier_spec(spec)?, &train, &dataset, a.min_df, a.seed)?
        }
        _ => return Err(CliError::Usage("give --model, or --train with --classifier".into())),
    };
    let confusion = Confusion::from_labels(
        dataset.samples().iter().map(|s| s.label.as_str()),
        predictions.iter().map(String::as_str),
        &schema.positive,
    );
    if let Some(path) = &a.predictions_out {
        with_output(Some(path), |w| {
            for (s, p) in dataset.samples().iter().zip(&predictions) {
                serde_json::to_writer(&mut *w, &json!({"id": s.id, "label": p}))?;
                w.write_all(b"\n")?;
            }
            Ok(())
        })?;
    }
    write_json(&json!({ "confusion": confusion, "scores": f1(&confusion) }), None)
}
