use serde::{Deserialize, Serialize};

use super::{FineTuneStrategy, GeneratorError};
use crate::corpus::{truncation_order, ClassSchema, Dataset, TruncationSpec};

/// Suffix appended to every prompt so the model writes a sample instead of
/// continuing the prompt.
pub const END_SEQUENCE: &str = " ->";

/// Default record separator terminating each completion.
pub const DEFAULT_SEPARATOR: &str = "\n###";

/// One fine-tuning example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptCompletion {
    pub prompt: String,
    pub completion: String,
    /// Leaf class the example belongs to.
    pub class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
}

/// Wire shape uploaded for fine-tuning.
#[derive(Serialize)]
struct WireRecord<'a> {
    prompt: &'a str,
    completion: &'a str,
}

/// Serializes records as line-delimited `{"prompt", "completion"}` objects.
pub fn to_upload_jsonl(records: &[PromptCompletion]) -> String {
    let mut out = String::new();
    for r in records {
        let line = serde_json::to_string(&WireRecord {
            prompt: &r.prompt,
            completion: &r.completion,
        })
        .expect("records serialize");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// The natural-language prompt for a (leaf) class, ending in `" ->"`.
pub fn render_prompt(schema: &ClassSchema, class: &str) -> Result<String, GeneratorError> {
    let template = schema
        .prompt_templates
        .get(class)
        .ok_or_else(|| GeneratorError::MissingTemplate(class.to_string()))?;
    Ok(format!("{}{END_SEQUENCE}", template.trim_end()))
}

/// Builds the fine-tuning set for a strategy from a disproportionately
/// truncated training set.
///
/// `gen1` uses every retained sample, `gen2` additionally truncates the
/// negatives at the same retention (using the same seeded ordering as
/// proportionate truncation) and `gen3` keeps only positives.
pub fn build_finetune_set(
    train: &Dataset,
    strategy: FineTuneStrategy,
    truncation: &TruncationSpec,
    separator: &str,
) -> Result<Vec<PromptCompletion>, GeneratorError> {
    let schema = train.schema();
    let samples = train.samples();
    let keep: Vec<bool> = match strategy {
        FineTuneStrategy::Disproportionate => vec![true; samples.len()],
        FineTuneStrategy::PositiveOnly => samples.iter().map(|s| s.label == schema.positive).collect(),
        FineTuneStrategy::Proportionate => {
            let mut keep: Vec<bool> = samples.iter().map(|s| s.label == schema.positive).collect();
            for class in schema.classes.iter().filter(|c| **c != schema.positive) {
                let order = truncation_order(train, class, truncation.seed);
                let k = truncation.keep_count(order.len());
                for i in order.into_iter().take(k) {
                    keep[i] = true;
                }
            }
            keep
        }
    };
    let records = samples
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(s, _)| {
            Ok(PromptCompletion {
                prompt: render_prompt(schema, s.leaf())?,
                completion: format!(" {}{separator}", s.text.trim()),
                class: s.leaf().to_string(),
                source_id: Some(s.id.clone()),
            })
        })
        .collect::<Result<Vec<_>, GeneratorError>>()?;
    if records.is_empty() {
        return Err(GeneratorError::EmptyFineTuneSet);
    }
    Ok(records)
}
