use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::client::{generate, submit_finetune, FineTuneConfig, FineTuneHandle, GenerationParams};
use super::cost::{estimate_cost, estimate_generation_cost, CostEstimate};
use super::postprocess::{synthetic_sample, PostprocessConfig, Postprocessor};
use super::prompt::{build_finetune_set, render_prompt};
use super::transport::Transport;
use super::{FineTuneStrategy, GeneratorError};
use crate::apportion::largest_remainder;
use crate::corpus::{class_counts, Dataset, Sample, TruncationSpec};
use crate::seed::derive_rng;

/// Rates in currency per 1k tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Pricing {
    pub finetune_per_1k: Decimal,
    pub generation_per_1k: Decimal,
}

impl Default for Pricing {
    fn default() -> Self {
        Self { finetune_per_1k: Decimal::new(3, 3), generation_per_1k: Decimal::new(12, 3) }
    }
}

/// Knobs for generator augmentation that are not transport-specific.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSettings {
    pub finetune: FineTuneConfig,
    /// `None` scales `max_tokens` to the fine-tune set.
    pub params: Option<GenerationParams>,
    pub postprocess: PostprocessConfig,
    pub over_request: f64,
    pub top_up_rounds: usize,
    pub pricing: Pricing,
}

impl Default for GeneratorSettings {
    fn default() -> Self {
        Self {
            finetune: FineTuneConfig::default(),
            params: None,
            postprocess: PostprocessConfig::default(),
            over_request: 0.2,
            top_up_rounds: 5,
            pricing: Pricing::default(),
        }
    }
}

impl GeneratorSettings {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        self.finetune.validate()?;
        if let Some(p) = &self.params {
            p.validate(&self.postprocess.separator)?;
        }
        if !(self.over_request >= 0.0 && self.over_request.is_finite()) {
            return Err(GeneratorError::InvalidParams("over_request must be a finite value >= 0".into()));
        }
        Ok(())
    }
}

/// Output of one generator augmentation, with the provenance it needs.
#[derive(Debug, Clone)]
pub struct GeneratorRun {
    pub dataset: Dataset,
    pub handle: Option<FineTuneHandle>,
    pub finetune_records: usize,
    pub params: GenerationParams,
    pub finetune_cost: CostEstimate,
    pub generation_cost: CostEstimate,
    pub requested: usize,
    pub kept: usize,
    pub retries: u32,
    /// Ids of training samples uploaded for fine-tuning.
    pub finetune_ids: Vec<String>,
}

/// Refills a truncated training set with generated samples.
///
/// The fine-tune set follows `strategy`; per-class shortfalls against
/// `target` are split across leaf classes by largest remainder over the
/// current leaf counts, so subclass proportions carry over.
pub fn augment_with_generator(
    train: &Dataset,
    strategy: FineTuneStrategy,
    truncation: &TruncationSpec,
    target: &BTreeMap<String, usize>,
    transport: Arc<dyn Transport>,
    settings: &GeneratorSettings,
    seed: u64,
) -> Result<GeneratorRun, GeneratorError> {
    settings.validate()?;
    let schema = train.schema();
    let separator = settings.postprocess.separator.as_str();
    let mut records = build_finetune_set(train, strategy, truncation, separator)?;
    records.shuffle(&mut derive_rng(seed, &["finetune-order", strategy.tag()]));
    let finetune_cost = estimate_cost(&records, settings.pricing.finetune_per_1k, settings.finetune.epochs)?;
    let mut params = settings.params.clone().unwrap_or_else(|| GenerationParams::scaled_to(&records));
    if !params.stop.iter().any(|s| s == separator) {
        params.stop.push(separator.to_string());
    }

    let current = class_counts(train);
    let mut allocation: Vec<(String, String, Option<String>, usize)> = Vec::new();
    for class in &schema.classes {
        let have = current.get(class).copied().unwrap_or(0);
        let want = target.get(class).copied().unwrap_or(have);
        if want < have {
            return Err(GeneratorError::TargetBelowCurrent { class: class.clone(), current: have, target: want });
        }
        if want == have {
            continue;
        }
        let children = schema.children(class);
        let leaves: Vec<String> = if children.is_empty() { vec![class.clone()] } else { children.to_vec() };
        let weights: Vec<usize> = leaves
            .iter()
            .map(|leaf| train.samples().iter().filter(|s| s.origin.is_true() && s.leaf() == leaf).count())
            .collect();
        if weights.iter().all(|&w| w == 0) {
            return Err(GeneratorError::NoSources(class.clone()));
        }
        for (leaf, n) in leaves.into_iter().zip(largest_remainder(want - have, &weights)) {
            if n > 0 {
                let sub = (leaf != *class).then(|| leaf.clone());
                allocation.push((leaf, class.clone(), sub, n));
            }
        }
    }

    let mut run = GeneratorRun {
        dataset: train.clone(),
        handle: None,
        finetune_records: records.len(),
        params: params.clone(),
        finetune_cost,
        generation_cost: CostEstimate::zero(settings.pricing.generation_per_1k, 1),
        requested: 0,
        kept: 0,
        retries: 0,
        finetune_ids: records.iter().filter_map(|r| r.source_id.clone()).collect(),
    };
    if allocation.is_empty() {
        return Ok(run);
    }

    let handle = submit_finetune(transport.as_ref(), &records, &settings.finetune)?;
    run.retries += handle.retries;
    let mut filter = Postprocessor::new(settings.postprocess.clone(), train.samples().iter().map(|s| s.text.as_str()));
    let mut synthetic: Vec<Sample> = Vec::new();
    for (leaf, label, subclass, wanted) in allocation {
        let prompt = render_prompt(schema, &leaf)?;
        let mut got = 0;
        for round in 0..=settings.top_up_rounds {
            let remaining = wanted - got;
            let padded = ((remaining as f64) * (1.0 + settings.over_request)).ceil() as usize;
            let ask = if round == 0 { padded } else { padded.max(params.samples_per_request as usize) };
            let out = generate(transport.as_ref(), &handle.model, schema, &leaf, ask.max(1), &params, &settings.finetune.retry)?;
            run.retries += out.retries;
            run.requested += out.texts.len();
            let cost = estimate_generation_cost(&prompt, &out.texts, settings.pricing.generation_per_1k);
            run.generation_cost = run.generation_cost.plus_tokens(cost.token_count);
            for raw in &out.texts {
                if got == wanted {
                    break;
                }
                if let Some(text) = filter.accept(raw) {
                    let id = format!("{}:{leaf}:{got}", strategy.tag());
                    synthetic.push(synthetic_sample(id, text, &label, subclass.as_deref(), strategy));
                    got += 1;
                }
            }
            if got == wanted {
                break;
            }
        }
        if got < wanted {
            return Err(GeneratorError::Shortfall { class: leaf, wanted, got });
        }
    }
    run.kept = synthetic.len();
    run.handle = Some(handle);
    run.dataset = train.extended(format!("generate({},seed={seed})", strategy.tag()), synthetic)?;
    Ok(run)
}
