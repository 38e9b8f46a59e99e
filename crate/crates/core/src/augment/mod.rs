//! Baseline augmentation: synonym replacement (`bda1`), embedding-guided
//! random insertion (`bda2`) and context-guided insertion (`bda3`), plus the
//! refill routine that grows a truncated dataset back to target counts.

mod embedding;
mod lexicon;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embedding::{cosine, EmbeddingTable};
pub use lexicon::SynonymLexicon;

use crate::corpus::{class_counts, CorpusError, Dataset, Origin, Sample};
use crate::seed::{derive_rng, SeededRng};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("sample `{0}` cannot be augmented: no token is covered by the resources")]
    Unaugmentable(String),
    #[error("resource file line {line}: {message}")]
    Resource { line: usize, message: String },
    #[error("strategy {0} needs a {1} but none was loaded")]
    MissingResource(BasicStrategy, &'static str),
    #[error("invalid edit policy: {0}")]
    InvalidPolicy(String),
    #[error("target for class `{class}` is {target}, below the current count {current}")]
    TargetBelowCurrent {
        class: String,
        current: usize,
        target: usize,
    },
    #[error("class `{0}` needs augmentation but has no augmentable true samples")]
    NoSources(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasicStrategy {
    Bda1,
    Bda2,
    Bda3,
}

impl BasicStrategy {
    pub fn tag(self) -> &'static str {
        match self {
            BasicStrategy::Bda1 => "bda1",
            BasicStrategy::Bda2 => "bda2",
            BasicStrategy::Bda3 => "bda3",
        }
    }
}

impl fmt::Display for BasicStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for BasicStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bda1" => Ok(Self::Bda1),
            "bda2" => Ok(Self::Bda2),
            "bda3" => Ok(Self::Bda3),
            other => Err(format!("unknown basic strategy `{other}`")),
        }
    }
}

/// Edit budget for token-level augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EditPolicy {
    /// Fraction of tokens edited per sample.
    pub edit_rate: f64,
    pub min_edits: usize,
    /// Candidate pool size for embedding neighbors.
    pub neighbor_k: usize,
    /// Tokens considered on each side of an insertion point.
    pub context_window: usize,
}

impl Default for EditPolicy {
    fn default() -> Self {
        Self {
            edit_rate: 0.1,
            min_edits: 1,
            neighbor_k: 10,
            context_window: 3,
        }
    }
}

impl EditPolicy {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(self.edit_rate > 0.0 && self.edit_rate <= 1.0) {
            return Err(AugmentError::InvalidPolicy(format!(
                "edit_rate must lie in (0, 1], got {}",
                self.edit_rate
            )));
        }
        if self.min_edits == 0 || self.neighbor_k == 0 {
            return Err(AugmentError::InvalidPolicy(
                "min_edits and neighbor_k must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Edits applied to a sample of `token_count` tokens.
    pub fn edits(&self, token_count: usize) -> usize {
        let scaled = (self.edit_rate * token_count as f64).round() as usize;
        scaled.max(self.min_edits)
    }
}

/// Shared read-only inputs for the basic strategies.
#[derive(Debug, Clone, Default)]
pub struct AugmentationResources {
    pub lexicon: Option<SynonymLexicon>,
    pub embeddings: Option<EmbeddingTable>,
    pub policy: EditPolicy,
}

/// Splits a whitespace token into leading punctuation, core and trailing
/// punctuation.
fn split_token(token: &str) -> (&str, &str, &str) {
    let start = token.find(|c: char| c.is_alphanumeric()).unwrap_or(token.len());
    let end = token
        .rfind(|c: char| c.is_alphanumeric())
        .map(|i| i + token[i..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(start);
    (&token[..start], &token[start..end.max(start)], &token[end.max(start)..])
}

fn core_lower(token: &str) -> String {
    split_token(token).1.to_lowercase()
}

fn match_case(original: &str, replacement: &str) -> String {
    let upper = original.chars().next().is_some_and(char::is_uppercase);
    if !upper {
        return replacement.to_string();
    }
    let mut chars = replacement.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn derived_sample(source: &Sample, tokens: Vec<String>, strategy: BasicStrategy) -> Sample {
    Sample {
        id: format!("{}~{}", source.id, strategy.tag()),
        text: tokens.join(" "),
        label: source.label.clone(),
        subclass: source.subclass.clone(),
        origin: Origin::Synthetic(strategy.tag().to_string()),
        source: Some(source.source.clone().unwrap_or_else(|| source.id.clone())),
    }
}

fn tokens_of(sample: &Sample) -> Vec<String> {
    sample.text.split_whitespace().map(str::to_string).collect()
}

fn replaceable_positions(tokens: &[String], lexicon: &SynonymLexicon) -> Vec<usize> {
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| {
            let core = split_token(t).1;
            !core.is_empty() && lexicon.alternatives(core).is_some()
        })
        .map(|(i, _)| i)
        .collect()
}

/// Replaces `policy.edits(n)` lexicon-covered tokens with a uniformly drawn
/// alternative (bda1).
pub fn synonym_replace(
    sample: &Sample,
    lexicon: &SynonymLexicon,
    policy: &EditPolicy,
    rng: &mut SeededRng,
) -> Result<Sample, AugmentError> {
    policy.validate()?;
    let mut tokens = tokens_of(sample);
    let eligible = replaceable_positions(&tokens, lexicon);
    if eligible.is_empty() {
        return Err(AugmentError::Unaugmentable(sample.id.clone()));
    }
    let edits = policy.edits(tokens.len()).min(eligible.len());
    let mut chosen: Vec<usize> = rand::seq::index::sample(rng, eligible.len(), edits)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    chosen.sort_unstable();
    for pos in chosen {
        let (lead, core, trail) = split_token(&tokens[pos]);
        let alternatives = lexicon.alternatives(core).expect("eligible token has an entry");
        let pick = alternatives.choose(rng).expect("entries are non-empty");
        tokens[pos] = format!("{lead}{}{trail}", match_case(core, pick));
    }
    Ok(derived_sample(sample, tokens, BasicStrategy::Bda1))
}

/// Cores of tokens covered by the table that have at least one neighbor.
fn vocabulary_sources(tokens: &[String], table: &EmbeddingTable) -> Vec<String> {
    if table.len() < 2 {
        return Vec::new();
    }
    tokens
        .iter()
        .map(|t| core_lower(t))
        .filter(|c| !c.is_empty() && table.contains(c))
        .collect()
}

fn insert_random_neighbor(
    tokens: &mut Vec<String>,
    sources: &[String],
    table: &EmbeddingTable,
    policy: &EditPolicy,
    rng: &mut SeededRng,
) {
    let source = sources.choose(rng).expect("sources are non-empty");
    let neighbors = table.nearest(source, policy.neighbor_k);
    let word = neighbors.choose(rng).expect("table has at least two words").to_string();
    let pos = rng.random_range(0..=tokens.len());
    tokens.insert(pos, word);
}

/// Inserts neighbors of randomly chosen in-vocabulary tokens at random
/// positions (bda2).
pub fn random_insert(
    sample: &Sample,
    table: &EmbeddingTable,
    policy: &EditPolicy,
    rng: &mut SeededRng,
) -> Result<Sample, AugmentError> {
    policy.validate()?;
    let mut tokens = tokens_of(sample);
    let sources = vocabulary_sources(&tokens, table);
    if sources.is_empty() {
        return Err(AugmentError::Unaugmentable(sample.id.clone()));
    }
    for _ in 0..policy.edits(tokens.len()) {
        insert_random_neighbor(&mut tokens, &sources, table, policy, rng);
    }
    Ok(derived_sample(sample, tokens, BasicStrategy::Bda2))
}

/// Mean vector of the in-vocabulary tokens in `window`.
fn context_mean(window: &[String], table: &EmbeddingTable) -> Option<Vec<f64>> {
    let mut mean = vec![0.0; table.dimension()];
    let mut n = 0usize;
    for token in window {
        if let Some(v) = table.vector(&core_lower(token)) {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += *x as f64;
            }
            n += 1;
        }
    }
    if n == 0 {
        return None;
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    Some(mean)
}

/// Context-guided insertion (bda3): at a random point, insert the word most
/// similar to the mean vector of the surrounding window, excluding words
/// already in the window. A context without usable vectors falls back to a
/// bda2-style insertion.
pub fn contextual_insert(
    sample: &Sample,
    table: &EmbeddingTable,
    policy: &EditPolicy,
    rng: &mut SeededRng,
) -> Result<Sample, AugmentError> {
    policy.validate()?;
    let mut tokens = tokens_of(sample);
    let sources = vocabulary_sources(&tokens, table);
    if sources.is_empty() {
        return Err(AugmentError::Unaugmentable(sample.id.clone()));
    }
    for _ in 0..policy.edits(tokens.len()) {
        let pos = rng.random_range(0..=tokens.len());
        let lo = pos.saturating_sub(policy.context_window);
        let hi = (pos + policy.context_window).min(tokens.len());
        let window = &tokens[lo..hi];
        let exclude: Vec<String> = window.iter().map(|t| core_lower(t)).collect();
        let chosen = context_mean(window, table)
            .and_then(|mean| table.best_match(&mean, &exclude).map(str::to_string));
        match chosen {
            Some(word) => tokens.insert(pos, word),
            None => insert_random_neighbor(&mut tokens, &sources, table, policy, rng),
        }
    }
    Ok(derived_sample(sample, tokens, BasicStrategy::Bda3))
}

fn is_augmentable(sample: &Sample, strategy: BasicStrategy, resources: &AugmentationResources) -> bool {
    let tokens = tokens_of(sample);
    match strategy {
        BasicStrategy::Bda1 => resources
            .lexicon
            .as_ref()
            .is_some_and(|lex| !replaceable_positions(&tokens, lex).is_empty()),
        BasicStrategy::Bda2 | BasicStrategy::Bda3 => resources
            .embeddings
            .as_ref()
            .is_some_and(|t| !vocabulary_sources(&tokens, t).is_empty()),
    }
}

/// Applies one basic strategy to a single sample.
pub fn augment_sample(
    sample: &Sample,
    strategy: BasicStrategy,
    resources: &AugmentationResources,
    rng: &mut SeededRng,
) -> Result<Sample, AugmentError> {
    let policy = &resources.policy;
    match strategy {
        BasicStrategy::Bda1 => {
            let lex = resources
                .lexicon
                .as_ref()
                .ok_or(AugmentError::MissingResource(strategy, "synonym lexicon"))?;
            synonym_replace(sample, lex, policy, rng)
        }
        BasicStrategy::Bda2 | BasicStrategy::Bda3 => {
            let table = resources
                .embeddings
                .as_ref()
                .ok_or(AugmentError::MissingResource(strategy, "embedding table"))?;
            if strategy == BasicStrategy::Bda2 {
                random_insert(sample, table, policy, rng)
            } else {
                contextual_insert(sample, table, policy, rng)
            }
        }
    }
}

/// Grows each class to its target count with synthetic samples.
///
/// Sources are the class's true samples, visited round-robin over a seeded
/// shuffle; copy `j` of a source uses a generator seeded from
/// `(seed, source id, j)`, so the output does not depend on scheduling.
pub fn augment_to_target(
    train: &Dataset,
    strategy: BasicStrategy,
    target: &BTreeMap<String, usize>,
    resources: &AugmentationResources,
    seed: u64,
) -> Result<Dataset, AugmentError> {
    resources.policy.validate()?;
    let current = class_counts(train);
    let mut jobs: Vec<(&Sample, usize)> = Vec::new();
    for class in &train.schema().classes {
        let have = current.get(class).copied().unwrap_or(0);
        let want = target.get(class).copied().unwrap_or(have);
        if want < have {
            return Err(AugmentError::TargetBelowCurrent {
                class: class.clone(),
                current: have,
                target: want,
            });
        }
        let need = want - have;
        if need == 0 {
            continue;
        }
        let mut sources: Vec<&Sample> = train
            .samples()
            .iter()
            .filter(|s| s.label == *class && s.origin.is_true())
            .filter(|s| is_augmentable(s, strategy, resources))
            .collect();
        if sources.is_empty() {
            if resources.lexicon.is_none() && strategy == BasicStrategy::Bda1 {
                return Err(AugmentError::MissingResource(strategy, "synonym lexicon"));
            }
            if resources.embeddings.is_none() && strategy != BasicStrategy::Bda1 {
                return Err(AugmentError::MissingResource(strategy, "embedding table"));
            }
            return Err(AugmentError::NoSources(class.clone()));
        }
        let mut rng = derive_rng(seed, &["augment", strategy.tag(), class]);
        sources.shuffle(&mut rng);
        jobs.extend((0..need).map(|j| (sources[j % sources.len()], j / sources.len())));
    }

    let synthetic: Vec<Sample> = jobs
        .par_iter()
        .map(|&(source, copy)| {
            let copy_label = copy.to_string();
            let mut rng = derive_rng(seed, &[strategy.tag(), &source.id, &copy_label]);
            augment_sample(source, strategy, resources, &mut rng).map(|mut s| {
                s.id = format!("{}~{}~{}", source.id, strategy.tag(), copy);
                s
            })
        })
        .collect::<Result<_, _>>()?;
    let step = format!("augment({strategy},seed={seed})");
    Ok(train.extended(step, synthetic)?)
}
