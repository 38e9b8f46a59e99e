use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::prompt::DEFAULT_SEPARATOR;
use super::{FineTuneStrategy, GeneratorError};
use crate::corpus::{Dataset, Origin, Sample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostprocessConfig {
    pub separator: String,
    pub stop: Vec<String>,
    pub max_chars: usize,
    pub dedup: bool,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self { separator: DEFAULT_SEPARATOR.to_string(), stop: Vec::new(), max_chars: 1000, dedup: true }
    }
}

/// Stateful filter: remembers fine-tune inputs and kept completions.
#[derive(Debug, Clone)]
pub struct Postprocessor {
    config: PostprocessConfig,
    cut_points: Vec<String>,
    references: HashSet<String>,
    kept: HashSet<String>,
}

impl Postprocessor {
    pub fn new<'a>(config: PostprocessConfig, references: impl IntoIterator<Item = &'a str>) -> Self {
        let mut cut_points: Vec<String> = std::iter::once(&config.separator)
            .chain(&config.stop)
            .flat_map(|s| [s.clone(), s.trim().to_string()])
            .filter(|s| !s.is_empty())
            .collect();
        cut_points.sort();
        cut_points.dedup();
        Self {
            cut_points,
            references: references.into_iter().map(|t| t.trim().to_string()).collect(),
            kept: HashSet::new(),
            config,
        }
    }

    /// Cleans one completion without consulting or updating filter state.
    pub fn clean(&self, raw: &str) -> String {
        let cut = self
            .cut_points
            .iter()
            .filter_map(|p| raw.find(p.as_str()))
            .min()
            .unwrap_or(raw.len());
        let mut text = raw[..cut].trim();
        if let Some((i, _)) = text.char_indices().nth(self.config.max_chars) {
            text = text[..i].trim_end();
        }
        text.to_string()
    }

    /// Returns the cleaned text if it survives every filter.
    pub fn accept(&mut self, raw: &str) -> Option<String> {
        let text = self.clean(raw);
        if text.is_empty() || self.references.contains(&text) {
            return None;
        }
        if self.config.dedup && !self.kept.insert(text.clone()) {
            return None;
        }
        Some(text)
    }
}

/// Turns raw completions into synthetic samples of `class` (a leaf).
pub fn postprocess(
    raw: &[String],
    train: &Dataset,
    class: &str,
    strategy: FineTuneStrategy,
    config: &PostprocessConfig,
) -> Result<Vec<Sample>, GeneratorError> {
    let (label, subclass) = train
        .schema()
        .resolve_leaf(class)
        .ok_or_else(|| GeneratorError::UnknownClass(class.to_string()))?;
    let mut filter = Postprocessor::new(config.clone(), train.samples().iter().map(|s| s.text.as_str()));
    Ok(raw
        .iter()
        .filter_map(|r| filter.accept(r))
        .enumerate()
        .map(|(i, text)| synthetic_sample(format!("{}:{class}:{i}", strategy.tag()), text, &label, subclass.as_deref(), strategy))
        .collect())
}

pub(crate) fn synthetic_sample(
    id: String,
    text: String,
    label: &str,
    subclass: Option<&str>,
    strategy: FineTuneStrategy,
) -> Sample {
    let mut s = Sample::new(id, text, label);
    s.subclass = subclass.map(str::to_string);
    s.origin = Origin::Synthetic(strategy.tag().to_string());
    s
}
