use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{CorpusError, Dataset};
use crate::apportion::sequential_order;
use crate::seed::derive_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TruncationMode {
    /// Same retention applied to every class.
    #[serde(rename = "prop", alias = "proportionate")]
    Proportionate,
    /// Retention applied to the positive class only.
    #[serde(rename = "disp", alias = "disproportionate")]
    Disproportionate,
}

impl fmt::Display for TruncationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TruncationMode::Proportionate => "prop",
            TruncationMode::Disproportionate => "disp",
        })
    }
}

impl FromStr for TruncationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prop" | "proportionate" => Ok(Self::Proportionate),
            "disp" | "disproportionate" => Ok(Self::Disproportionate),
            other => Err(format!("unknown truncation mode `{other}`")),
        }
    }
}

/// How much of the original data to keep, and how.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationSpec {
    /// Fraction of original data retained, in `(0, 1]`.
    pub retention: f64,
    pub mode: TruncationMode,
    pub seed: u64,
}

impl TruncationSpec {
    pub fn new(retention: f64, mode: TruncationMode, seed: u64) -> Self {
        Self { retention, mode, seed }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if !(self.retention > 0.0 && self.retention <= 1.0) {
            return Err(CorpusError::InvalidSpec(format!(
                "retention must lie in (0, 1], got {}",
                self.retention
            )));
        }
        Ok(())
    }

    /// Number of samples kept out of `count` when the retention applies.
    pub fn keep_count(&self, count: usize) -> usize {
        // f64::round rounds half away from zero
        ((self.retention * count as f64).round() as usize).min(count)
    }
}

/// Ordering of one class's samples (indices into `dataset.samples()`) used
/// by truncation: keeping the first `k` entries is a subclass-stratified,
/// seeded uniform draw of size `k`, and shorter prefixes nest in longer ones.
pub fn truncation_order(dataset: &Dataset, class: &str, seed: u64) -> Vec<usize> {
    let schema = dataset.schema();
    let mut groups: BTreeMap<usize, (String, Vec<usize>)> = BTreeMap::new();
    let leaves = schema.leaves();
    for (i, sample) in dataset.samples().iter().enumerate() {
        if sample.label != class {
            continue;
        }
        let leaf = sample.leaf();
        let rank = leaves.iter().position(|l| l == leaf).unwrap_or(usize::MAX);
        groups
            .entry(rank)
            .or_insert_with(|| (leaf.to_string(), Vec::new()))
            .1
            .push(i);
    }
    let mut members: Vec<Vec<usize>> = groups
        .into_values()
        .map(|(leaf, mut idx)| {
            let mut rng = derive_rng(seed, &["truncate", class, &leaf]);
            idx.shuffle(&mut rng);
            idx
        })
        .collect();
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let mut cursors = vec![0usize; members.len()];
    sequential_order(&sizes)
        .into_iter()
        .map(|g| {
            let i = cursors[g];
            cursors[g] += 1;
            std::mem::take(&mut members[g][i])
        })
        .collect()
}

/// Removes data per the truncation spec. Disproportionate mode keeps every
/// non-positive sample; proportionate mode truncates every class.
pub fn truncate(train: &Dataset, spec: &TruncationSpec) -> Result<Dataset, CorpusError> {
    spec.validate()?;
    if train.is_empty() {
        return Err(CorpusError::Invalid("cannot truncate an empty dataset".into()));
    }
    let schema = train.schema();
    let mut keep: HashSet<usize> = HashSet::new();
    for class in &schema.classes {
        let order = truncation_order(train, class, spec.seed);
        let is_positive = *class == schema.positive;
        let k = match spec.mode {
            TruncationMode::Disproportionate if !is_positive => order.len(),
            _ => spec.keep_count(order.len()),
        };
        if is_positive && k == 0 {
            return Err(CorpusError::RetentionTooSmall {
                retention: spec.retention,
                class: class.clone(),
            });
        }
        keep.extend(order.into_iter().take(k));
    }
    let step = format!(
        "truncate({},{},seed={})",
        spec.mode, spec.retention, spec.seed
    );
    let samples = train.samples();
    let kept = samples
        .iter()
        .enumerate()
        .filter(|(i, _)| keep.contains(i))
        .map(|(_, s)| s.clone())
        .collect();
    Dataset::new(schema.clone(), kept, train.provenance().derived(step))
}

/// Stratified split by leaf class into `(train, test)`.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), CorpusError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CorpusError::InvalidSpec(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, sample) in dataset.samples().iter().enumerate() {
        groups.entry(sample.leaf()).or_default().push(i);
    }
    let mut test_idx = HashSet::new();
    for (leaf, mut idx) in groups {
        if idx.len() < 2 {
            return Err(CorpusError::TooFewToStratify(leaf.to_string()));
        }
        let mut rng = derive_rng(seed, &["split", leaf]);
        idx.shuffle(&mut rng);
        let n_test = ((test_fraction * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        test_idx.extend(idx.into_iter().take(n_test));
    }
    let tag = format!("{test_fraction},seed={seed}");
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, s) in dataset.samples().iter().enumerate() {
        if test_idx.contains(&i) {
            test.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    let schema = dataset.schema().clone();
    Ok((
        Dataset::new(schema.clone(), train, dataset.provenance().derived(format!("split-train({tag})")))?,
        Dataset::new(schema, test, dataset.provenance().derived(format!("split-test({tag})")))?,
    ))
}
