use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use rust_decimal::Decimal;
use serde::{Deserialize, Deserializer, Serialize};

use super::metrics::{average_gap_to_best, f1, mean_std, Confusion, Scores};
use super::HarnessError;
use crate::augment::{augment_to_target, AugmentationResources, BasicStrategy};
use crate::classify::{train_predict, ClassifierSpec};
use crate::corpus::{class_counts, truncate, Dataset, TruncationMode, TruncationSpec};
use crate::generator::{augment_with_generator, FineTuneStrategy, GeneratorSettings, Transport};
use crate::seed::derive_seed;

/// Dataset construction strategies, declared in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Disp,
    Prop,
    Bda1,
    Bda2,
    Bda3,
    Gen1,
    Gen2,
    Gen3,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 8] = [
        Self::Disp,
        Self::Prop,
        Self::Bda1,
        Self::Bda2,
        Self::Bda3,
        Self::Gen1,
        Self::Gen2,
        Self::Gen3,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Self::Disp => "disp",
            Self::Prop => "prop",
            Self::Bda1 => "bda1",
            Self::Bda2 => "bda2",
            Self::Bda3 => "bda3",
            Self::Gen1 => "gen1",
            Self::Gen2 => "gen2",
            Self::Gen3 => "gen3",
        }
    }

    pub fn basic(self) -> Option<BasicStrategy> {
        match self {
            Self::Bda1 => Some(BasicStrategy::Bda1),
            Self::Bda2 => Some(BasicStrategy::Bda2),
            Self::Bda3 => Some(BasicStrategy::Bda3),
            _ => None,
        }
    }

    pub fn generator(self) -> Option<FineTuneStrategy> {
        match self {
            Self::Gen1 => Some(FineTuneStrategy::Disproportionate),
            Self::Gen2 => Some(FineTuneStrategy::Proportionate),
            Self::Gen3 => Some(FineTuneStrategy::PositiveOnly),
            _ => None,
        }
    }

    fn truncation_mode(self) -> TruncationMode {
        if self == Self::Prop {
            TruncationMode::Proportionate
        } else {
            TruncationMode::Disproportionate
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| format!("unknown strategy `{s}` (expected one of disp, prop, bda1-3, gen1-3)"))
    }
}

/// A strategy as it appears in a grid: a report name and what it runs.
/// Deserializes from a bare kind (`"gen3"`) or `{name, kind}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StrategyEntry {
    pub name: String,
    pub kind: StrategyKind,
}

impl StrategyEntry {
    pub fn new(kind: StrategyKind) -> Self {
        Self { name: kind.tag().to_string(), kind }
    }

    pub fn named(name: impl Into<String>, kind: StrategyKind) -> Self {
        Self { name: name.into(), kind }
    }
}

impl<'de> Deserialize<'de> for StrategyEntry {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Bare(StrategyKind),
            Named { name: String, kind: StrategyKind },
        }
        Ok(match Repr::deserialize(deserializer)? {
            Repr::Bare(kind) => Self::new(kind),
            Repr::Named { name, kind } => Self { name, kind },
        })
    }
}

fn default_retentions() -> Vec<f64> {
    vec![0.01, 0.03, 0.05, 0.10, 0.15, 0.25, 0.36, 0.40]
}

fn default_strategies() -> Vec<StrategyEntry> {
    StrategyKind::ALL.into_iter().map(StrategyEntry::new).collect()
}

fn default_minimum_train_size() -> usize {
    512
}

fn one() -> usize {
    1
}

fn full_refill() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_retentions")]
    pub retentions: Vec<f64>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<StrategyEntry>,
    /// Defaults to 20 for stochastic classifiers and 1 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub classifier: ClassifierSpec,
    #[serde(default = "default_minimum_train_size")]
    pub minimum_train_size: usize,
    #[serde(default = "one")]
    pub min_df: usize,
    /// Fraction of removed positives that augmentation puts back.
    #[serde(default = "full_refill")]
    pub refill_fraction: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            retentions: default_retentions(),
            strategies: default_strategies(),
            trials: None,
            master_seed: 0,
            classifier: ClassifierSpec::default(),
            minimum_train_size: default_minimum_train_size(),
            min_df: 1,
            refill_fraction: 1.0,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidSpec(m));
        if self.retentions.is_empty() {
            return bad("at least one retention is required".into());
        }
        let mut seen = BTreeSet::new();
        for &r in &self.retentions {
            if !(r > 0.0 && r <= 1.0) {
                return bad(format!("retention {r} is outside (0, 1]"));
            }
            if !seen.insert(r.to_bits()) {
                return bad(format!("retention {r} is listed twice"));
            }
        }
        if self.strategies.is_empty() {
            return bad("at least one strategy is required".into());
        }
        let mut names = BTreeSet::new();
        for s in &self.strategies {
            if !names.insert(s.name.as_str()) {
                return bad(format!("strategy name `{}` is listed twice", s.name));
            }
        }
        if self.trials == Some(0) {
            return bad("trials must be at least 1".into());
        }
        if self.min_df == 0 {
            return bad("min_df must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.refill_fraction) {
            return bad(format!("refill_fraction {} is outside [0, 1]", self.refill_fraction));
        }
        Ok(())
    }

    pub fn trial_count(&self) -> usize {
        self.trials.unwrap_or(if self.classifier.is_stochastic() { 20 } else { 1 })
    }
}

/// Live or replayed generator endpoint plus its settings.
#[derive(Clone)]
pub struct GeneratorBackend {
    pub transport: Arc<dyn Transport>,
    pub settings: GeneratorSettings,
}

#[derive(Clone, Default)]
pub struct StrategyResources {
    pub augmentation: AugmentationResources,
    pub generator: Option<GeneratorBackend>,
}

/// Identifies one trial of one (kind, retention) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct TrialKey {
    pub kind: StrategyKind,
    pub retention: usize,
    pub trial: usize,
}

/// Pipeline stages whose inputs an observer can audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Stage {
    Truncate,
    Augment,
    FineTune,
    VectorizerFit,
    ClassifierFit,
    Predict,
}

/// Receives the sample ids handed to each stage.
pub trait StageObserver: Send + Sync {
    fn observe(&self, key: TrialKey, stage: Stage, ids: &[String]);
}

/// Observer that keeps everything it sees.
#[derive(Debug, Default)]
pub struct StageLog {
    events: Mutex<Vec<(TrialKey, Stage, Vec<String>)>>,
}

impl StageLog {
    /// Events sorted by trial and stage.
    pub fn events(&self) -> Vec<(TrialKey, Stage, Vec<String>)> {
        let mut events = self.events.lock().expect("stage log poisoned").clone();
        events.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        events
    }

    /// Every id seen at `stage`.
    pub fn ids_at(&self, stage: Stage) -> BTreeSet<String> {
        let events = self.events.lock().expect("stage log poisoned");
        events.iter().filter(|e| e.1 == stage).flat_map(|e| e.2.iter().cloned()).collect()
    }
}

impl StageObserver for StageLog {
    fn observe(&self, key: TrialKey, stage: Stage, ids: &[String]) {
        self.events.lock().expect("stage log poisoned").push((key, stage, ids.to_vec()));
    }
}

struct NoObserver;

impl StageObserver for NoObserver {
    fn observe(&self, _: TrialKey, _: Stage, _: &[String]) {}
}

/// Generator-side provenance of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorTrialInfo {
    pub model: Option<String>,
    pub finetune_records: usize,
    pub finetune_tokens: u64,
    pub finetune_cost: Decimal,
    pub generation_tokens: u64,
    pub generation_cost: Decimal,
    pub requested: usize,
    pub kept: usize,
    pub retries: u32,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub strategy: String,
    pub kind: StrategyKind,
    pub retention: f64,
    pub trial: usize,
    pub seed: u64,
    pub truncation_seed: u64,
    pub confusion: Confusion,
    pub scores: Scores,
    pub train_size: usize,
    pub synthetic: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorTrialInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialOutcome {
    Evaluated(EvalResult),
    Unavailable(String),
}

fn retention_label(retention: f64) -> String {
    format!("{retention}")
}

/// Seed of the removed-sample selection; shared by every strategy at a
/// given retention and trial.
pub fn truncation_seed(master: u64, retention: f64, trial: usize) -> u64 {
    derive_seed(master, &["truncate", &retention_label(retention), &trial.to_string()])
}

/// Seed for augmentation and classifier fitting of one trial.
pub fn trial_seed(master: u64, kind: StrategyKind, retention: f64, trial: usize) -> u64 {
    derive_seed(master, &["trial", kind.tag(), &retention_label(retention), &trial.to_string()])
}

fn ids(dataset: &Dataset) -> Vec<String> {
    dataset.ids().map(str::to_string).collect()
}

/// Positive class grows back toward its original count; others keep what
/// truncation left.
fn refill_target(original: &Dataset, truncated: &Dataset, fraction: f64) -> BTreeMap<String, usize> {
    let before = class_counts(original);
    let mut target = class_counts(truncated);
    let positive = &original.schema().positive;
    let have = target.get(positive).copied().unwrap_or(0);
    let full = before.get(positive).copied().unwrap_or(0);
    let refill = (fraction * full.saturating_sub(have) as f64).round() as usize;
    target.insert(positive.clone(), have + refill);
    target
}

/// Runs one trial: truncate, augment per strategy, fit on the result and
/// score on `test`. Only `predict` ever sees `test`.
#[allow(clippy::too_many_arguments)]
pub fn run_trial(
    train: &Dataset,
    test: &Dataset,
    kind: StrategyKind,
    retention: f64,
    trial: usize,
    spec: &GridSpec,
    resources: &StrategyResources,
    observer: &dyn StageObserver,
) -> Result<TrialOutcome, HarnessError> {
    let key = TrialKey {
        kind,
        retention: spec.retentions.iter().position(|r| *r == retention).unwrap_or(usize::MAX),
        trial,
    };
    let tseed = truncation_seed(spec.master_seed, retention, trial);
    let seed = trial_seed(spec.master_seed, kind, retention, trial);
    let truncation = TruncationSpec::new(retention, kind.truncation_mode(), tseed);

    observer.observe(key, Stage::Truncate, &ids(train));
    let truncated = truncate(train, &truncation)?;
    if let Some(unavailable) = too_small(truncated.len(), kind, spec) {
        return Ok(unavailable);
    }

    let mut generator_info = None;
    let final_train = if let Some(basic) = kind.basic() {
        observer.observe(key, Stage::Augment, &ids(&truncated));
        let target = refill_target(train, &truncated, spec.refill_fraction);
        augment_to_target(&truncated, basic, &target, &resources.augmentation, seed)?
    } else if let Some(strategy) = kind.generator() {
        let backend = resources.generator.as_ref().ok_or(HarnessError::MissingGenerator(kind))?;
        observer.observe(key, Stage::Augment, &ids(&truncated));
        let target = refill_target(train, &truncated, spec.refill_fraction);
        let run = augment_with_generator(
            &truncated,
            strategy,
            &truncation,
            &target,
            backend.transport.clone(),
            &backend.settings,
            seed,
        )?;
        observer.observe(key, Stage::FineTune, &run.finetune_ids);
        generator_info = Some(GeneratorTrialInfo {
            model: run.handle.as_ref().map(|h| h.model.clone()),
            finetune_records: run.finetune_records,
            finetune_tokens: run.finetune_cost.token_count,
            finetune_cost: run.finetune_cost.total,
            generation_tokens: run.generation_cost.token_count,
            generation_cost: run.generation_cost.total,
            requested: run.requested,
            kept: run.kept,
            retries: run.retries,
            temperature: run.params.temperature,
            max_tokens: run.params.max_tokens,
        });
        run.dataset
    } else {
        truncated
    };
    if let Some(unavailable) = too_small(final_train.len(), kind, spec) {
        return Ok(unavailable);
    }

    let fit_ids = ids(&final_train);
    observer.observe(key, Stage::VectorizerFit, &fit_ids);
    observer.observe(key, Stage::ClassifierFit, &fit_ids);
    observer.observe(key, Stage::Predict, &ids(test));
    let predictions = train_predict(&spec.classifier, &final_train, test, spec.min_df, derive_seed(seed, &["classifier"]))?;
    let confusion = Confusion::from_labels(
        test.samples().iter().map(|s| s.label.as_str()),
        predictions.iter().map(String::as_str),
        &train.schema().positive,
    );
    Ok(TrialOutcome::Evaluated(EvalResult {
        strategy: kind.tag().to_string(),
        kind,
        retention,
        trial,
        seed,
        truncation_seed: tseed,
        scores: f1(&confusion),
        confusion,
        train_size: final_train.len(),
        synthetic: final_train.samples().iter().filter(|s| !s.origin.is_true()).count(),
        generator: generator_info,
    }))
}

fn too_small(size: usize, kind: StrategyKind, spec: &GridSpec) -> Option<TrialOutcome> {
    (size < spec.minimum_train_size).then(|| {
        TrialOutcome::Unavailable(format!(
            "{kind} training set has {size} samples, below the minimum of {}",
            spec.minimum_train_size
        ))
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "lowercase")]
pub enum CellStatus {
    Available,
    Unavailable(String),
    Failed(String),
}

impl CellStatus {
    pub fn label(&self) -> &'static str {
        match self {
            CellStatus::Available => "available",
            CellStatus::Unavailable(_) => "unavailable",
            CellStatus::Failed(_) => "failed",
        }
    }

    pub fn reason(&self) -> &str {
        match self {
            CellStatus::Available => "",
            CellStatus::Unavailable(r) | CellStatus::Failed(r) => r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub strategy: String,
    pub retention: f64,
    pub status: CellStatus,
    pub trials: usize,
    pub mean_f1: Option<f64>,
    pub std_f1: Option<f64>,
    pub gap_to_best: Option<f64>,
    pub is_best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyGap {
    pub strategy: String,
    pub average_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub spec: GridSpec,
    pub trials: usize,
    /// Ordered by strategy (spec order), retention, trial.
    pub results: Vec<EvalResult>,
    /// Ordered by strategy, then retention.
    pub cells: Vec<CellSummary>,
    pub gaps: Vec<StrategyGap>,
}

impl GridReport {
    pub fn cell(&self, strategy: &str, retention: f64) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.strategy == strategy && c.retention == retention)
    }

    pub fn gap(&self, strategy: &str) -> Option<f64> {
        self.gaps.iter().find(|g| g.strategy == strategy).and_then(|g| g.average_gap)
    }
}

/// Runs every (strategy, retention, trial) combination and aggregates.
///
/// Strategies listed twice under different names run once. Generator
/// trials run one at a time, ordered by kind, retention value and trial,
/// so a replayed cassette sees the same request sequence however the spec
/// lists them; everything else runs in parallel. Transport
/// failures abort the grid; other trial errors mark the cell failed.
pub fn run_grid(
    spec: &GridSpec,
    train: &Dataset,
    test: &Dataset,
    resources: &StrategyResources,
    observer: Option<&dyn StageObserver>,
) -> Result<GridReport, HarnessError> {
    spec.validate()?;
    let observer = observer.unwrap_or(&NoObserver);
    let trials = spec.trial_count();
    let kinds: BTreeSet<StrategyKind> = spec.strategies.iter().map(|s| s.kind).collect();
    let keys: Vec<TrialKey> = kinds
        .iter()
        .flat_map(|&kind| {
            (0..spec.retentions.len()).flat_map(move |retention| (0..trials).map(move |trial| TrialKey { kind, retention, trial }))
        })
        .collect();
    let run = |key: &TrialKey| {
        let outcome = run_trial(train, test, key.kind, spec.retentions[key.retention], key.trial, spec, resources, observer);
        (*key, outcome)
    };
    let (mut sequential, parallel): (Vec<TrialKey>, Vec<TrialKey>) = keys.into_iter().partition(|k| k.kind.generator().is_some());
    sequential.sort_by(|a, b| {
        a.kind
            .cmp(&b.kind)
            .then(spec.retentions[a.retention].total_cmp(&spec.retentions[b.retention]))
            .then(a.trial.cmp(&b.trial))
    });
    let mut outcomes: BTreeMap<TrialKey, Result<TrialOutcome, HarnessError>> = parallel.par_iter().map(run).collect();
    outcomes.extend(sequential.iter().map(run));

    let fatal = outcomes.iter().find(|(_, o)| o.as_ref().is_err_and(HarnessError::is_fatal)).map(|(k, _)| *k);
    if let Some(Err(e)) = fatal.and_then(|k| outcomes.remove(&k)) {
        return Err(e);
    }

    let mut results = Vec::new();
    let mut cells = Vec::new();
    for entry in &spec.strategies {
        for (ri, &retention) in spec.retentions.iter().enumerate() {
            let mut f1s = Vec::new();
            let mut status = CellStatus::Available;
            for trial in 0..trials {
                match &outcomes[&TrialKey { kind: entry.kind, retention: ri, trial }] {
                    Ok(TrialOutcome::Evaluated(r)) => {
                        f1s.push(r.scores.f1);
                        results.push(EvalResult { strategy: entry.name.clone(), ..r.clone() });
                    }
                    Ok(TrialOutcome::Unavailable(reason)) => {
                        if status == CellStatus::Available {
                            status = CellStatus::Unavailable(reason.clone());
                        }
                    }
                    Err(e) => {
                        if !matches!(status, CellStatus::Failed(_)) {
                            status = CellStatus::Failed(e.to_string());
                        }
                    }
                }
            }
            let stats = (status == CellStatus::Available).then(|| mean_std(&f1s)).flatten();
            cells.push(CellSummary {
                strategy: entry.name.clone(),
                retention,
                status,
                trials: f1s.len(),
                mean_f1: stats.map(|s| s.0),
                std_f1: stats.map(|s| s.1),
                gap_to_best: None,
                is_best: false,
            });
        }
    }

    // Rank strategies in reporting order (stable for equal kinds) so ties
    // resolve toward the earlier one.
    let mut rank: Vec<usize> = (0..spec.strategies.len()).collect();
    rank.sort_by_key(|&i| spec.strategies[i].kind);
    let n_ret = spec.retentions.len();
    let means: BTreeMap<(usize, usize), f64> = rank
        .iter()
        .enumerate()
        .flat_map(|(pos, &si)| {
            let cells = &cells;
            (0..n_ret).filter_map(move |ri| cells[si * n_ret + ri].mean_f1.map(|m| ((pos, ri), m)))
        })
        .collect();
    let (best, averages) = average_gap_to_best(rank.len(), n_ret, &means);
    for (pos, &si) in rank.iter().enumerate() {
        for ri in 0..n_ret {
            let cell = &mut cells[si * n_ret + ri];
            if let (Some(m), Some(b)) = (cell.mean_f1, best[ri]) {
                cell.gap_to_best = Some(super::metrics::gap_points(means[&(b, ri)], m));
                cell.is_best = b == pos;
            }
        }
    }
    let mut gaps = vec![None; spec.strategies.len()];
    for (pos, &si) in rank.iter().enumerate() {
        gaps[si] = averages[pos];
    }
    let gaps = spec
        .strategies
        .iter()
        .zip(gaps)
        .map(|(s, g)| StrategyGap { strategy: s.name.clone(), average_gap: g })
        .collect();
    Ok(GridReport { spec: spec.clone(), trials, results, cells, gaps })
}
