//! Labeled text corpora: canonical records, ingestion adapters, stratified
//! splitting and imbalance-aware truncation.

mod ingest;
mod schema;
mod truncate;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use ingest::{ingest, IngestFormat};
pub use schema::ClassSchema;
pub use truncate::{split, truncate, truncation_order, TruncationMode, TruncationSpec};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read `{path}`: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("no parseable rows in `{0}`")]
    NoRows(PathBuf),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("cannot stratify: leaf class `{0}` has fewer than 2 samples")]
    TooFewToStratify(String),
    #[error("retention {retention} keeps zero samples of positive class `{class}`")]
    RetentionTooSmall { retention: f64, class: String },
    #[error("invalid truncation spec: {0}")]
    InvalidSpec(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed record on line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Where a sample came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Origin {
    True,
    /// Produced by the augmentation strategy with the given tag.
    Synthetic(String),
}

impl Origin {
    pub fn is_true(&self) -> bool {
        matches!(self, Origin::True)
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::True => f.write_str("true"),
            Origin::Synthetic(tag) => write!(f, "synthetic:{tag}"),
        }
    }
}

impl FromStr for Origin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "true" => Ok(Origin::True),
            _ => match s.strip_prefix("synthetic:") {
                Some(tag) if !tag.is_empty() => Ok(Origin::Synthetic(tag.to_string())),
                _ => Err(format!("unknown origin `{s}`")),
            },
        }
    }
}

impl Serialize for Origin {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Origin {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn default_origin() -> Origin {
    Origin::True
}

/// One labeled text record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub id: String,
    pub text: String,
    pub label: String,
    #[serde(default)]
    pub subclass: Option<String>,
    #[serde(default = "default_origin")]
    pub origin: Origin,
    /// Id of the true sample a synthetic sample was derived from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Sample {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label: label.into(),
            subclass: None,
            origin: Origin::True,
            source: None,
        }
    }

    pub fn with_subclass(mut self, subclass: impl Into<String>) -> Self {
        self.subclass = Some(subclass.into());
        self
    }

    /// The most specific class of the sample.
    pub fn leaf(&self) -> &str {
        self.subclass.as_deref().unwrap_or(&self.label)
    }
}

/// Free-form lineage metadata carried with a dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default)]
    pub source: Option<String>,
    /// Operations applied so far, oldest first, e.g. `truncate(disp,0.03,seed=7)`.
    #[serde(default)]
    pub lineage: Vec<String>,
    /// Input rows dropped during ingestion.
    #[serde(default)]
    pub skipped_rows: usize,
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
}

impl Provenance {
    pub fn derived(&self, step: impl Into<String>) -> Self {
        let mut next = self.clone();
        next.lineage.push(step.into());
        next
    }
}

/// An immutable collection of samples conforming to a [`ClassSchema`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: ClassSchema,
    samples: Vec<Sample>,
    provenance: Provenance,
}

impl Dataset {
    /// Builds a dataset, checking id uniqueness, non-empty text and label
    /// membership.
    pub fn new(
        schema: ClassSchema,
        samples: Vec<Sample>,
        provenance: Provenance,
    ) -> Result<Self, CorpusError> {
        let mut ids = HashSet::with_capacity(samples.len());
        for sample in &samples {
            check_sample(&schema, sample).map_err(CorpusError::Invalid)?;
            if !ids.insert(sample.id.as_str()) {
                return Err(CorpusError::Invalid(format!("duplicate sample id `{}`", sample.id)));
            }
        }
        Ok(Self {
            schema,
            samples,
            provenance,
        })
    }

    pub fn empty(schema: ClassSchema) -> Self {
        Self {
            schema,
            samples: Vec::new(),
            provenance: Provenance::default(),
        }
    }

    pub fn schema(&self) -> &ClassSchema {
        &self.schema
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.samples.iter().map(|s| s.id.as_str())
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Keeps the samples accepted by `keep`, preserving order.
    pub fn filter(&self, step: impl Into<String>, keep: impl Fn(&Sample) -> bool) -> Self {
        Self {
            schema: self.schema.clone(),
            samples: self.samples.iter().filter(|s| keep(s)).cloned().collect(),
            provenance: self.provenance.derived(step),
        }
    }

    /// Appends samples, re-checking the dataset invariants.
    pub fn extended(
        &self,
        step: impl Into<String>,
        extra: impl IntoIterator<Item = Sample>,
    ) -> Result<Self, CorpusError> {
        let mut samples = self.samples.clone();
        samples.extend(extra);
        Dataset::new(self.schema.clone(), samples, self.provenance.derived(step))
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Writes the canonical line-delimited form.
    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> io::Result<()> {
        for sample in &self.samples {
            serde_json::to_writer(&mut writer, sample)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()
    }

    /// Reads canonical line-delimited records strictly: any bad line is an
    /// error. Use [`ingest`] for the lenient, row-skipping path.
    pub fn read_jsonl<R: BufRead>(reader: R, schema: ClassSchema) -> Result<Self, CorpusError> {
        let mut samples = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let sample: Sample = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            samples.push(sample);
        }
        Dataset::new(schema, samples, Provenance::default())
    }
}

pub(crate) fn check_sample(schema: &ClassSchema, sample: &Sample) -> Result<(), String> {
    if sample.id.is_empty() {
        return Err("empty sample id".into());
    }
    if sample.text.trim().is_empty() {
        return Err(format!("sample `{}` has empty text", sample.id));
    }
    if !schema.contains_class(&sample.label) {
        return Err(format!(
            "sample `{}` has label `{}` outside the schema",
            sample.id, sample.label
        ));
    }
    if let Some(sub) = &sample.subclass {
        if !schema.is_child(&sample.label, sub) {
            return Err(format!(
                "sample `{}` has subclass `{sub}` that is not a child of `{}`",
                sample.id, sample.label
            ));
        }
    }
    Ok(())
}

/// Per-class sample counts (primary classes only).
pub fn class_counts(dataset: &Dataset) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for sample in dataset.samples() {
        *counts.entry(sample.label.clone()).or_insert(0) += 1;
    }
    counts
}

/// Per-leaf-class counts: subclasses where present, otherwise the class.
pub fn leaf_counts(dataset: &Dataset) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for sample in dataset.samples() {
        *counts.entry(sample.leaf().to_string()).or_insert(0) += 1;
    }
    counts
}
