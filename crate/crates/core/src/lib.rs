//! Dataset augmentation benchmarks for imbalanced security text
//! classification.
//!
//! Truncate the positive class, grow it back with basic edit-based
//! augmentation or with samples from a fine-tuned generator, and compare
//! lightweight classifiers across a seeded grid of retentions and trials.

pub mod apportion;
pub mod augment;
pub mod classify;
pub mod corpus;
pub mod generator;
pub mod harness;
pub mod seed;
pub mod synthetic;

pub use augment::{AugmentationResources, BasicStrategy, EditPolicy, EmbeddingTable, SynonymLexicon};
pub use classify::ClassifierSpec;
pub use corpus::{ClassSchema, Dataset, Origin, Provenance, Sample, TruncationMode, TruncationSpec};
pub use generator::{CostEstimate, FineTuneStrategy, GenerationParams, PromptCompletion, Transport};
pub use harness::{EvalResult, GridReport, GridSpec, StrategyEntry, StrategyKind};
