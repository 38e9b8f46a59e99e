//! Generator-based augmentation: fine-tune sets, a transport port to a
//! completion endpoint (live, recording, replay, mock), post-processing of
//! completions and cost estimates.

pub mod cassette;
pub mod client;
mod cost;
pub mod http;
pub mod mock;
mod pipeline;
mod postprocess;
mod prompt;
pub mod transport;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cassette::{CassetteEntry, RecordingTransport, ReplayTransport};
pub use client::{generate, submit_finetune, Completions, FineTuneConfig, FineTuneHandle, GenerationParams};
pub use cost::{estimate_cost, estimate_generation_cost, estimate_tokens, CostEstimate};
pub use http::{HttpConfig, HttpTransport};
pub use mock::MockGenerator;
pub use pipeline::{augment_with_generator, GeneratorRun, GeneratorSettings, Pricing};
pub use postprocess::{postprocess, PostprocessConfig, Postprocessor};
pub use prompt::{build_finetune_set, render_prompt, to_upload_jsonl, PromptCompletion, DEFAULT_SEPARATOR, END_SEQUENCE};
pub use transport::{ApiRequest, ApiResponse, Method, RetryPolicy, Transport, TransportError};

use crate::corpus::CorpusError;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("no prompt template for class `{0}`")]
    MissingTemplate(String),
    #[error("class `{0}` is not a leaf of the schema")]
    UnknownClass(String),
    #[error("fine-tune set is empty")]
    EmptyFineTuneSet,
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("fine-tune job {job} ended with status `{status}`")]
    JobFailed { job: String, status: String },
    #[error("fine-tune job {job} still running after {polls} polls")]
    PollTimeout { job: String, polls: u32 },
    #[error("unexpected response: {0}")]
    BadResponse(String),
    #[error("target for class `{class}` is {target}, below the current count {current}")]
    TargetBelowCurrent { class: String, current: usize, target: usize },
    #[error("class `{0}` needs generated samples but has no true samples to fine-tune on")]
    NoSources(String),
    #[error("generation shortfall for `{class}`: kept {got} of {wanted} after all top-up rounds")]
    Shortfall { class: String, wanted: usize, got: usize },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Which samples make up the fine-tune set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FineTuneStrategy {
    /// `gen1`: every retained sample.
    #[serde(rename = "gen1")]
    Disproportionate,
    /// `gen2`: retained positives plus equally truncated negatives.
    #[serde(rename = "gen2")]
    Proportionate,
    /// `gen3`: retained positives only.
    #[serde(rename = "gen3")]
    PositiveOnly,
}

impl FineTuneStrategy {
    pub const ALL: [FineTuneStrategy; 3] = [Self::Disproportionate, Self::Proportionate, Self::PositiveOnly];

    pub fn tag(self) -> &'static str {
        match self {
            Self::Disproportionate => "gen1",
            Self::Proportionate => "gen2",
            Self::PositiveOnly => "gen3",
        }
    }
}

impl fmt::Display for FineTuneStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for FineTuneStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gen1" | "gen1-disproportionate" => Ok(Self::Disproportionate),
            "gen2" | "gen2-proportionate" => Ok(Self::Proportionate),
            "gen3" | "gen3-positive-only" => Ok(Self::PositiveOnly),
            other => Err(format!("unknown fine-tune strategy `{other}` (expected gen1, gen2 or gen3)")),
        }
    }
}
