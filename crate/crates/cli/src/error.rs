use std::io;

use augbench_core::augment::AugmentError;
use augbench_core::classify::ClassifyError;
use augbench_core::corpus::CorpusError;
use augbench_core::generator::GeneratorError;
use augbench_core::harness::HarnessError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_DATA: i32 = 4;
pub const EXIT_TRANSPORT: i32 = 5;
pub const EXIT_PROTOCOL: i32 = 6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("adapter protocol error: {0}")]
    Protocol(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Transport(_) => EXIT_TRANSPORT,
            CliError::Protocol(_) => EXIT_PROTOCOL,
            CliError::Other(_) => EXIT_OTHER,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::InvalidSpec(_) | CorpusError::Schema(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<AugmentError> for CliError {
    fn from(e: AugmentError) -> Self {
        match e {
            AugmentError::InvalidPolicy(_) | AugmentError::MissingResource(..) => CliError::Config(e.to_string()),
            AugmentError::Corpus(inner) => inner.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<GeneratorError> for CliError {
    fn from(e: GeneratorError) -> Self {
        match e {
            GeneratorError::Transport(_)
            | GeneratorError::JobFailed { .. }
            | GeneratorError::PollTimeout { .. }
            | GeneratorError::BadResponse(_) => CliError::Transport(e.to_string()),
            GeneratorError::MissingTemplate(_) | GeneratorError::InvalidParams(_) | GeneratorError::UnknownClass(_) => {
                CliError::Config(e.to_string())
            }
            GeneratorError::Corpus(inner) => inner.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ClassifyError> for CliError {
    fn from(e: ClassifyError) -> Self {
        match e {
            ClassifyError::Adapter(_) => CliError::Protocol(e.to_string()),
            ClassifyError::InvalidHyper(_) | ClassifyError::InvalidK { .. } | ClassifyError::NotInProcess => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::InvalidSpec(_) | HarnessError::MissingGenerator(_) => CliError::Config(e.to_string()),
            HarnessError::Corpus(inner) => inner.into(),
            HarnessError::Augment(inner) => inner.into(),
            HarnessError::Generator(inner) => inner.into(),
            HarnessError::Classify(inner) => inner.into(),
        }
    }
}
