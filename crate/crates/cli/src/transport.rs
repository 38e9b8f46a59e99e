//! Builds the generator transport for a backend and record/replay mode.

use std::path::Path;
use std::sync::Arc;

use augbench_core::generator::{HttpConfig, HttpTransport, MockGenerator, RecordingTransport, ReplayTransport};
use augbench_core::synthetic::TemplateGrammar;
use augbench_core::{ClassSchema, Transport};

use crate::config::{Backend, TransportMode};
use crate::error::CliError;
use crate::files::read_structured;

pub struct TransportSpec<'a> {
    pub backend: Backend,
    pub mode: TransportMode,
    pub cassette: Option<&'a Path>,
    pub grammar: Option<&'a Path>,
    pub mock_seed: u64,
    pub requests_per_minute: Option<u32>,
}

fn transport_err(e: impl std::fmt::Display) -> CliError {
    CliError::Transport(e.to_string())
}

pub fn build_transport(spec: &TransportSpec<'_>, schema: &ClassSchema) -> Result<Arc<dyn Transport>, CliError> {
    let cassette = || spec.cassette.ok_or_else(|| CliError::Config("record and replay modes need a cassette".into()));
    if spec.mode == TransportMode::Replay {
        let path = cassette()?;
        if !path.exists() {
            return Err(CliError::Config(format!("cassette `{}` does not exist", path.display())));
        }
        return Ok(Arc::new(ReplayTransport::open(path).map_err(transport_err)?));
    }
    let inner: Arc<dyn Transport> = match spec.backend {
        Backend::Http => {
            let mut config = HttpConfig::from_env().map_err(|e| CliError::Config(e.to_string()))?;
            if let Some(rpm) = spec.requests_per_minute {
                config.requests_per_minute = rpm;
            }
            Arc::new(HttpTransport::new(config))
        }
        Backend::Mock => {
            let path = spec
                .grammar
                .ok_or_else(|| CliError::Config("the mock backend needs a template grammar".into()))?;
            let grammar: TemplateGrammar = read_structured(path, "grammar")?;
            grammar.validate()?;
            Arc::new(MockGenerator::new(grammar, schema, spec.mock_seed))
        }
    };
    Ok(match spec.mode {
        TransportMode::Record => Arc::new(RecordingTransport::open(inner, cassette()?).map_err(transport_err)?),
        _ => inner,
    })
}
