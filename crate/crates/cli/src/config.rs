//! Declarative run configuration for `augbench grid`.

use std::fs;
use std::path::{Path, PathBuf};

use augbench_core::corpus::IngestFormat;
use augbench_core::generator::GeneratorSettings;
use augbench_core::seed::sha256_hex;
use augbench_core::{ClassSchema, EditPolicy, GridSpec, StrategyKind};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: ClassSchema,
    pub data: DataConfig,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub resources: ResourcesConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Either a presplit `train`/`test` pair of canonical JSONL files, or one
/// `corpus` in any ingest format that gets split here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(default = "default_format")]
    pub format: IngestFormat,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
}

fn default_format() -> IngestFormat {
    IngestFormat::CanonicalJsonl
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourcesConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[serde(default)]
    pub policy: EditPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Http,
    /// Offline template generator; needs `grammar`.
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TransportMode {
    #[default]
    Direct,
    Record,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    #[serde(default)]
    pub backend: Backend,
    #[serde(default)]
    pub mode: TransportMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cassette: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grammar: Option<PathBuf>,
    #[serde(default)]
    pub mock_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requests_per_minute: Option<u32>,
    #[serde(default)]
    pub settings: GeneratorSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_out_dir() }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("augbench-out")
}

impl RunConfig {
    /// Parses, resolves relative paths against the file's directory and
    /// validates.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config `{}`: {e}", path.display())))?;
        let mut config = Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.resolve_paths(&base);
        config.validate()?;
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.data.train, &mut self.data.test, &mut self.data.corpus]
            .into_iter()
            .chain([&mut self.resources.lexicon, &mut self.resources.embeddings])
            .flatten()
        {
            fix(p);
        }
        if let Some(g) = &mut self.generator {
            g.cassette.iter_mut().chain(g.grammar.iter_mut()).for_each(fix);
        }
        fix(&mut self.output.dir);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.schema.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.grid.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.resources.policy.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let d = &self.data;
        match (&d.train, &d.test, &d.corpus) {
            (Some(_), Some(_), None) => {}
            (None, None, Some(_)) => {
                if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
                    return bad(format!("data.test_fraction must lie in (0, 1), got {}", d.test_fraction));
                }
            }
            _ => return bad("data needs either `train` and `test`, or `corpus`".into()),
        }
        for p in [&d.train, &d.test, &d.corpus, &self.resources.lexicon, &self.resources.embeddings]
            .into_iter()
            .flatten()
        {
            require_exists(p)?;
        }

        let kinds: Vec<StrategyKind> = self.grid.strategies.iter().map(|s| s.kind).collect();
        if kinds.contains(&StrategyKind::Bda1) && self.resources.lexicon.is_none() {
            return bad("strategy bda1 needs resources.lexicon".into());
        }
        if kinds.iter().any(|k| matches!(k, StrategyKind::Bda2 | StrategyKind::Bda3)) && self.resources.embeddings.is_none() {
            return bad("strategies bda2 and bda3 need resources.embeddings".into());
        }
        if kinds.iter().any(|k| k.generator().is_some()) {
            let Some(g) = &self.generator else {
                return bad("generator strategies need a [generator] section".into());
            };
            for leaf in self.schema.leaves() {
                if !self.schema.prompt_templates.contains_key(&leaf) {
                    return bad(format!("schema.prompt_templates has no prompt for leaf class `{leaf}`"));
                }
            }
            g.validate()?;
        }
        Ok(())
    }

    /// sha256 of the canonical JSON form with file locations left out, so
    /// moving a run directory keeps the digest. File contents are digested
    /// separately in the manifest.
    pub fn digest(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        let strip = |v: &mut serde_json::Value, section: &str, keys: &[&str]| {
            if let Some(obj) = v.get_mut(section).and_then(serde_json::Value::as_object_mut) {
                for k in keys {
                    obj.remove(*k);
                }
            }
        };
        strip(&mut value, "data", &["train", "test", "corpus"]);
        strip(&mut value, "resources", &["lexicon", "embeddings"]);
        strip(&mut value, "generator", &["cassette", "grammar"]);
        if let Some(obj) = value.as_object_mut() {
            obj.remove("output");
        }
        sha256_hex(value.to_string().as_bytes())
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.settings.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if matches!(self.mode, TransportMode::Record | TransportMode::Replay) && self.cassette.is_none() {
            return Err(CliError::Config("generator.mode record/replay needs generator.cassette".into()));
        }
        if self.mode == TransportMode::Replay {
            require_exists(self.cassette.as_ref().expect("checked above"))?;
        }
        if self.backend == Backend::Mock && self.mode != TransportMode::Replay {
            match &self.grammar {
                Some(g) => require_exists(g)?,
                None => return Err(CliError::Config("generator.backend = \"mock\" needs generator.grammar".into())),
            }
        }
        Ok(())
    }
}

fn require_exists(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Config(format!("`{}` does not exist", path.display())))
    }
}
