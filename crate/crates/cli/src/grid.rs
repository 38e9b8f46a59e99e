//! `grid` and `report` subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use augbench_core::corpus::{ingest, split};
use augbench_core::harness::{emit_report, CellStatus, read_report, run_grid, GeneratorBackend, StrategyResources};
use augbench_core::harness::ManifestExtra;
use augbench_core::{Dataset, GridReport};

use crate::commands::load_resources;
use crate::config::{RunConfig, TransportMode};
use crate::error::CliError;
use crate::files::{read_dataset, tree_digest};
use crate::transport::{build_transport, TransportSpec};
use crate::{GridArgs, ReportArgs};

fn load_data(config: &RunConfig) -> Result<(Dataset, Dataset), CliError> {
    let d = &config.data;
    match (&d.train, &d.test, &d.corpus) {
        (Some(train), Some(test), _) => Ok((read_dataset(train, &config.schema)?, read_dataset(test, &config.schema)?)),
        (_, _, Some(corpus)) => {
            let all = ingest(d.format, corpus, &config.schema)?;
            Ok(split(&all, d.test_fraction, d.split_seed)?)
        }
        _ => Err(CliError::Config("data needs either `train` and `test`, or `corpus`".into())),
    }
}

fn input_digests(config: &RunConfig) -> Result<BTreeMap<String, String>, CliError> {
    let mut inputs = BTreeMap::new();
    let d = &config.data;
    let r = &config.resources;
    let mut named = vec![("train", &d.train), ("test", &d.test), ("corpus", &d.corpus), ("lexicon", &r.lexicon), ("embeddings", &r.embeddings)];
    if let Some(g) = &config.generator {
        named.push(("grammar", &g.grammar));
        if g.mode == TransportMode::Replay {
            named.push(("cassette", &g.cassette));
        }
    }
    for (name, path) in named {
        if let Some(p) = path {
            inputs.insert(name.to_string(), tree_digest(p)?);
        }
    }
    Ok(inputs)
}

fn notes(config: &RunConfig, train: &Dataset, test: &Dataset) -> BTreeMap<String, String> {
    let mut notes = BTreeMap::from([
        ("train_size".to_string(), train.len().to_string()),
        ("test_size".to_string(), test.len().to_string()),
    ]);
    if config.data.corpus.is_some() {
        notes.insert(
            "split".into(),
            format!("stratified test_fraction={} seed={}", config.data.test_fraction, config.data.split_seed),
        );
    }
    if let Some(g) = &config.generator {
        let s = &g.settings;
        notes.insert("generator.backend".into(), format!("{:?}", g.backend).to_lowercase());
        notes.insert("generator.mode".into(), format!("{:?}", g.mode).to_lowercase());
        notes.insert("generator.engine".into(), s.finetune.engine.clone());
        match &s.params {
            Some(p) => {
                notes.insert("generator.temperature".into(), p.temperature.to_string());
                notes.insert("generator.max_tokens".into(), p.max_tokens.to_string());
            }
            None => {
                notes.insert("generator.max_tokens".into(), "p95 of fine-tune completion tokens".into());
            }
        }
        notes.insert("postprocess.dedup".into(), s.postprocess.dedup.to_string());
        notes.insert("postprocess.max_chars".into(), s.postprocess.max_chars.to_string());
    }
    notes
}

pub fn grid(a: GridArgs) -> Result<(), CliError> {
    let mut config = RunConfig::load(&a.config)?;
    if let Some(t) = a.trials {
        config.grid.trials = Some(t);
    }
    if let Some(s) = a.master_seed {
        config.grid.master_seed = s;
    }
    if let Some(out) = a.out {
        config.output.dir = out;
    }
    if a.mode.is_some() || a.cassette.is_some() {
        let g = config
            .generator
            .as_mut()
            .ok_or_else(|| CliError::Usage("--mode and --cassette need a [generator] section".into()))?;
        if let Some(m) = a.mode {
            g.mode = m;
        }
        if let Some(c) = a.cassette {
            g.cassette = Some(c);
        }
    }
    if a.jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    config.validate()?;

    let (train, test) = load_data(&config)?;
    let augmentation = load_resources(
        config.resources.lexicon.as_deref(),
        config.resources.embeddings.as_deref(),
        config.resources.policy,
    )?;
    let uses_generator = config.grid.strategies.iter().any(|s| s.kind.generator().is_some());
    let generator = match (&config.generator, uses_generator) {
        (Some(g), true) => {
            let spec = TransportSpec {
                backend: g.backend,
                mode: g.mode,
                cassette: g.cassette.as_deref(),
                grammar: g.grammar.as_deref(),
                mock_seed: g.mock_seed,
                requests_per_minute: g.requests_per_minute,
            };
            let mut settings = g.settings.clone();
            if let Ok(engine) = std::env::var(augbench_core::generator::http::ENV_ENGINE) {
                if !engine.is_empty() {
                    settings.finetune.engine = engine;
                }
            }
            Some(GeneratorBackend { transport: build_transport(&spec, &config.schema)?, settings })
        }
        _ => None,
    };
    let extra = ManifestExtra {
        config_digest: Some(config.digest()),
        inputs: input_digests(&config)?,
        notes: notes(&config, &train, &test),
    };
    let resources = StrategyResources { augmentation, generator };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?;
    let report = pool.install(|| run_grid(&config.grid, &train, &test, &resources, None))?;
    // releases the cassette lock before the report is written
    drop(resources);

    let files = emit_report(&report, &config.output.dir, &extra)?;
    print!("{}", render_summary(&report));
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

pub fn report(a: ReportArgs) -> Result<(), CliError> {
    let report = read_report(&a.dir).map_err(|e| CliError::Data(format!("cannot read report in `{}`: {e}", a.dir.display())))?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        print!("{}", render_summary(&report));
    }
    Ok(())
}

/// Mean F1 per strategy and retention plus the average gap to best, one
/// row per strategy. `*` marks the best strategy at a retention.
pub fn render_summary(report: &GridReport) -> String {
    let mut out = String::new();
    let width = report.spec.strategies.iter().map(|s| s.name.len()).max().unwrap_or(8).max(8);
    let _ = write!(out, "{:width$}", "strategy");
    for r in &report.spec.retentions {
        let _ = write!(out, " {:>8}", format!("{}%", r * 100.0));
    }
    let _ = writeln!(out, " {:>8}", "gap");
    for s in &report.spec.strategies {
        let _ = write!(out, "{:width$}", s.name);
        for &r in &report.spec.retentions {
            let cell = match report.cell(&s.name, r) {
                Some(c) => match c.mean_f1 {
                    Some(m) => format!("{:.3}{}", m, if c.is_best { "*" } else { " " }),
                    None if c.status == CellStatus::Available => "-".into(),
                    None if matches!(c.status, CellStatus::Unavailable(_)) => "n/a".into(),
                    None => "failed".into(),
                },
                None => "-".into(),
            };
            let _ = write!(out, " {cell:>8}");
        }
        let gap = report.gap(&s.name).map_or("-".to_string(), |g| format!("{g:.2}"));
        let _ = writeln!(out, " {gap:>8}");
    }
    out
}
