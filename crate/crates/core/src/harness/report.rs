use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::grid::{trial_seed, truncation_seed, CellStatus, GridReport};

pub const CELLS_FILE: &str = "cells.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const GAPS_FILE: &str = "gaps.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Run context recorded in the manifest alongside the grid itself.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestExtra {
    pub config_digest: Option<String>,
    pub inputs: BTreeMap<String, String>,
    pub notes: BTreeMap<String, String>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()
}

/// Writes cell-level, summary, gap and comparison CSVs plus the full report
/// and a manifest. Output depends only on the report, so re-emitting is
/// byte-identical.
pub fn emit_report(report: &GridReport, dir: &Path, extra: &ManifestExtra) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let path = |f: &str| dir.join(f);

    write_csv(
        &path(CELLS_FILE),
        &["strategy", "retention", "trial", "seed", "tp", "fp", "fn", "tn", "precision", "recall", "f1"],
        report
            .results
            .iter()
            .map(|r| {
                vec![
                    r.strategy.clone(),
                    r.retention.to_string(),
                    r.trial.to_string(),
                    r.seed.to_string(),
                    r.confusion.tp.to_string(),
                    r.confusion.fp.to_string(),
                    r.confusion.fn_.to_string(),
                    r.confusion.tn.to_string(),
                    r.scores.precision.to_string(),
                    r.scores.recall.to_string(),
                    r.scores.f1.to_string(),
                ]
            })
            .collect(),
    )?;

    write_csv(
        &path(SUMMARY_FILE),
        &["strategy", "retention", "status", "trials", "mean_f1", "std_f1", "gap_to_best", "best", "note"],
        report
            .cells
            .iter()
            .map(|c| {
                vec![
                    c.strategy.clone(),
                    c.retention.to_string(),
                    c.status.label().to_string(),
                    c.trials.to_string(),
                    opt(c.mean_f1),
                    opt(c.std_f1),
                    opt(c.gap_to_best),
                    c.is_best.to_string(),
                    c.status.reason().to_string(),
                ]
            })
            .collect(),
    )?;

    write_csv(
        &path(GAPS_FILE),
        &["strategy", "average_gap_to_best"],
        report.gaps.iter().map(|g| vec![g.strategy.clone(), opt(g.average_gap)]).collect(),
    )?;

    let kinds: BTreeMap<&str, bool> = report
        .spec
        .strategies
        .iter()
        .map(|s| (s.name.as_str(), s.kind.generator().is_some()))
        .collect();
    let mut comparison = Vec::new();
    for &retention in &report.spec.retentions {
        let means = |gen: bool| {
            report
                .cells
                .iter()
                .filter(|c| c.retention == retention && kinds.get(c.strategy.as_str()) == Some(&gen))
                .filter_map(|c| c.mean_f1)
                .collect::<Vec<_>>()
        };
        let lowest_gen = means(true).into_iter().reduce(f64::min);
        let highest_other = means(false).into_iter().reduce(f64::max);
        if let (Some(g), Some(o)) = (lowest_gen, highest_other) {
            comparison.push(vec![retention.to_string(), g.to_string(), o.to_string(), (g - o).to_string()]);
        }
    }
    write_csv(
        &path(COMPARISON_FILE),
        &["retention", "lowest_generator_f1", "highest_other_f1", "difference"],
        comparison,
    )?;

    let mut report_json = serde_json::to_string_pretty(report).map_err(io::Error::other)?;
    report_json.push('\n');
    fs::write(path(REPORT_FILE), report_json)?;

    let mut manifest = serde_json::to_string_pretty(&manifest(report, extra)).map_err(io::Error::other)?;
    manifest.push('\n');
    fs::write(path(MANIFEST_FILE), manifest)?;

    Ok([CELLS_FILE, SUMMARY_FILE, GAPS_FILE, COMPARISON_FILE, REPORT_FILE, MANIFEST_FILE]
        .iter()
        .map(|f| path(f))
        .collect())
}

fn manifest(report: &GridReport, extra: &ManifestExtra) -> serde_json::Value {
    let spec = &report.spec;
    let mut seeds = Vec::new();
    for s in &spec.strategies {
        for &retention in &spec.retentions {
            for trial in 0..report.trials {
                seeds.push(json!({
                    "strategy": s.name,
                    "retention": retention,
                    "trial": trial,
                    "truncation_seed": truncation_seed(spec.master_seed, retention, trial),
                    "seed": trial_seed(spec.master_seed, s.kind, retention, trial),
                }));
            }
        }
    }
    let generator: Vec<_> = report.results.iter().filter_map(|r| r.generator.as_ref()).collect();
    let sum = |f: fn(&&super::grid::GeneratorTrialInfo) -> Decimal| generator.iter().map(f).sum::<Decimal>().normalize();
    let annotations: Vec<_> = report
        .cells
        .iter()
        .filter(|c| c.status != CellStatus::Available)
        .map(|c| json!({"strategy": c.strategy, "retention": c.retention, "status": c.status.label(), "reason": c.status.reason()}))
        .collect();
    json!({
        "tool": "augbench",
        "version": env!("CARGO_PKG_VERSION"),
        "config_digest": extra.config_digest,
        "master_seed": spec.master_seed,
        "trials": report.trials,
        "retentions": spec.retentions,
        "strategies": spec.strategies,
        "classifier": spec.classifier,
        "minimum_train_size": spec.minimum_train_size,
        "refill_fraction": spec.refill_fraction,
        "seeds": seeds,
        "cost": {
            "finetune_tokens": generator.iter().map(|g| g.finetune_tokens).sum::<u64>(),
            "finetune_total": sum(|g| g.finetune_cost),
            "generation_tokens": generator.iter().map(|g| g.generation_tokens).sum::<u64>(),
            "generation_total": sum(|g| g.generation_cost),
        },
        "annotations": annotations,
        "inputs": extra.inputs,
        "notes": extra.notes,
    })
}

pub fn read_report(dir: &Path) -> io::Result<GridReport> {
    let text = fs::read_to_string(dir.join(REPORT_FILE))?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
