//! Acceptance gate: one PASS/FAIL line per criterion.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use augbench_core::classify::{fit_tfidf, tokenize, train_knn, train_mnb, LogisticObjective, SparseVector};
use augbench_core::corpus::{class_counts, truncate};
use augbench_core::generator::{build_finetune_set, estimate_cost, estimate_tokens, GeneratorSettings, MockGenerator, Transport, DEFAULT_SEPARATOR};
use augbench_core::harness::{average_gap_to_best, f1, read_report, run_grid, Confusion, GeneratorBackend, Stage, StageLog, StrategyResources};
use augbench_core::seed::rng_from_seed;
use augbench_core::synthetic::{spam_task, synthetic_corpus, synthetic_embeddings, synthetic_lexicon};
use augbench_core::{
    AugmentationResources, ClassSchema, Dataset, FineTuneStrategy, GridSpec, Provenance, PromptCompletion, Sample,
    StrategyEntry, StrategyKind, TruncationMode, TruncationSpec,
};
use rand::Rng;
use rust_decimal::Decimal;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn binary(negative: usize, positive: usize, neg: &str, pos: &str) -> Dataset {
    let schema = ClassSchema::new(&[neg, pos], pos);
    let samples = (0..negative)
        .map(|i| Sample::new(format!("n{i}"), format!("{neg} sample {i}"), neg))
        .chain((0..positive).map(|i| Sample::new(format!("p{i}"), format!("{pos} sample {i}"), pos)))
        .collect();
    Dataset::new(schema, samples, Provenance::default()).unwrap()
}

fn truncation_exactness() -> Outcome {
    let start = Instant::now();
    let reviews = binary(800, 800, "truthful", "deceptive");
    let sms = binary(4827, 747, "ham", "spam");
    let mut seen = Vec::new();
    for (name, data, pos, want) in [("reviews", &reviews, "deceptive", [24, 80]), ("sms", &sms, "spam", [22, 75])] {
        for (x, want) in [0.03, 0.10].into_iter().zip(want) {
            for seed in 0..5 {
                for mode in [TruncationMode::Disproportionate, TruncationMode::Proportionate] {
                    let kept = truncate(data, &TruncationSpec::new(x, mode, seed)).map_err(|e| e.to_string())?;
                    let got = class_counts(&kept)[pos];
                    ensure(got == want, || format!("{name} x={x} {mode} seed={seed}: {got} positives, want {want}"))?;
                }
            }
            seen.push(format!("{name}@{x}={want}"));
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("{} in {elapsed:.2?}", seen.join(" ")))
}

fn finetune_composition() -> Outcome {
    let schema = ClassSchema::new(&["truthful", "deceptive"], "deceptive")
        .with_template("truthful", "A truthful hotel review")
        .with_template("deceptive", "A deceptive hotel review");
    let samples = (0..800)
        .map(|i| Sample::new(format!("t{i}"), format!("plain stay {i}"), "truthful"))
        .chain((0..24).map(|i| Sample::new(format!("d{i}"), format!("dream stay {i}"), "deceptive")))
        .collect();
    let train = Dataset::new(schema, samples, Provenance::default()).unwrap();
    let spec = TruncationSpec::new(0.03, TruncationMode::Disproportionate, 3);
    let mut got = Vec::new();
    for (strategy, want) in FineTuneStrategy::ALL.into_iter().zip([824, 48, 24]) {
        let n = build_finetune_set(&train, strategy, &spec, DEFAULT_SEPARATOR).map_err(|e| e.to_string())?.len();
        ensure(n == want, || format!("{strategy}: {n} records, want {want}"))?;
        got.push(format!("{strategy}={n}"));
    }
    Ok(got.join(" "))
}

fn cost_model() -> Outcome {
    // 1000 records of 400 characters = 100,000 tokens
    let records: Vec<PromptCompletion> = (0..1000)
        .map(|_| PromptCompletion { prompt: String::new(), completion: "x".repeat(400), class: "c".into(), source_id: None })
        .collect();
    let cost = estimate_cost(&records, Decimal::new(3, 3), 4).map_err(|e| e.to_string())?;
    ensure(cost.token_count == 100_000, || format!("{} tokens", cost.token_count))?;
    ensure(cost.total == Decimal::new(120, 2), || format!("total {}", cost.total))?;
    let t = estimate_tokens(&"a".repeat(400));
    ensure(t == 100, || format!("400 characters -> {t} tokens"))?;
    Ok(format!("total {} for {} tokens; 400 chars -> {t} tokens", cost.total, cost.token_count))
}

const DOCS: [(&str, &str); 6] = [
    ("win free cash prize now", "spam"),
    ("free prize claim now now", "spam"),
    ("urgent cash offer win", "spam"),
    ("see you at lunch today", "ham"),
    ("lunch today or dinner", "ham"),
    ("call me when you win", "ham"),
];

fn mnb_oracle() -> Result<f64, String> {
    let docs: Vec<_> = DOCS.iter().map(|(t, _)| tokenize(t)).collect();
    let labels: Vec<&str> = DOCS.iter().map(|(_, l)| *l).collect();
    let vec = fit_tfidf(&docs, 1).map_err(|e| e.to_string())?;
    let vocab = vec.terms();
    let x: Vec<SparseVector> = docs.iter().map(|d| vec.counts(d)).collect();
    let model = train_mnb(&x, &labels, vec.len(), 1.0).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for query in ["win cash now", "lunch today", "free free free lunch", "unseen words only"] {
        let q = tokenize(query);
        // linear-space Bayes over raw token strings
        let mut joint = Vec::new();
        for class in ["ham", "spam"] {
            let toks: Vec<&String> = DOCS
                .iter()
                .zip(&docs)
                .filter(|((_, c), _)| *c == class)
                .flat_map(|(_, d)| d.tokens())
                .collect();
            let n_docs = DOCS.iter().filter(|(_, c)| *c == class).count() as f64;
            let mut p = n_docs / DOCS.len() as f64;
            for t in q.tokens().iter().filter(|t| vocab.contains(t)) {
                let count = toks.iter().filter(|u| **u == t).count() as f64;
                p *= (count + 1.0) / (toks.len() as f64 + vocab.len() as f64);
            }
            joint.push(p);
        }
        let z: f64 = joint.iter().sum();
        for (g, w) in model.posteriors(&vec.counts(&q)).iter().zip(joint.iter().map(|j| j / z)) {
            worst = worst.max((g - w).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("MNB posterior error {worst:e}"))?;
    Ok(worst)
}

fn gradient_oracle() -> Result<f64, String> {
    let mut rng = rng_from_seed(77);
    let d = 5;
    let x: Vec<SparseVector> = (0..25)
        .map(|_| SparseVector::from_entries((0..d as u32).filter(|_| rng.random_bool(0.6)).map(|i| (i, 1.0)).collect::<Vec<_>>().into_iter().map(|(i, _)| (i, rng.random_range(-1.0..1.0)))))
        .collect();
    let y: Vec<f64> = (0..25).map(|_| f64::from(rng.random_bool(0.4))).collect();
    let objective = LogisticObjective { x: &x, y: &y, l2: 1e-3 };
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b = rng.random_range(-1.0..1.0);
        let (gw, gb) = objective.gradient(&w, b);
        let rel = |a: f64, e: f64| (a - e).abs() / a.abs().max(e.abs()).max(1e-8);
        for j in 0..d {
            let (mut up, mut down) = (w.clone(), w.clone());
            up[j] += h;
            down[j] -= h;
            let fd = (objective.loss(&up, b) - objective.loss(&down, b)) / (2.0 * h);
            worst = worst.max(rel(gw[j], fd));
        }
        let fd = (objective.loss(&w, b + h) - objective.loss(&w, b - h)) / (2.0 * h);
        worst = worst.max(rel(gb, fd));
    }
    ensure(worst <= 1e-5, || format!("gradient relative error {worst:e}"))?;
    Ok(worst)
}

fn knn_oracle() -> Result<usize, String> {
    let cosine = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let (na, nb) = (a.iter().map(|v| v * v).sum::<f64>().sqrt(), b.iter().map(|v| v * v).sum::<f64>().sqrt());
        if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) }
    };
    let sparse = |p: &[f64]| SparseVector::from_entries(p.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i as u32, *v)));
    let mut queries = 0;
    for seed in 0..100 {
        let mut rng = rng_from_seed(1000 + seed);
        let points: Vec<Vec<f64>> = (0..50).map(|_| (0..5).map(|_| rng.random_range(0..3) as f64).collect()).collect();
        let labels: Vec<&str> = (0..50).map(|_| ["a", "b"][rng.random_range(0..2)]).collect();
        let k = rng.random_range(1..=7);
        let model = train_knn(&points.iter().map(|p| sparse(p)).collect::<Vec<_>>(), &labels, k).map_err(|e| e.to_string())?;
        for _ in 0..3 {
            let q: Vec<f64> = (0..5).map(|_| rng.random_range(0..3) as f64).collect();
            let mut ranked: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| (cosine(p, &q), i)).collect();
            ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let want: Vec<usize> = ranked.iter().take(k).map(|r| r.1).collect();
            let got = model.neighbors(&sparse(&q));
            ensure(got == want, || format!("seed {seed}: neighbours {got:?}, exhaustive {want:?}"))?;
            queries += 1;
        }
    }
    Ok(queries)
}

fn classifier_oracles() -> Outcome {
    let mnb = mnb_oracle()?;
    let grad = gradient_oracle()?;
    let knn = knn_oracle()?;
    Ok(format!("mnb max err {mnb:.1e}; gradient max rel err {grad:.1e}; knn {knn} queries over 100 seeds"))
}

fn metric_correctness() -> Outcome {
    let s = f1(&Confusion::new(2, 1, 1, 0));
    ensure(s.f1 == 2.0 / 3.0, || format!("f1(2,1,1) = {}", s.f1))?;
    let means = BTreeMap::from([
        ((0, 0), 0.8),
        ((0, 1), 0.9),
        ((1, 0), 0.7),
        ((1, 1), 0.9),
    ]);
    let (_, gaps) = average_gap_to_best(2, 2, &means);
    ensure(gaps == [Some(0.0), Some(5.0)], || format!("gaps {gaps:?}"))?;
    Ok(format!("f1 = {}; gaps = {{{}, {}}}", s.f1, gaps[0].unwrap(), gaps[1].unwrap()))
}

fn augbench(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_augbench")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("augbench {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic task on disk, one recorded grid and one replayed grid.
struct TrendRun {
    dir: tempfile::TempDir,
    record: Duration,
    replay: Duration,
}

fn trend_run() -> Result<TrendRun, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let syn = dir.path().join("syn");
    augbench(&["synth", "--out", s(&syn)])?;
    let config = syn.join("grid.toml");
    let t = Instant::now();
    augbench(&["grid", "--config", s(&config), "--out", s(&dir.path().join("recorded"))])?;
    let record = t.elapsed();
    let t = Instant::now();
    augbench(&["grid", "--config", s(&config), "--mode", "replay", "--out", s(&dir.path().join("replay-1"))])?;
    let replay = t.elapsed();
    Ok(TrendRun { dir, record, replay })
}

fn trend(run: &TrendRun) -> Outcome {
    let report = read_report(&run.dir.path().join("replay-1")).map_err(|e| e.to_string())?;
    ensure(report.trials == 10, || format!("{} trials", report.trials))?;
    let mean = |name: &str, x: f64| report.cell(name, x).and_then(|c| c.mean_f1).ok_or_else(|| format!("no mean for {name}@{x}"));
    let lift = mean("gen3", 0.03)? - mean("disp", 0.03)?;
    ensure(lift >= 0.05, || format!("gen3 - disp at 3% = {lift:.3}"))?;
    let mut margins = Vec::new();
    for x in [0.01, 0.03] {
        let lowest_gen = ["gen1", "gen2", "gen3"].iter().map(|g| mean(g, x)).collect::<Result<Vec<_>, _>>()?.into_iter().fold(f64::INFINITY, f64::min);
        let highest_bda = ["bda1", "bda2", "bda3"].iter().map(|b| mean(b, x)).collect::<Result<Vec<_>, _>>()?.into_iter().fold(f64::NEG_INFINITY, f64::max);
        ensure(lowest_gen > highest_bda, || format!("x={x}: lowest gen {lowest_gen:.3} <= highest bda {highest_bda:.3}"))?;
        margins.push(format!("x={x}: min gen {lowest_gen:.3} > max bda {highest_bda:.3}"));
    }
    ensure(run.replay < Duration::from_secs(60), || format!("replayed grid took {:?}", run.replay))?;
    Ok(format!(
        "gen3 - disp at 3% = {lift:.3}; {}; record {:.1?}, replay {:.1?}",
        margins.join("; "),
        run.record,
        run.replay
    ))
}

fn determinism(run: &TrendRun) -> Outcome {
    let config = run.dir.path().join("syn/grid.toml");
    let second = run.dir.path().join("replay-2");
    augbench(&["grid", "--config", s(&config), "--mode", "replay", "--out", s(&second)])?;
    let first = run.dir.path().join("replay-1");
    let mut names: Vec<_> = fs::read_dir(&first).map_err(|e| e.to_string())?.map(|e| e.unwrap().file_name()).collect();
    names.sort();
    ensure(names.len() == 6, || format!("{} report files", names.len()))?;
    for name in &names {
        let a = fs::read(first.join(name)).map_err(|e| e.to_string())?;
        let b = fs::read(second.join(name)).map_err(|e| format!("{name:?}: {e}"))?;
        ensure(a == b, || format!("{name:?} differs between replays"))?;
    }
    Ok(format!("{} files byte-identical across two replays", names.len()))
}

fn isolation() -> Outcome {
    let task = spam_task(11);
    let counts = |neg, pos| BTreeMap::from([("ham".to_string(), neg), ("spam".to_string(), pos)]);
    let train = synthetic_corpus(&task.schema, &task.grammar, &counts(1500, 200), 1, "train").map_err(|e| e.to_string())?;
    let test = synthetic_corpus(&task.schema, &task.grammar, &counts(300, 40), 2, "test").map_err(|e| e.to_string())?;
    let mock = Arc::new(MockGenerator::new(task.grammar.clone(), &task.schema, 5));
    let resources = StrategyResources {
        augmentation: AugmentationResources {
            lexicon: Some(synthetic_lexicon(&task.grammar, &task.lexicon_slots, 2, 3)),
            embeddings: Some(synthetic_embeddings(&task.grammar, 16, 0.5, 3)),
            ..Default::default()
        },
        generator: Some(GeneratorBackend { transport: mock.clone() as Arc<dyn Transport>, settings: GeneratorSettings::default() }),
    };
    let spec = GridSpec {
        retentions: vec![0.03, 0.25],
        strategies: StrategyKind::ALL.into_iter().map(StrategyEntry::new).collect(),
        trials: Some(2),
        minimum_train_size: 0,
        ..Default::default()
    };
    let log = StageLog::default();
    let report = run_grid(&spec, &train, &test, &resources, Some(&log)).map_err(|e| e.to_string())?;
    ensure(report.results.len() == 8 * 2 * 2, || format!("{} results", report.results.len()))?;
    let test_ids: BTreeSet<String> = test.ids().map(str::to_string).collect();
    let mut checked = Vec::new();
    for stage in [Stage::Augment, Stage::FineTune, Stage::VectorizerFit, Stage::ClassifierFit] {
        let seen = log.ids_at(stage);
        ensure(!seen.is_empty(), || format!("{stage:?} never observed"))?;
        let leaked = seen.intersection(&test_ids).count();
        ensure(leaked == 0, || format!("{leaked} test ids reached {stage:?}"))?;
        checked.push(format!("{stage:?}:{}", seen.len()));
    }
    // what actually went over the wire for fine-tuning
    let finetune_ids = log.ids_at(Stage::FineTune);
    let allowed: BTreeSet<&str> = train.samples().iter().filter(|s| finetune_ids.contains(&s.id)).map(|s| s.text.trim()).collect();
    let uploaded = mock.uploaded_completions();
    ensure(!uploaded.is_empty(), || "nothing was uploaded".into())?;
    for c in &uploaded {
        let text = c.trim_start().strip_suffix(DEFAULT_SEPARATOR).unwrap_or(c).trim();
        ensure(allowed.contains(text), || format!("uploaded completion `{text}` is not a fine-tune training text"))?;
    }
    Ok(format!("0 test ids at {}; {} uploaded completions all from train", checked.join(" "), uploaded.len()))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, f: &mut dyn FnMut() -> Outcome| {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    };
    report("truncation-exactness", &mut truncation_exactness);
    report("finetune-composition", &mut finetune_composition);
    report("cost-model", &mut cost_model);
    report("classifier-oracles", &mut classifier_oracles);
    report("metric-correctness", &mut metric_correctness);
    let run = trend_run();
    report("trend-reproduction", &mut || run.as_ref().map_err(Clone::clone).and_then(trend));
    report("replay-determinism", &mut || run.as_ref().map_err(Clone::clone).and_then(determinism));
    report("test-set-isolation", &mut isolation);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
