use std::time::Instant;

use augbench_core::classify::{external_train_predict, AdapterConfig, AdapterError, ClassifierSpec};
use augbench_core::corpus::{ClassSchema, Dataset, Provenance, Sample};
use augbench_core::harness::{run_grid, GridSpec, StrategyEntry, StrategyKind, StrategyResources};

const ECHO: &str = env!("CARGO_BIN_EXE_augbench-echo-adapter");

fn data() -> (Dataset, Dataset) {
    let schema = ClassSchema::new(&["ham", "spam"], "spam");
    let train = (0..12)
        .map(|i| Sample::new(format!("tr{i}"), format!("text {i}"), if i % 3 == 0 { "spam" } else { "ham" }))
        .collect();
    let test = (0..5).map(|i| Sample::new(format!("te{i}"), format!("query {i}"), "spam")).collect();
    (
        Dataset::new(schema.clone(), train, Provenance::default()).unwrap(),
        Dataset::new(schema, test, Provenance::default()).unwrap(),
    )
}

fn run(args: &[&str]) -> Result<Vec<String>, AdapterError> {
    let (train, test) = data();
    external_train_predict(&AdapterConfig::new(ECHO).with_args(args.iter().copied()), &train, &test)
}

#[test]
fn echo_adapter_predicts_majority() {
    assert_eq!(run(&[]).unwrap(), vec!["ham"; 5]);
}

#[test]
fn protocol_faults_are_detected() {
    assert!(matches!(run(&["--omit-first"]), Err(AdapterError::MissingPrediction(id)) if id == "te0"));
    assert!(matches!(run(&["--duplicate-first"]), Err(AdapterError::DuplicatePrediction(id)) if id == "te0"));
    assert!(matches!(run(&["--unknown-label"]), Err(AdapterError::UnknownLabel { .. })));
    assert!(matches!(run(&["--exit-code", "3"]), Err(AdapterError::Exit { code: Some(3), .. })));
    assert!(matches!(run(&["--bogus"]), Err(AdapterError::Exit { code: Some(2), .. })));
}

#[test]
fn missing_program_fails_to_spawn() {
    let (train, test) = data();
    let err = external_train_predict(&AdapterConfig::new("/nonexistent/adapter"), &train, &test).unwrap_err();
    assert!(matches!(err, AdapterError::Spawn { .. }));
}

#[test]
fn slow_adapter_times_out() {
    let (train, test) = data();
    let mut config = AdapterConfig::new(ECHO).with_args(["--sleep-ms", "5000"]);
    config.timeout_secs = 1;
    let start = Instant::now();
    assert!(matches!(external_train_predict(&config, &train, &test), Err(AdapterError::Timeout(_))));
    assert!(start.elapsed().as_secs() < 4);
}

#[test]
fn external_classifier_in_grid() {
    let (train, test) = data();
    let spec = GridSpec {
        retentions: vec![0.5, 1.0],
        strategies: vec![StrategyEntry::new(StrategyKind::Disp), StrategyEntry::new(StrategyKind::Prop)],
        trials: Some(1),
        classifier: ClassifierSpec::External(AdapterConfig::new(ECHO)),
        minimum_train_size: 0,
        ..Default::default()
    };
    let report = run_grid(&spec, &train, &test, &StrategyResources::default(), None).unwrap();
    assert_eq!(report.cells.len(), 4);
    assert!(report.cells.iter().all(|c| c.mean_f1 == Some(0.0)));
}
