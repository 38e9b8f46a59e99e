use std::fs;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};

use augbench_cli::error::{EXIT_CONFIG, EXIT_DATA, EXIT_PROTOCOL, EXIT_TRANSPORT, EXIT_USAGE};

fn augbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_augbench"))
        .args(args)
        .env_remove("AUGBENCH_API_BASE")
        .env_remove("AUGBENCH_ENGINE")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const REVIEW_SCHEMA: &str = r#"
classes = ["truthful", "deceptive"]
positive = "deceptive"

[prompt_templates]
truthful = "A truthful hotel review"
deceptive = "A deceptive hotel review"
"#;

/// 400 reviews in each `<polarity>_<truthfulness>` folder.
fn review_tree(root: &Path) {
    for dir in ["positive_deceptive", "negative_deceptive", "positive_truthful", "negative_truthful"] {
        let d = root.join(dir).join("fold1");
        fs::create_dir_all(&d).unwrap();
        for i in 0..400 {
            fs::write(d.join(format!("r{i}.txt")), format!("{dir} review number {i} about the hotel")).unwrap();
        }
    }
}

#[test]
fn estimate_cost_on_48_records() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("ft.jsonl");
    // 40 + 360 characters -> 10 + 90 tokens per record
    let line = serde_json::json!({"prompt": "p".repeat(40), "completion": "c".repeat(360)}).to_string();
    fs::write(&file, format!("{line}\n").repeat(48)).unwrap();
    let out = augbench(&["estimate-cost", "--input", p(&file), "--rate", "0.003", "--epochs", "4"]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("tokens 4800\n"), "{text}");
    // 4800 / 1000 * 0.003 * 4
    assert!(text.contains("total 0.0576\n"), "{text}");
}

#[test]
fn malformed_upload_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("ft.jsonl");
    fs::write(&file, "{\"prompt\": 1}\n").unwrap();
    let out = augbench(&["estimate-cost", "--input", p(&file)]);
    assert_eq!(out.status.code(), Some(EXIT_DATA));
}

#[test]
fn missing_config_is_a_config_error() {
    let out = augbench(&["grid", "--config", "missing.toml"]);
    assert_eq!(out.status.code(), Some(EXIT_CONFIG), "{out:?}");
}

#[test]
fn bad_usage_exits_2() {
    assert_eq!(augbench(&["no-such-command"]).status.code(), Some(EXIT_USAGE));
    assert_eq!(augbench(&["truncate", "--retention"]).status.code(), Some(EXIT_USAGE));
    assert_eq!(augbench(&["--help"]).status.code(), Some(0));
}

#[test]
fn truncate_reviews_keeps_24_positives() {
    let dir = tempfile::tempdir().unwrap();
    let tree = dir.path().join("op_spam");
    review_tree(&tree);
    let schema = dir.path().join("schema.toml");
    fs::write(&schema, REVIEW_SCHEMA).unwrap();
    let all = dir.path().join("all.jsonl");
    let out = augbench(&["ingest", "--format", "review-dir", "--input", p(&tree), "--schema", p(&schema), "--out", p(&all)]);
    assert!(out.status.success(), "{out:?}");

    let kept = dir.path().join("kept.jsonl");
    let out = augbench(&[
        "truncate", "--input", p(&all), "--schema", p(&schema), "--retention", "0.03", "--mode", "disp", "--seed", "7",
        "--out", p(&kept),
    ]);
    assert!(out.status.success(), "{out:?}");
    let text = fs::read_to_string(&kept).unwrap();
    let count = |label: &str| text.lines().filter(|l| l.contains(&format!("\"label\":\"{label}\""))).count();
    assert_eq!(count("deceptive"), 24);
    assert_eq!(count("truthful"), 800);
    let provenance = fs::read_to_string(dir.path().join("kept.jsonl.provenance.json")).unwrap();
    assert!(provenance.contains("truncate(disp,0.03,seed=7)"), "{provenance}");
}

#[test]
fn dry_runs_make_no_transport_calls() {
    let dir = tempfile::tempdir().unwrap();
    let tree = dir.path().join("op_spam");
    review_tree(&tree);
    let schema = dir.path().join("schema.toml");
    fs::write(&schema, REVIEW_SCHEMA).unwrap();
    let all = dir.path().join("all.jsonl");
    assert!(augbench(&["ingest", "--format", "review-dir", "--input", p(&tree), "--schema", p(&schema), "--out", p(&all)])
        .status
        .success());

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_augbench")).args(args).env("AUGBENCH_API_BASE", &base).output().unwrap()
    };
    let export = dir.path().join("upload.jsonl");
    let out = run(&["finetune", "--input", p(&all), "--schema", p(&schema), "--strategy", "gen3", "--dry-run", "--export", p(&export)]);
    assert!(out.status.success(), "{out:?}");
    assert!(stdout(&out).contains("finetune_cost "), "{}", stdout(&out));
    assert_eq!(fs::read_to_string(&export).unwrap().lines().count(), 800);

    let out = run(&["generate", "--schema", p(&schema), "--model", "m", "--class", "deceptive", "--n", "10", "--dry-run"]);
    assert!(out.status.success(), "{out:?}");
    assert!(stdout(&out).contains("generation_tokens "), "{}", stdout(&out));
    assert!(listener.accept().is_err_and(|e| e.kind() == std::io::ErrorKind::WouldBlock));

    // without --dry-run the same command reaches the endpoint
    let mut child = Command::new(env!("CARGO_BIN_EXE_augbench"))
        .args(["generate", "--schema", p(&schema), "--model", "m", "--class", "deceptive", "--n", "1"])
        .env("AUGBENCH_API_BASE", &base)
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let deadline = std::time::Instant::now() + std::time::Duration::from_secs(30);
    let contacted = loop {
        if listener.accept().is_ok() {
            break true;
        }
        if std::time::Instant::now() > deadline {
            break false;
        }
        std::thread::sleep(std::time::Duration::from_millis(20));
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(contacted);
}

#[test]
fn finetune_replays_from_cassette_and_misses_loudly() {
    let dir = tempfile::tempdir().unwrap();
    let syn = dir.path().join("syn");
    let out = augbench(&["synth", "--out", p(&syn), "--train-negative", "50", "--train-positive", "10", "--test-negative", "5", "--test-positive", "5"]);
    assert!(out.status.success(), "{out:?}");
    let schema = syn.join("schema.toml");
    let train = syn.join("train.jsonl");
    let cassette = dir.path().join("ft.cassette.jsonl");
    let finetune = |mode: &str, strategy: &str| {
        augbench(&[
            "finetune", "--input", p(&train), "--schema", p(&schema), "--strategy", strategy, "--backend", "mock",
            "--grammar", p(&syn.join("grammar.json")), "--mode", mode, "--cassette", p(&cassette),
        ])
    };
    let recorded = finetune("record", "gen3");
    assert!(recorded.status.success(), "{recorded:?}");
    let replayed = finetune("replay", "gen3");
    assert!(replayed.status.success(), "{replayed:?}");
    assert_eq!(stdout(&recorded), stdout(&replayed));
    assert!(stdout(&replayed).contains("ft-mock"));

    let miss = finetune("replay", "gen1");
    assert_eq!(miss.status.code(), Some(EXIT_TRANSPORT), "{miss:?}");
    assert!(String::from_utf8_lossy(&miss.stderr).contains("cassette"));
}

#[test]
fn train_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let syn = dir.path().join("syn");
    assert!(augbench(&["synth", "--out", p(&syn), "--train-negative", "300", "--train-positive", "60", "--test-negative", "50", "--test-positive", "20"])
        .status
        .success());
    let schema = syn.join("schema.toml");
    let model = dir.path().join("model.json");
    let out = augbench(&["train", "--input", p(&syn.join("train.jsonl")), "--schema", p(&schema), "--out", p(&model)]);
    assert!(out.status.success(), "{out:?}");
    let out = augbench(&["evaluate", "--model", p(&model), "--input", p(&syn.join("test.jsonl")), "--schema", p(&schema)]);
    assert!(out.status.success(), "{out:?}");
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let c = &v["confusion"];
    let total: u64 = ["tp", "fp", "fn", "tn"].iter().map(|k| c[k].as_u64().unwrap()).sum();
    assert_eq!(total, 70);
    let n = |k: &str| c[k].as_u64().unwrap() as f64;
    let want = 2.0 * n("tp") / (2.0 * n("tp") + n("fp") + n("fn"));
    assert!((v["scores"]["f1"].as_f64().unwrap() - want).abs() < 1e-12);
}

#[test]
fn broken_adapter_is_a_protocol_error() {
    let dir = tempfile::tempdir().unwrap();
    let syn = dir.path().join("syn");
    assert!(augbench(&["synth", "--out", p(&syn), "--train-negative", "20", "--train-positive", "5", "--test-negative", "5", "--test-positive", "5"])
        .status
        .success());
    let spec = dir.path().join("adapter.json");
    fs::write(&spec, r#"{"kind": "external", "program": "sh", "args": ["-c", "read header; echo not-json"]}"#).unwrap();
    let out = augbench(&[
        "evaluate", "--train", p(&syn.join("train.jsonl")), "--classifier", p(&spec), "--input", p(&syn.join("test.jsonl")),
        "--schema", p(&syn.join("schema.toml")),
    ]);
    assert_eq!(out.status.code(), Some(EXIT_PROTOCOL), "{out:?}");
}

#[test]
fn grid_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let syn = dir.path().join("syn");
    assert!(augbench(&["synth", "--out", p(&syn), "--train-negative", "300", "--train-positive", "60", "--test-negative", "40", "--test-positive", "10"])
        .status
        .success());
    let config = syn.join("grid.toml");
    let text = fs::read_to_string(&config).unwrap().replace(
        "strategies = [\"disp\", \"prop\", \"bda1\", \"bda2\", \"bda3\", \"gen1\", \"gen2\", \"gen3\"]",
        "strategies = [\"disp\", \"bda1\"]\nminimum_train_size = 0",
    );
    fs::write(&config, text).unwrap();
    let out_dir = dir.path().join("out");
    let out = augbench(&["grid", "--config", p(&config), "--trials", "2", "--master-seed", "9", "--jobs", "2", "--out", p(&out_dir)]);
    assert!(out.status.success(), "{out:?}");
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["trials"], 2);
    assert_eq!(manifest["master_seed"], 9);
    assert_eq!(manifest["inputs"]["train"].as_str().unwrap().len(), 64);
    let cells = fs::read_to_string(out_dir.join("cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 1 + 2 * 2 * 2);

    let report = augbench(&["report", "--dir", p(&out_dir)]);
    assert!(report.status.success());
    assert_eq!(stdout(&report), stdout(&out));
}
