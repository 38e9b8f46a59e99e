//! `synth`: a self-contained synthetic spam/ham task on disk.

use std::collections::BTreeMap;
use std::fs;

use augbench_core::synthetic::{spam_task, synthetic_corpus, synthetic_embeddings, synthetic_lexicon};

use crate::error::CliError;
use crate::files::{with_output, write_dataset};
use crate::SynthArgs;

pub const SCHEMA_FILE: &str = "schema.toml";
pub const GRAMMAR_FILE: &str = "grammar.json";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const LEXICON_FILE: &str = "lexicon.tsv";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";
pub const CONFIG_FILE: &str = "grid.toml";
pub const CASSETTE_FILE: &str = "cassette.jsonl";

const GRID_TOML: &str = r#"# Full strategy grid at low retention over the synthetic task. The first run
# records mock generator traffic into the cassette; rerun with
# `--mode replay` to reproduce it offline.

[schema]
classes = ["ham", "spam"]
positive = "spam"

[schema.prompt_templates]
ham = "A regular SMS"
spam = "A spam SMS"

[data]
train = "train.jsonl"
test = "test.jsonl"

[grid]
retentions = [0.01, 0.03]
strategies = ["disp", "prop", "bda1", "bda2", "bda3", "gen1", "gen2", "gen3"]
trials = 10
master_seed = 0

[resources]
lexicon = "lexicon.tsv"
embeddings = "embeddings.txt"

[generator]
backend = "mock"
mode = "record"
cassette = "cassette.jsonl"
grammar = "grammar.json"
mock_seed = 5

[output]
dir = "report"
"#;

pub fn synth(a: SynthArgs) -> Result<(), CliError> {
    fs::create_dir_all(&a.out)?;
    let task = spam_task(a.seed);
    let counts = |neg: usize, pos: usize| BTreeMap::from([("ham".to_string(), neg), ("spam".to_string(), pos)]);
    let train = synthetic_corpus(&task.schema, &task.grammar, &counts(a.train_negative, a.train_positive), 1, "train")?;
    let test = synthetic_corpus(&task.schema, &task.grammar, &counts(a.test_negative, a.test_positive), 2, "test")?;
    write_dataset(&train, Some(&a.out.join(TRAIN_FILE)))?;
    write_dataset(&test, Some(&a.out.join(TEST_FILE)))?;

    let schema = toml::to_string(&task.schema).map_err(|e| CliError::Other(e.to_string()))?;
    fs::write(a.out.join(SCHEMA_FILE), schema)?;
    let grammar = serde_json::to_string_pretty(&task.grammar).expect("grammar serializes");
    fs::write(a.out.join(GRAMMAR_FILE), grammar + "\n")?;

    let lexicon = synthetic_lexicon(&task.grammar, &task.lexicon_slots, 2, 3);
    with_output(Some(&a.out.join(LEXICON_FILE)), |w| {
        for (word, syns) in lexicon.iter() {
            writeln!(w, "{word}\t{}", syns.join(","))?;
        }
        Ok(())
    })?;
    let embeddings = synthetic_embeddings(&task.grammar, 16, 0.5, 3);
    with_output(Some(&a.out.join(EMBEDDINGS_FILE)), |w| {
        writeln!(w, "{} {}", embeddings.len(), embeddings.dimension())?;
        for word in embeddings.words() {
            let v: Vec<String> = embeddings.vector(word).expect("listed word").iter().map(f32::to_string).collect();
            writeln!(w, "{word} {}", v.join(" "))?;
        }
        Ok(())
    })?;
    fs::write(a.out.join(CONFIG_FILE), GRID_TOML)?;
    eprintln!("wrote synthetic task to {}", a.out.display());
    Ok(())
}
