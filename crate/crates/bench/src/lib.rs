//! Shared fixtures for the criterion benches.

use std::collections::BTreeMap;

use augbench_core::augment::AugmentationResources;
use augbench_core::synthetic::{spam_task, synthetic_corpus, synthetic_embeddings, synthetic_lexicon, SyntheticTask};
use augbench_core::Dataset;

pub struct Fixture {
    pub task: SyntheticTask,
    pub train: Dataset,
    pub test: Dataset,
    pub resources: AugmentationResources,
}

/// A spam task with `ham`/`spam` training counts and a fixed 600-sample
/// test set.
pub fn fixture(ham: usize, spam: usize) -> Fixture {
    let task = spam_task(11);
    let counts = |h: usize, s: usize| BTreeMap::from([("ham".to_string(), h), ("spam".to_string(), s)]);
    let train = synthetic_corpus(&task.schema, &task.grammar, &counts(ham, spam), 1, "train").expect("train corpus");
    let test = synthetic_corpus(&task.schema, &task.grammar, &counts(520, 80), 2, "test").expect("test corpus");
    let resources = AugmentationResources {
        lexicon: Some(synthetic_lexicon(&task.grammar, &task.lexicon_slots, 2, 3)),
        embeddings: Some(synthetic_embeddings(&task.grammar, 16, 0.5, 3)),
        policy: Default::default(),
    };
    Fixture { task, train, test, resources }
}
