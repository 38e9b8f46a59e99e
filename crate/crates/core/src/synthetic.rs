//! Template grammars for synthetic corpora, plus matching toy lexicons and
//! embedding tables. The same grammar backs the offline mock generator.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{EmbeddingTable, SynonymLexicon};
use crate::corpus::{ClassSchema, CorpusError, Dataset, Provenance, Sample};
use crate::seed::{derive_rng, SeededRng};

/// Class-conditional templates over named word slots. A template is a
/// whitespace-separated sequence of literals and `{slot}` references.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateGrammar {
    pub slots: BTreeMap<String, Vec<String>>,
    /// Leaf class -> templates.
    pub templates: BTreeMap<String, Vec<String>>,
}

fn slot_name(token: &str) -> Option<&str> {
    token.strip_prefix('{')?.strip_suffix('}')
}

impl TemplateGrammar {
    pub fn validate(&self) -> Result<(), CorpusError> {
        for (class, templates) in &self.templates {
            if templates.is_empty() {
                return Err(CorpusError::Schema(format!("class `{class}` has no templates")));
            }
            for t in templates {
                for name in t.split_whitespace().filter_map(slot_name) {
                    match self.slots.get(name) {
                        Some(words) if !words.is_empty() => {}
                        _ => return Err(CorpusError::Schema(format!("template `{t}` uses undefined or empty slot `{name}`"))),
                    }
                }
            }
        }
        Ok(())
    }

    pub fn has_class(&self, class: &str) -> bool {
        self.templates.contains_key(class)
    }

    /// Expands a random template of `class`.
    pub fn sample(&self, class: &str, rng: &mut SeededRng) -> Option<String> {
        let template = self.templates.get(class)?.choose(rng)?;
        let words: Vec<&str> = template
            .split_whitespace()
            .map(|tok| match slot_name(tok).and_then(|n| self.slots.get(n)) {
                Some(words) => words.choose(rng).map(String::as_str).unwrap_or(tok),
                None => tok,
            })
            .collect();
        Some(words.join(" "))
    }

    /// Every distinct word the grammar can emit.
    pub fn vocabulary(&self) -> BTreeSet<&str> {
        let mut vocab: BTreeSet<&str> = self.slots.values().flatten().map(String::as_str).collect();
        for t in self.templates.values().flatten() {
            vocab.extend(t.split_whitespace().filter(|tok| slot_name(tok).is_none()));
        }
        vocab
    }
}

/// A ready-made synthetic task: schema with prompt templates, grammar, and
/// which slots get synonym entries.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub schema: ClassSchema,
    pub grammar: TemplateGrammar,
    pub lexicon_slots: Vec<String>,
}

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];

/// `count` distinct pronounceable pseudo-words not already in `taken`.
fn pseudo_words(count: usize, syllables: usize, taken: &mut BTreeSet<String>, rng: &mut SeededRng) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let word: String = (0..syllables)
            .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
            .collect();
        if taken.insert(word.clone()) {
            out.push(word);
        }
    }
    out
}

/// Two-class spam/ham task over pseudo-word vocabularies. Both classes share
/// a pool of filler words; each class has its own large keyword pool and
/// some templates borrow a keyword from the other class.
pub fn spam_task(seed: u64) -> SyntheticTask {
    let mut rng = derive_rng(seed, &["synthetic", "spam-task"]);
    let mut taken = BTreeSet::new();
    let mut slots = BTreeMap::new();
    slots.insert("filler".to_string(), pseudo_words(80, 2, &mut taken, &mut rng));
    slots.insert("ham".to_string(), pseudo_words(400, 3, &mut taken, &mut rng));
    slots.insert("spam".to_string(), pseudo_words(400, 3, &mut taken, &mut rng));
    let t = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let mut templates = BTreeMap::new();
    templates.insert(
        "ham".to_string(),
        t(&[
            "{filler} {ham} {filler} {ham} {filler} {filler}",
            "{ham} {filler} {filler} {ham} {filler}",
            "{filler} {filler} {ham} {filler} {ham} {ham} {filler}",
            "{filler} {ham} {filler} {spam} {filler} {ham}",
        ]),
    );
    templates.insert(
        "spam".to_string(),
        t(&[
            "{spam} {filler} {spam} {filler} {filler} {spam}",
            "{filler} {spam} {filler} {spam} {filler}",
            "{spam} {filler} {filler} {spam} {ham} {filler}",
            "{filler} {filler} {spam} {ham} {filler} {filler}",
        ]),
    );
    let schema = ClassSchema::new(&["ham", "spam"], "spam")
        .with_template("ham", "A regular SMS")
        .with_template("spam", "A spam SMS");
    SyntheticTask {
        schema,
        grammar: TemplateGrammar { slots, templates },
        lexicon_slots: vec!["filler".into(), "ham".into()],
    }
}

/// Draws `counts[leaf]` samples per leaf class. Ids are `{prefix}-{n}`.
pub fn synthetic_corpus(
    schema: &ClassSchema,
    grammar: &TemplateGrammar,
    counts: &BTreeMap<String, usize>,
    seed: u64,
    prefix: &str,
) -> Result<Dataset, CorpusError> {
    grammar.validate()?;
    let mut samples = Vec::new();
    for (leaf, &n) in counts {
        let (label, subclass) = schema
            .resolve_leaf(leaf)
            .ok_or_else(|| CorpusError::Schema(format!("unknown leaf class `{leaf}`")))?;
        let mut rng = derive_rng(seed, &["synthetic-corpus", prefix, leaf]);
        for _ in 0..n {
            let text = grammar
                .sample(leaf, &mut rng)
                .ok_or_else(|| CorpusError::Schema(format!("grammar has no templates for `{leaf}`")))?;
            let mut s = Sample::new(format!("{prefix}-{}", samples.len()), text, label.clone());
            s.subclass = subclass.clone();
            samples.push(s);
        }
    }
    let mut provenance = Provenance { source: Some(format!("synthetic:{prefix}")), ..Default::default() };
    provenance.notes.insert("seed".into(), seed.to_string());
    Dataset::new(schema.clone(), samples, provenance)
}

/// Gives every word of the listed slots `per_word` synonyms drawn from the
/// same slot.
pub fn synthetic_lexicon(grammar: &TemplateGrammar, slots: &[String], per_word: usize, seed: u64) -> SynonymLexicon {
    let mut entries = Vec::new();
    for name in slots {
        let Some(words) = grammar.slots.get(name) else { continue };
        let mut rng = derive_rng(seed, &["synthetic-lexicon", name]);
        for w in words {
            let syns: Vec<String> = words
                .choose_multiple(&mut rng, per_word + 1)
                .filter(|s| *s != w)
                .take(per_word)
                .cloned()
                .collect();
            entries.push((w.clone(), syns));
        }
    }
    SynonymLexicon::from_entries(entries)
}

/// Random vectors for the grammar vocabulary; words sharing a slot are
/// pulled toward a common centre by `cluster` (0 = no structure).
pub fn synthetic_embeddings(grammar: &TemplateGrammar, dimension: usize, cluster: f32, seed: u64) -> EmbeddingTable {
    let mut table = EmbeddingTable::new(dimension.max(1)).expect("positive dimension");
    let noise = |rng: &mut SeededRng| -> Vec<f32> {
        (0..dimension.max(1))
            .map(|_| (0..3).map(|_| rng.random_range(-1.0f32..1.0)).sum::<f32>())
            .collect()
    };
    for (name, words) in &grammar.slots {
        let mut rng = derive_rng(seed, &["synthetic-embedding", name]);
        let centre = noise(&mut rng);
        for w in words {
            let v: Vec<f32> = noise(&mut rng).iter().zip(&centre).map(|(n, c)| n + cluster * c).collect();
            table.insert(w, &v).expect("finite vector of right size");
        }
    }
    table
}
