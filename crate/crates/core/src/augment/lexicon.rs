use std::collections::BTreeMap;
use std::io::BufRead;

use super::AugmentError;

/// Word → replacement words, keyed by lowercase word.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymLexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl SynonymLexicon {
    /// Builds a lexicon, dropping self-mappings and entries left empty.
    pub fn from_entries<I, K, V>(entries: I) -> Self
    where
        I: IntoIterator<Item = (K, Vec<V>)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut lexicon = Self::default();
        for (word, syns) in entries {
            lexicon.insert(word.into(), syns.into_iter().map(Into::into).collect());
        }
        lexicon
    }

    fn insert(&mut self, word: String, syns: Vec<String>) {
        let key = word.trim().to_lowercase();
        let mut clean: Vec<String> = syns
            .into_iter()
            .map(|s| s.trim().replace('_', " "))
            .filter(|s| !s.is_empty() && s.to_lowercase() != key)
            .collect();
        clean.dedup();
        if key.is_empty() || clean.is_empty() {
            return;
        }
        let slot = self.entries.entry(key).or_default();
        for syn in clean {
            if !slot.contains(&syn) {
                slot.push(syn);
            }
        }
    }

    /// Parses `word<TAB>syn1,syn2,...` lines.
    pub fn read<R: BufRead>(reader: R) -> Result<Self, AugmentError> {
        let mut lexicon = Self::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, syns) = line.split_once('\t').ok_or_else(|| AugmentError::Resource {
                line: i + 1,
                message: "expected `word<TAB>syn1,syn2,...`".into(),
            })?;
            lexicon.insert(word.to_string(), syns.split(',').map(str::to_string).collect());
        }
        Ok(lexicon)
    }

    pub fn alternatives(&self, word: &str) -> Option<&[String]> {
        self.entries.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_cleans_entries() {
        let text = "cat\tfeline,true_cat,cat\ndog\tdog\n\nBig\tlarge\n";
        let lex = SynonymLexicon::read(text.as_bytes()).unwrap();
        assert_eq!(lex.alternatives("CAT").unwrap(), ["feline", "true cat"]);
        assert!(lex.alternatives("dog").is_none());
        assert_eq!(lex.alternatives("big").unwrap(), ["large"]);
        assert_eq!(lex.len(), 2);
    }

    #[test]
    fn rejects_lines_without_tab() {
        assert!(SynonymLexicon::read("cat feline\n".as_bytes()).is_err());
    }
}
