use serde::{Deserialize, Serialize};

/// Sentinel tokens produced by upstream normalization, kept verbatim.
pub const SENTINELS: [&str; 2] = ["@USER", "URL"];

/// Lowercase tokens of a text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<String>> for TokenSequence {
    fn from(tokens: Vec<String>) -> Self {
        Self(tokens.into_iter().filter(|t| !t.is_empty()).collect())
    }
}

/// Lowercases and splits on non-alphanumeric characters. `@USER` and `URL`
/// standing alone are preserved as-is.
pub fn tokenize(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        if current.is_empty() {
            if let Some(sentinel) = SENTINELS.iter().find(|s| {
                rest.starts_with(**s)
                    && !rest[s.len()..].chars().next().is_some_and(char::is_alphanumeric)
            }) {
                tokens.push(sentinel.to_string());
                rest = &rest[sentinel.len()..];
                continue;
            }
        }
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
        rest = &rest[c.len_utf8()..];
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    TokenSequence(tokens)
}
