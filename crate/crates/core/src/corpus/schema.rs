use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Class layout of a dataset: primary classes, the positive class, optional
/// per-class children and natural-language prompt templates per leaf class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSchema {
    pub classes: Vec<String>,
    pub positive: String,
    #[serde(default)]
    pub subclasses: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub prompt_templates: BTreeMap<String, String>,
}

impl ClassSchema {
    pub fn new(classes: &[&str], positive: &str) -> Self {
        Self {
            classes: classes.iter().map(|c| c.to_string()).collect(),
            positive: positive.to_string(),
            subclasses: BTreeMap::new(),
            prompt_templates: BTreeMap::new(),
        }
    }

    pub fn with_subclasses(mut self, class: &str, children: &[&str]) -> Self {
        self.subclasses.insert(
            class.to_string(),
            children.iter().map(|c| c.to_string()).collect(),
        );
        self
    }

    pub fn with_template(mut self, leaf: &str, template: &str) -> Self {
        self.prompt_templates
            .insert(leaf.to_string(), template.to_string());
        self
    }

    /// Checks structural invariants: unique, non-empty identifiers, exactly
    /// one listed positive class, children attached to known classes, and
    /// leaf identifiers unique across the schema.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |msg: String| Err(CorpusError::Schema(msg));
        if self.classes.len() < 2 {
            return bad("at least two classes are required".into());
        }
        let mut seen = BTreeSet::new();
        for class in &self.classes {
            if class.trim().is_empty() {
                return bad("empty class identifier".into());
            }
            if !seen.insert(class.as_str()) {
                return bad(format!("duplicate class `{class}`"));
            }
        }
        if !self.classes.contains(&self.positive) {
            return bad(format!(
                "positive class `{}` is not among the classes",
                self.positive
            ));
        }
        for (parent, children) in &self.subclasses {
            if !self.classes.contains(parent) {
                return bad(format!("subclasses declared for unknown class `{parent}`"));
            }
            if children.is_empty() {
                return bad(format!("class `{parent}` declares an empty subclass list"));
            }
            for child in children {
                if child.trim().is_empty() || !seen.insert(child.as_str()) {
                    return bad(format!("subclass `{child}` is empty or not unique"));
                }
            }
        }
        for leaf in self.prompt_templates.keys() {
            if !self.leaves().iter().any(|l| l == leaf) {
                return bad(format!("prompt template for unknown leaf class `{leaf}`"));
            }
        }
        Ok(())
    }

    pub fn contains_class(&self, class: &str) -> bool {
        self.classes.iter().any(|c| c == class)
    }

    pub fn children(&self, class: &str) -> &[String] {
        self.subclasses.get(class).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Whether `subclass` is a declared child of `class`.
    pub fn is_child(&self, class: &str, subclass: &str) -> bool {
        self.children(class).iter().any(|c| c == subclass)
    }

    /// Leaf classes in schema order: each class's children, or the class
    /// itself when it has none.
    pub fn leaves(&self) -> Vec<String> {
        let mut out = Vec::new();
        for class in &self.classes {
            match self.subclasses.get(class) {
                Some(children) => out.extend(children.iter().cloned()),
                None => out.push(class.clone()),
            }
        }
        out
    }

    /// Maps a leaf identifier back to `(class, subclass)`.
    pub fn resolve_leaf(&self, leaf: &str) -> Option<(String, Option<String>)> {
        if self.contains_class(leaf) && !self.subclasses.contains_key(leaf) {
            return Some((leaf.to_string(), None));
        }
        self.subclasses.iter().find_map(|(parent, children)| {
            children
                .iter()
                .any(|c| c == leaf)
                .then(|| (parent.clone(), Some(leaf.to_string())))
        })
    }

    /// Position of a class in the schema, used for deterministic ordering.
    pub fn class_index(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    /// The single non-positive class of a binary schema.
    pub fn negative(&self) -> Option<&str> {
        let mut negatives = self.classes.iter().filter(|c| **c != self.positive);
        match (negatives.next(), negatives.next()) {
            (Some(n), None) => Some(n.as_str()),
            _ => None,
        }
    }
}
