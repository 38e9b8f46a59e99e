use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::BufRead;

use super::AugmentError;

/// Dense word vectors of a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<f32>,
    norms: Vec<f64>,
}

/// Cosine similarity, defined as 0 when either vector is zero.
pub fn cosine(a: &[f32], a_norm: f64, b: &[f32], b_norm: f64) -> f64 {
    if a_norm == 0.0 || b_norm == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    dot / (a_norm * b_norm)
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt()
}

/// Orders candidates by descending similarity, then lexicographically.
fn by_similarity(a: &(f64, &str), b: &(f64, &str)) -> Ordering {
    b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then_with(|| a.1.cmp(b.1))
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Result<Self, AugmentError> {
        if dimension == 0 {
            return Err(AugmentError::Resource {
                line: 0,
                message: "embedding dimension must be positive".into(),
            });
        }
        Ok(Self {
            dimension,
            words: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
            norms: Vec::new(),
        })
    }

    /// Adds or overwrites a word vector. Words are stored lowercase.
    pub fn insert(&mut self, word: &str, vector: &[f32]) -> Result<(), AugmentError> {
        if vector.len() != self.dimension {
            return Err(AugmentError::Resource {
                line: 0,
                message: format!(
                    "vector for `{word}` has {} components, expected {}",
                    vector.len(),
                    self.dimension
                ),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(AugmentError::Resource {
                line: 0,
                message: format!("vector for `{word}` has non-finite components"),
            });
        }
        let word = word.to_lowercase();
        match self.index.get(&word) {
            Some(&i) => {
                self.vectors[i * self.dimension..(i + 1) * self.dimension].copy_from_slice(vector);
                self.norms[i] = norm(vector);
            }
            None => {
                self.index.insert(word.clone(), self.words.len());
                self.words.push(word);
                self.vectors.extend_from_slice(vector);
                self.norms.push(norm(vector));
            }
        }
        Ok(())
    }

    /// Reads the plain-text vector format `word v1 v2 ... vd`. A leading
    /// `count dimension` header line is accepted and skipped.
    pub fn read<R: BufRead>(reader: R) -> Result<Self, AugmentError> {
        let mut table: Option<Self> = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
                continue;
            }
            let bad = |message: String| AugmentError::Resource { line: i + 1, message };
            if fields.len() < 2 {
                return Err(bad("expected `word v1 ... vd`".into()));
            }
            let values = fields[1..]
                .iter()
                .map(|f| f.parse::<f32>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(e.to_string()))?;
            let table = match &mut table {
                Some(t) => t,
                None => table.insert(Self::new(values.len())?),
            };
            table
                .insert(fields[0], &values)
                .map_err(|e| bad(e.to_string()))?;
        }
        table.ok_or(AugmentError::Resource {
            line: 0,
            message: "embedding file contains no vectors".into(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(&word.to_lowercase())
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vector(&self, word: &str) -> Option<&[f32]> {
        self.index.get(&word.to_lowercase()).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn similarity(&self, a: &str, b: &str) -> Option<f64> {
        let ia = *self.index.get(&a.to_lowercase())?;
        let ib = *self.index.get(&b.to_lowercase())?;
        Some(cosine(self.row(ia), self.norms[ia], self.row(ib), self.norms[ib]))
    }

    /// The `k` words most cosine-similar to `word`, excluding `word` itself.
    /// Ties are broken lexicographically.
    pub fn nearest(&self, word: &str, k: usize) -> Vec<&str> {
        let Some(&i) = self.index.get(&word.to_lowercase()) else {
            return Vec::new();
        };
        let query = self.row(i);
        let q_norm = self.norms[i];
        let mut scored: Vec<(f64, &str)> = (0..self.words.len())
            .filter(|&j| j != i)
            .map(|j| (cosine(query, q_norm, self.row(j), self.norms[j]), self.words[j].as_str()))
            .collect();
        let k = k.min(scored.len());
        if k == 0 {
            return Vec::new();
        }
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, by_similarity);
            scored.truncate(k);
        }
        scored.sort_by(by_similarity);
        scored.into_iter().map(|(_, w)| w).collect()
    }

    /// Word maximizing cosine similarity to `query`, skipping `exclude`
    /// (lowercase). Returns `None` for a zero query.
    pub fn best_match(&self, query: &[f64], exclude: &[String]) -> Option<&str> {
        let q_norm = query.iter().map(|x| x * x).sum::<f64>().sqrt();
        if q_norm == 0.0 || !q_norm.is_finite() {
            return None;
        }
        let mut best: Option<(f64, &str)> = None;
        for (j, w) in self.words.iter().enumerate() {
            if exclude.iter().any(|e| e == w) || self.norms[j] == 0.0 {
                continue;
            }
            let dot: f64 = self.row(j).iter().zip(query).map(|(a, b)| *a as f64 * b).sum();
            let sim = dot / (q_norm * self.norms[j]);
            let candidate = (sim, w.as_str());
            if best.is_none_or(|b| by_similarity(&candidate, &b) == Ordering::Less) {
                best = Some(candidate);
            }
        }
        best.map(|(_, w)| w)
    }
}
