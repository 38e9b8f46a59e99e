use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{ClassifyError, TokenSequence};

/// Sparse real vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    /// Builds from unsorted entries, summing duplicates and dropping zeros.
    pub fn from_entries(entries: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut map: BTreeMap<u32, f64> = BTreeMap::new();
        for (i, v) in entries {
            *map.entry(i).or_insert(0.0) += v;
        }
        Self {
            entries: map.into_iter().filter(|(_, v)| *v != 0.0).collect(),
        }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        let mut sum = 0.0;
        while let (Some(&&(i, x)), Some(&&(j, y))) = (a.peek(), b.peek()) {
            match i.cmp(&j) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    sum += x * y;
                    a.next();
                    b.next();
                }
            }
        }
        sum
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * dense[i as usize]).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_entries(self.entries.iter().map(|&(i, v)| (i, v * factor)))
    }
}

/// Fitted TF-IDF vocabulary. Uses smoothed idf `ln((1+N)/(1+df)) + 1` and
/// L2-normalized `tf * idf` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VectorizerRepr", into = "VectorizerRepr")]
pub struct Vectorizer {
    terms: Vec<String>,
    vocabulary: HashMap<String, usize>,
    idf: Vec<f64>,
    document_count: usize,
}

#[derive(Serialize, Deserialize)]
struct VectorizerRepr {
    variant: String,
    terms: Vec<String>,
    idf: Vec<f64>,
    document_count: usize,
}

pub const TFIDF_VARIANT: &str = "smooth-idf:ln((1+N)/(1+df))+1;tf:raw;norm:l2";

impl From<Vectorizer> for VectorizerRepr {
    fn from(v: Vectorizer) -> Self {
        Self {
            variant: TFIDF_VARIANT.to_string(),
            terms: v.terms,
            idf: v.idf,
            document_count: v.document_count,
        }
    }
}

impl TryFrom<VectorizerRepr> for Vectorizer {
    type Error = String;

    fn try_from(r: VectorizerRepr) -> Result<Self, Self::Error> {
        if r.variant != TFIDF_VARIANT {
            return Err(format!("unsupported tf-idf variant `{}`", r.variant));
        }
        if r.terms.len() != r.idf.len() {
            return Err("terms and idf lengths differ".into());
        }
        let vocabulary = r.terms.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        Ok(Self {
            terms: r.terms,
            vocabulary,
            idf: r.idf,
            document_count: r.document_count,
        })
    }
}

/// Fits the vocabulary (tokens with document frequency ≥ `min_df`, indexed
/// in lexicographic order) and idf weights.
pub fn fit_tfidf(corpus: &[TokenSequence], min_df: usize) -> Result<Vectorizer, ClassifyError> {
    if corpus.is_empty() {
        return Err(ClassifyError::EmptyCorpus);
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in corpus {
        let mut seen: Vec<&str> = doc.tokens().iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let n = corpus.len() as f64;
    let (terms, idf): (Vec<String>, Vec<f64>) = df
        .into_iter()
        .filter(|(_, d)| *d >= min_df.max(1))
        .map(|(t, d)| (t.to_string(), ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0))
        .unzip();
    if terms.is_empty() {
        return Err(ClassifyError::EmptyVocabulary);
    }
    let vocabulary = terms.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
    Ok(Vectorizer {
        terms,
        vocabulary,
        idf,
        document_count: corpus.len(),
    })
}

impl Vectorizer {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn document_count(&self) -> usize {
        self.document_count
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.vocabulary.get(token).copied()
    }

    pub fn idf(&self, token: &str) -> Option<f64> {
        self.index_of(token).map(|i| self.idf[i])
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// Raw term counts over the vocabulary; out-of-vocabulary tokens ignored.
    pub fn counts(&self, seq: &TokenSequence) -> SparseVector {
        SparseVector::from_entries(
            seq.tokens()
                .iter()
                .filter_map(|t| self.index_of(t))
                .map(|i| (i as u32, 1.0)),
        )
    }

    /// L2-normalized tf·idf vector; all-OOV input yields the zero vector.
    pub fn vectorize(&self, seq: &TokenSequence) -> SparseVector {
        let counts = self.counts(seq);
        let weighted = SparseVector::from_entries(
            counts.entries().iter().map(|&(i, tf)| (i, tf * self.idf[i as usize])),
        );
        let norm = weighted.norm();
        if norm == 0.0 {
            return weighted;
        }
        weighted.scaled(1.0 / norm)
    }
}
