use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{ClassifyError, SparseVector};

/// Cosine k-nearest-neighbour classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    vectors: Vec<SparseVector>,
    norms: Vec<f64>,
    labels: Vec<String>,
    k: usize,
}

pub fn train_knn(x: &[SparseVector], y: &[&str], k: usize) -> Result<KnnModel, ClassifyError> {
    if x.len() != y.len() || x.is_empty() {
        return Err(ClassifyError::EmptyCorpus);
    }
    if k == 0 || k > x.len() {
        return Err(ClassifyError::InvalidK { k, n: x.len() });
    }
    Ok(KnnModel {
        norms: x.iter().map(SparseVector::norm).collect(),
        vectors: x.to_vec(),
        labels: y.iter().map(|l| l.to_string()).collect(),
        k,
    })
}

impl KnnModel {
    pub fn k(&self) -> usize {
        self.k
    }

    fn similarity(&self, i: usize, query: &SparseVector, q_norm: f64) -> f64 {
        if q_norm == 0.0 || self.norms[i] == 0.0 {
            return 0.0;
        }
        self.vectors[i].dot(query) / (self.norms[i] * q_norm)
    }

    /// Indices of the `k` nearest training points, most similar first;
    /// equal similarities rank the lower training index first.
    pub fn neighbors(&self, query: &SparseVector) -> Vec<usize> {
        let q_norm = query.norm();
        let mut scored: Vec<(f64, usize)> = (0..self.vectors.len())
            .map(|i| (self.similarity(i, query, q_norm), i))
            .collect();
        let rank = |a: &(f64, usize), b: &(f64, usize)| {
            b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
        };
        if self.k < scored.len() {
            scored.select_nth_unstable_by(self.k - 1, rank);
            scored.truncate(self.k);
        }
        scored.sort_by(rank);
        scored.into_iter().map(|(_, i)| i).collect()
    }

    /// Majority label among the neighbours. A tied vote goes to the tied
    /// label whose member ranks nearest.
    pub fn predict(&self, query: &SparseVector) -> &str {
        let neighbors = self.neighbors(query);
        let mut votes: Vec<(&str, usize)> = Vec::new();
        for &i in &neighbors {
            let label = self.labels[i].as_str();
            match votes.iter_mut().find(|(l, _)| *l == label) {
                Some((_, n)) => *n += 1,
                None => votes.push((label, 1)),
            }
        }
        let top = votes.iter().map(|(_, n)| *n).max().unwrap_or(0);
        // `votes` is in first-appearance order, i.e. by nearest member
        votes
            .into_iter()
            .find(|(_, n)| *n == top)
            .map(|(l, _)| l)
            .expect("k >= 1")
    }
}
