use serde::{Deserialize, Serialize};

use super::{ClassifyError, SparseVector};

/// Multinomial Naive Bayes over raw term counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    /// Lexicographically sorted class identifiers.
    classes: Vec<String>,
    log_priors: Vec<f64>,
    /// `class × feature` log-likelihoods.
    log_likelihoods: Vec<Vec<f64>>,
    alpha: f64,
}

/// Fits priors `n_c / n` and Laplace-smoothed likelihoods
/// `(count_ct + α) / (count_c + α·V)`.
pub fn train_mnb(
    x: &[SparseVector],
    y: &[&str],
    n_features: usize,
    alpha: f64,
) -> Result<NaiveBayesModel, ClassifyError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(ClassifyError::InvalidHyper(format!("smoothing must be positive, got {alpha}")));
    }
    if x.len() != y.len() || x.is_empty() {
        return Err(ClassifyError::EmptyCorpus);
    }
    let mut classes: Vec<String> = y.iter().map(|c| c.to_string()).collect();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(ClassifyError::SingleClass);
    }
    let mut doc_counts = vec![0usize; classes.len()];
    let mut term_counts = vec![vec![0.0f64; n_features]; classes.len()];
    for (doc, label) in x.iter().zip(y) {
        let c = classes.binary_search_by(|k| k.as_str().cmp(label)).expect("class collected above");
        doc_counts[c] += 1;
        for &(i, v) in doc.entries() {
            term_counts[c][i as usize] += v;
        }
    }
    let n = x.len() as f64;
    let log_priors = doc_counts.iter().map(|&d| (d as f64 / n).ln()).collect();
    let log_likelihoods = term_counts
        .into_iter()
        .map(|counts| {
            let total: f64 = counts.iter().sum::<f64>() + alpha * n_features as f64;
            counts.into_iter().map(|c| ((c + alpha) / total).ln()).collect()
        })
        .collect();
    Ok(NaiveBayesModel {
        classes,
        log_priors,
        log_likelihoods,
        alpha,
    })
}

impl NaiveBayesModel {
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn log_likelihoods(&self, class: usize) -> &[f64] {
        &self.log_likelihoods[class]
    }

    /// Unnormalized log joint `log P(c) + Σ count·log P(t|c)` per class.
    pub fn log_joint(&self, x: &SparseVector) -> Vec<f64> {
        self.log_priors
            .iter()
            .zip(&self.log_likelihoods)
            .map(|(prior, ll)| prior + x.dot_dense(ll))
            .collect()
    }

    /// Normalized class posteriors, in [`classes`](Self::classes) order.
    pub fn posteriors(&self, x: &SparseVector) -> Vec<f64> {
        let joint = self.log_joint(x);
        let max = joint.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = joint.iter().map(|j| (j - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        exp.into_iter().map(|e| e / z).collect()
    }

    /// Arg-max class; ties go to the lexicographically first class.
    pub fn predict(&self, x: &SparseVector) -> &str {
        let joint = self.log_joint(x);
        let mut best = 0;
        for (i, j) in joint.iter().enumerate().skip(1) {
            if *j > joint[best] {
                best = i;
            }
        }
        &self.classes[best]
    }
}
