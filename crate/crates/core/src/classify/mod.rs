//! Lightweight text classifiers over a shared tokenizer and TF-IDF
//! vectorizer, plus the external-adapter port.
//!
//! Naive Bayes consumes raw term counts; logistic regression and k-NN
//! consume L2-normalized TF-IDF rows.

pub mod adapter;
mod knn;
mod logreg;
mod mnb;
mod tfidf;
mod tokenize;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adapter::{external_train_predict, AdapterConfig, AdapterError};
pub use knn::{train_knn, KnnModel};
pub use logreg::{train_logreg_sgd, LinearModel, LogisticObjective, SgdHyper};
pub use mnb::{train_mnb, NaiveBayesModel};
pub use tfidf::{fit_tfidf, SparseVector, Vectorizer, TFIDF_VARIANT};
pub use tokenize::{tokenize, TokenSequence, SENTINELS};

use crate::corpus::Dataset;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("vocabulary is empty after min_df filtering")]
    EmptyVocabulary,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("labels are not binary: {0}")]
    NotBinary(String),
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("k = {k} is invalid for {n} training points")]
    InvalidK { k: usize, n: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("external classifier: {0}")]
    Adapter(#[from] AdapterError),
    #[error("the external classifier cannot be fitted in-process")]
    NotInProcess,
}

/// Which classifier to train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClassifierSpec {
    Mnb {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    #[serde(rename = "logreg")]
    LogReg {
        #[serde(default)]
        hyper: SgdHyper,
    },
    Knn {
        #[serde(default = "default_k")]
        k: usize,
    },
    External(AdapterConfig),
}

fn default_alpha() -> f64 {
    1.0
}

fn default_k() -> usize {
    5
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec::Mnb { alpha: default_alpha() }
    }
}

impl ClassifierSpec {
    /// Whether repeated fits with different seeds can disagree.
    pub fn is_stochastic(&self) -> bool {
        matches!(self, ClassifierSpec::LogReg { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClassifierSpec::Mnb { .. } => "mnb",
            ClassifierSpec::LogReg { .. } => "logreg",
            ClassifierSpec::Knn { .. } => "knn",
            ClassifierSpec::External(_) => "external",
        }
    }
}

/// A trained in-process classifier together with its vectorizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FittedClassifier {
    Mnb {
        vectorizer: Vectorizer,
        model: NaiveBayesModel,
    },
    #[serde(rename = "logreg")]
    LogReg {
        vectorizer: Vectorizer,
        model: LinearModel,
    },
    Knn {
        vectorizer: Vectorizer,
        model: KnnModel,
    },
}

/// Fits the vectorizer and model on `train` only.
pub fn fit(spec: &ClassifierSpec, train: &Dataset, min_df: usize, seed: u64) -> Result<FittedClassifier, ClassifyError> {
    let docs: Vec<TokenSequence> = train.samples().iter().map(|s| tokenize(&s.text)).collect();
    let labels: Vec<&str> = train.samples().iter().map(|s| s.label.as_str()).collect();
    let vectorizer = fit_tfidf(&docs, min_df)?;
    let n_features = vectorizer.len();
    Ok(match spec {
        ClassifierSpec::Mnb { alpha } => {
            let x: Vec<SparseVector> = docs.iter().map(|d| vectorizer.counts(d)).collect();
            let model = train_mnb(&x, &labels, n_features, *alpha)?;
            FittedClassifier::Mnb { vectorizer, model }
        }
        ClassifierSpec::LogReg { hyper } => {
            let x: Vec<SparseVector> = docs.iter().map(|d| vectorizer.vectorize(d)).collect();
            let model = train_logreg_sgd(&x, &labels, &train.schema().positive, n_features, hyper, seed)?;
            FittedClassifier::LogReg { vectorizer, model }
        }
        ClassifierSpec::Knn { k } => {
            let x: Vec<SparseVector> = docs.iter().map(|d| vectorizer.vectorize(d)).collect();
            let model = train_knn(&x, &labels, *k)?;
            FittedClassifier::Knn { vectorizer, model }
        }
        ClassifierSpec::External(_) => return Err(ClassifyError::NotInProcess),
    })
}

impl FittedClassifier {
    pub fn vectorizer(&self) -> &Vectorizer {
        match self {
            FittedClassifier::Mnb { vectorizer, .. }
            | FittedClassifier::LogReg { vectorizer, .. }
            | FittedClassifier::Knn { vectorizer, .. } => vectorizer,
        }
    }

    pub fn predict(&self, text: &str) -> String {
        let tokens = tokenize(text);
        match self {
            FittedClassifier::Mnb { vectorizer, model } => model.predict(&vectorizer.counts(&tokens)).to_string(),
            FittedClassifier::LogReg { vectorizer, model } => {
                model.predict(&vectorizer.vectorize(&tokens)).to_string()
            }
            FittedClassifier::Knn { vectorizer, model } => model.predict(&vectorizer.vectorize(&tokens)).to_string(),
        }
    }

    pub fn predict_dataset(&self, dataset: &Dataset) -> Vec<String> {
        dataset.samples().iter().map(|s| self.predict(&s.text)).collect()
    }
}

/// Trains on `train` and returns predicted labels for `test`, in order.
pub fn train_predict(
    spec: &ClassifierSpec,
    train: &Dataset,
    test: &Dataset,
    min_df: usize,
    seed: u64,
) -> Result<Vec<String>, ClassifyError> {
    match spec {
        ClassifierSpec::External(config) => Ok(external_train_predict(config, train, test)?),
        _ => Ok(fit(spec, train, min_df, seed)?.predict_dataset(test)),
    }
}
