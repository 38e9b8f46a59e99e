use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ClassifyError, SparseVector};
use crate::seed::rng_from_seed;

/// SGD hyperparameters. The step size decays as `η0 / (1 + η0·λ·t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    /// L2 penalty λ; the objective adds `λ/2·‖w‖²` (bias unpenalized).
    pub l2: f64,
}

impl Default for SgdHyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 20,
            l2: 1e-4,
        }
    }
}

/// Binary logistic model `P(positive) = σ(w·x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub positive: String,
    pub negative: String,
    pub hyper: SgdHyper,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Regularized mean log-loss over a labeled sparse design.
pub struct LogisticObjective<'a> {
    pub x: &'a [SparseVector],
    /// Targets in {0, 1}.
    pub y: &'a [f64],
    pub l2: f64,
}

impl LogisticObjective<'_> {
    pub fn loss(&self, weights: &[f64], bias: f64) -> f64 {
        let n = self.x.len() as f64;
        let data: f64 = self
            .x
            .iter()
            .zip(self.y)
            .map(|(xi, yi)| {
                let z = xi.dot_dense(weights) + bias;
                softplus(z) - yi * z
            })
            .sum::<f64>()
            / n;
        data + 0.5 * self.l2 * weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Exact full-batch gradient `(∂/∂w, ∂/∂b)`.
    pub fn gradient(&self, weights: &[f64], bias: f64) -> (Vec<f64>, f64) {
        let n = self.x.len() as f64;
        let mut gw: Vec<f64> = weights.iter().map(|w| self.l2 * w).collect();
        let mut gb = 0.0;
        for (xi, yi) in self.x.iter().zip(self.y) {
            let residual = sample_residual(xi, *yi, weights, bias);
            for &(i, v) in xi.entries() {
                gw[i as usize] += residual * v / n;
            }
            gb += residual / n;
        }
        (gw, gb)
    }
}

/// `σ(w·x + b) − y`, the per-sample loss derivative with respect to the logit.
fn sample_residual(x: &SparseVector, y: f64, weights: &[f64], bias: f64) -> f64 {
    sigmoid(x.dot_dense(weights) + bias) - y
}

/// Trains a binary logistic regression with per-sample SGD, shuffling the
/// sample order every epoch from `seed`.
pub fn train_logreg_sgd(
    x: &[SparseVector],
    y: &[&str],
    positive: &str,
    n_features: usize,
    hyper: &SgdHyper,
    seed: u64,
) -> Result<LinearModel, ClassifyError> {
    if x.is_empty() || x.len() != y.len() {
        return Err(ClassifyError::EmptyCorpus);
    }
    if !(hyper.learning_rate > 0.0) || hyper.l2 < 0.0 || hyper.epochs == 0 {
        return Err(ClassifyError::InvalidHyper(format!("{hyper:?}")));
    }
    let mut labels: Vec<&str> = y.to_vec();
    labels.sort_unstable();
    labels.dedup();
    let negative = match labels.as_slice() {
        [a, b] if *a == positive => b.to_string(),
        [a, b] if *b == positive => a.to_string(),
        [_] => return Err(ClassifyError::SingleClass),
        _ => {
            return Err(ClassifyError::NotBinary(format!(
                "expected two labels including `{positive}`, found {labels:?}"
            )))
        }
    };
    let targets: Vec<f64> = y.iter().map(|l| f64::from(*l == positive)).collect();

    // weights are stored as scale * v so the L2 shrink is O(1) per step
    let mut v = vec![0.0f64; n_features];
    let mut scale = 1.0f64;
    let mut bias = 0.0f64;
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut rng = rng_from_seed(seed);
    let mut t = 0usize;
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let eta = hyper.learning_rate / (1.0 + hyper.learning_rate * hyper.l2 * t as f64);
            let z = scale * x[i].dot_dense(&v) + bias;
            let residual = sigmoid(z) - targets[i];
            scale *= 1.0 - eta * hyper.l2;
            if scale < 1e-9 {
                v.iter_mut().for_each(|w| *w *= scale);
                scale = 1.0;
            }
            for &(j, val) in x[i].entries() {
                v[j as usize] -= eta * residual * val / scale;
            }
            bias -= eta * residual;
            t += 1;
        }
        let weights: Vec<f64> = v.iter().map(|w| w * scale).collect();
        let loss = LogisticObjective { x, y: &targets, l2: hyper.l2 }.loss(&weights, bias);
        if !loss.is_finite() || !bias.is_finite() {
            return Err(ClassifyError::Diverged { epoch });
        }
    }
    Ok(LinearModel {
        weights: v.into_iter().map(|w| w * scale).collect(),
        bias,
        positive: positive.to_string(),
        negative,
        hyper: *hyper,
    })
}

impl LinearModel {
    pub fn probability(&self, x: &SparseVector) -> f64 {
        sigmoid(x.dot_dense(&self.weights) + self.bias)
    }

    pub fn predict(&self, x: &SparseVector) -> &str {
        if x.dot_dense(&self.weights) + self.bias > 0.0 {
            &self.positive
        } else {
            &self.negative
        }
    }
}
