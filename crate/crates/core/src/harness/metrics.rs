use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    /// Counts positive-class outcomes of paired truth/prediction labels.
    pub fn from_labels<'a>(
        truth: impl IntoIterator<Item = &'a str>,
        predicted: impl IntoIterator<Item = &'a str>,
        positive: &str,
    ) -> Self {
        let mut c = Self::default();
        for (t, p) in truth.into_iter().zip(predicted) {
            match (t == positive, p == positive) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Positive-class precision, recall and F1. Undefined ratios are 0.
pub fn f1(c: &Confusion) -> Scores {
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    // 2tp / (2tp + fp + fn) equals the harmonic mean and stays exact for
    // small counts.
    let f1 = if precision == 0.0 || recall == 0.0 { 0.0 } else { ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_) };
    Scores { precision, recall, f1 }
}

/// Mean and sample standard deviation (n - 1); std is 0 for one value.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

/// Gap in percentage points between a cell and the best cell.
pub fn gap_points(best: f64, mean: f64) -> f64 {
    (best * 100.0 - mean * 100.0).max(0.0)
}

/// Per-retention best-of and average gap for every strategy.
///
/// `cells` maps (strategy index, retention index) to mean F1 for available
/// cells only. The best at a retention is the highest mean, ties going to
/// the lower strategy index. A strategy's average covers the retentions
/// where it is available; strategies never available map to `None`.
pub fn average_gap_to_best(
    strategies: usize,
    retentions: usize,
    cells: &BTreeMap<(usize, usize), f64>,
) -> (Vec<Option<usize>>, Vec<Option<f64>>) {
    let best: Vec<Option<usize>> = (0..retentions)
        .map(|r| {
            let mut best: Option<(usize, f64)> = None;
            for s in 0..strategies {
                if let Some(&m) = cells.get(&(s, r)) {
                    if best.is_none_or(|(_, b)| m > b) {
                        best = Some((s, m));
                    }
                }
            }
            best.map(|(s, _)| s)
        })
        .collect();
    let gaps = (0..strategies)
        .map(|s| {
            let per: Vec<f64> = (0..retentions)
                .filter_map(|r| {
                    let m = cells.get(&(s, r))?;
                    let b = cells[&(best[r]?, r)];
                    Some(gap_points(b, *m))
                })
                .collect();
            mean_std(&per).map(|(m, _)| m)
        })
        .collect();
    (best, gaps)
}
