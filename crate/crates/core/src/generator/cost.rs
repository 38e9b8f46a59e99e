use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::{GeneratorError, PromptCompletion};

/// Token estimate at roughly four characters per token: `ceil(chars / 4)`.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Billing estimate in exact decimal currency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub token_count: u64,
    pub epochs: u32,
    pub rate_per_1k: Decimal,
    pub total: Decimal,
}

impl CostEstimate {
    /// `total = tokens / 1000 × rate × epochs`.
    pub fn from_tokens(token_count: u64, rate_per_1k: Decimal, epochs: u32) -> Self {
        let total = Decimal::from(token_count) * rate_per_1k * Decimal::from(epochs) / Decimal::from(1000);
        Self {
            token_count,
            epochs,
            rate_per_1k,
            total: total.normalize(),
        }
    }

    pub fn zero(rate_per_1k: Decimal, epochs: u32) -> Self {
        Self::from_tokens(0, rate_per_1k, epochs)
    }

    /// Sums two estimates billed at the same rate and epoch count.
    pub fn plus_tokens(&self, tokens: u64) -> Self {
        Self::from_tokens(self.token_count + tokens, self.rate_per_1k, self.epochs)
    }
}

/// Estimated cost to fine-tune on `records`; prompt and completion tokens
/// are both billed, once per epoch.
pub fn estimate_cost(
    records: &[PromptCompletion],
    rate_per_1k: Decimal,
    epochs: u32,
) -> Result<CostEstimate, GeneratorError> {
    if epochs == 0 {
        return Err(GeneratorError::InvalidParams("epochs must be at least 1".into()));
    }
    let tokens = records
        .iter()
        .map(|r| estimate_tokens(&r.prompt) + estimate_tokens(&r.completion))
        .sum();
    Ok(CostEstimate::from_tokens(tokens, rate_per_1k, epochs))
}

/// Estimated cost of sampling: prompt plus completion tokens, single pass.
pub fn estimate_generation_cost(prompt: &str, completions: &[String], rate_per_1k: Decimal) -> CostEstimate {
    let prompt_tokens = estimate_tokens(prompt);
    let tokens = completions
        .iter()
        .map(|c| prompt_tokens + estimate_tokens(c))
        .sum();
    CostEstimate::from_tokens(tokens, rate_per_1k, 1)
}
