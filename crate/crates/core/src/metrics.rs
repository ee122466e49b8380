//! Answer normalization, token-level F1 and the averages used in reports.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no gold answers to score against")]
    NoAliases,
    #[error("cannot average an empty set")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreTriple {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ScoreTriple {
    pub const ZERO: ScoreTriple = ScoreTriple {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercase, drop ASCII punctuation, drop the articles a/an/the, and
/// collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered: String = text
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    lowered
        .split_whitespace()
        .filter(|t| !ARTICLES.contains(t))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Multiset token overlap F1 between normalized prediction and gold.
pub fn token_f1(prediction: &str, gold: &str) -> ScoreTriple {
    let pred = normalize_answer(prediction);
    let gold = normalize_answer(gold);
    let pred_tokens: Vec<&str> = pred.split_whitespace().collect();
    let gold_tokens: Vec<&str> = gold.split_whitespace().collect();

    match (pred_tokens.is_empty(), gold_tokens.is_empty()) {
        (true, true) => return ScoreTriple::from_pr(1.0, 1.0),
        (true, false) | (false, true) => return ScoreTriple::ZERO,
        _ => {}
    }

    let mut gold_counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold_tokens {
        *gold_counts.entry(t).or_insert(0) += 1;
    }
    let mut overlap = 0usize;
    for t in &pred_tokens {
        if let Some(c) = gold_counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return ScoreTriple::ZERO;
    }
    ScoreTriple::from_pr(
        overlap as f64 / pred_tokens.len() as f64,
        overlap as f64 / gold_tokens.len() as f64,
    )
}

/// Best score over gold aliases; the first alias wins ties.
pub fn best_over_aliases<S: AsRef<str>>(prediction: &str, gold_answers: &[S]) -> Result<ScoreTriple, MetricsError> {
    let mut best: Option<ScoreTriple> = None;
    for alias in gold_answers {
        let s = token_f1(prediction, alias.as_ref());
        if best.is_none_or(|b| s.f1 > b.f1) {
            best = Some(s);
        }
    }
    best.ok_or(MetricsError::NoAliases)
}

/// Anything carrying a per-example F1.
pub trait HasF1 {
    fn f1(&self) -> f64;
}

impl HasF1 for f64 {
    fn f1(&self) -> f64 {
        *self
    }
}

impl HasF1 for ScoreTriple {
    fn f1(&self) -> f64 {
        self.f1
    }
}

/// Anything carrying an output length in characters.
pub trait HasCharLen {
    fn char_len(&self) -> usize;
}

impl HasCharLen for usize {
    fn char_len(&self) -> usize {
        *self
    }
}

/// Mean of per-example F1 over all items pooled together.
pub fn micro_average<T: HasF1>(items: &[T]) -> Result<f64, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(items.iter().map(HasF1::f1).sum::<f64>() / items.len() as f64)
}

pub fn avg_output_chars<T: HasCharLen>(items: &[T]) -> Result<f64, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::Empty);
    }
    let total: u64 = items.iter().map(|o| o.char_len() as u64).sum();
    Ok(total as f64 / items.len() as f64)
}

/// Percentage with two decimals, the display format of report tables.
pub fn pct(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}
