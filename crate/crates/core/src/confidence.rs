//! Token-distribution confidence metrics and most-confident-answer selection.
//!
//! Every metric averages a per-step quantity over all `n` generated tokens.
//! Distribution-level metrics (gini, entropy, dp, self-certainty) run over
//! the completed vocabulary distribution: listed tokens keep their
//! probabilities and the tail mass is spread uniformly over the unlisted
//! tokens. All probabilities are floored at [`PROB_FLOOR`] and logarithms
//! are natural.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::generation::{GenerationRecord, TokenStep};

pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfidenceError {
    #[error("no token steps to score")]
    EmptySteps,
    #[error("vocabulary size {vocab} smaller than listed distribution ({listed})")]
    VocabTooSmall { vocab: usize, listed: usize },
    #[error("no records to select from")]
    NoRecords,
    #[error("record {index} has no `{metric}` score")]
    MissingScore { index: usize, metric: MetricName },
    #[error("unknown metric `{0}` (expected avg-log-p, self-certainty, gini, entropy or dp)")]
    UnknownMetric(String),
    #[error("raw score is not finite")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricName {
    AvgLogP,
    SelfCertainty,
    Gini,
    Entropy,
    Dp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    HigherIsConfident,
    LowerIsConfident,
}

impl MetricName {
    /// Column order used in reports.
    pub const ALL: [MetricName; 5] =
        [MetricName::AvgLogP, MetricName::SelfCertainty, MetricName::Gini, MetricName::Entropy, MetricName::Dp];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::AvgLogP => "avg-log-p",
            MetricName::SelfCertainty => "self-certainty",
            MetricName::Gini => "gini",
            MetricName::Entropy => "entropy",
            MetricName::Dp => "dp",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MetricName::AvgLogP => "AvgLogP",
            MetricName::SelfCertainty => "Self-certainty",
            MetricName::Gini => "Gini",
            MetricName::Entropy => "Entropy",
            MetricName::Dp => "DP",
        }
    }

    pub fn orientation(self) -> Orientation {
        match self {
            MetricName::Entropy | MetricName::Dp => Orientation::LowerIsConfident,
            _ => Orientation::HigherIsConfident,
        }
    }

    pub fn compute(self, steps: &[TokenStep]) -> Result<f64, ConfidenceError> {
        match self {
            MetricName::AvgLogP => avg_log_p(steps),
            MetricName::SelfCertainty => self_certainty(steps),
            MetricName::Gini => gini(steps),
            MetricName::Entropy => entropy(steps),
            MetricName::Dp => dp(steps),
        }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricName {
    type Err = ConfidenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        MetricName::ALL
            .into_iter()
            .find(|m| m.as_str() == norm || m.label().to_ascii_lowercase() == norm || (norm == "avglogp" && *m == MetricName::AvgLogP))
            .ok_or_else(|| ConfidenceError::UnknownMetric(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceScore {
    pub metric: MetricName,
    pub raw: f64,
    /// Greater always means more confident.
    pub oriented: f64,
}

pub fn orient(metric: MetricName, raw: f64) -> Result<ConfidenceScore, ConfidenceError> {
    if !raw.is_finite() {
        return Err(ConfidenceError::NonFinite);
    }
    let oriented = match metric.orientation() {
        Orientation::HigherIsConfident => raw,
        Orientation::LowerIsConfident => -raw,
    };
    Ok(ConfidenceScore { metric, raw, oriented })
}

/// Completed distribution of a step: listed probabilities plus a block of
/// `unlisted` tokens that share the tail mass, all floored.
struct Completed<'a> {
    listed: &'a [(String, f64)],
    unlisted: usize,
    unlisted_prob: f64,
    vocab: f64,
}

impl<'a> Completed<'a> {
    fn of(step: &'a TokenStep) -> Result<Self, ConfidenceError> {
        let listed = step.dist();
        if step.vocab_size() < listed.len() {
            return Err(ConfidenceError::VocabTooSmall { vocab: step.vocab_size(), listed: listed.len() });
        }
        let unlisted = step.unlisted();
        let unlisted_prob = if unlisted > 0 { step.tail_mass() / unlisted as f64 } else { 0.0 };
        Ok(Self { listed, unlisted, unlisted_prob: floor(unlisted_prob), vocab: step.vocab_size() as f64 })
    }

    /// Σ_j f(p_j) over the whole vocabulary.
    fn sum(&self, f: impl Fn(f64) -> f64) -> f64 {
        let listed: f64 = self.listed.iter().map(|(_, p)| f(floor(*p))).sum();
        listed + self.unlisted as f64 * f(self.unlisted_prob)
    }
}

fn floor(p: f64) -> f64 {
    p.max(PROB_FLOOR)
}

fn mean_over_steps(
    steps: &[TokenStep],
    per_step: impl Fn(&Completed<'_>) -> f64,
) -> Result<f64, ConfidenceError> {
    if steps.is_empty() {
        return Err(ConfidenceError::EmptySteps);
    }
    let mut total = 0.0;
    for step in steps {
        total += per_step(&Completed::of(step)?);
    }
    Ok(total / steps.len() as f64)
}

fn step_entropy(c: &Completed<'_>) -> f64 {
    c.sum(|p| -p * p.ln())
}

/// Mean log-probability of the emitted tokens.
pub fn avg_log_p(steps: &[TokenStep]) -> Result<f64, ConfidenceError> {
    if steps.is_empty() {
        return Err(ConfidenceError::EmptySteps);
    }
    Ok(steps.iter().map(|s| floor(s.chosen_prob()).ln()).sum::<f64>() / steps.len() as f64)
}

/// Mean Σp² per step: 1 for one-hot, 1/|v| for uniform.
pub fn gini(steps: &[TokenStep]) -> Result<f64, ConfidenceError> {
    mean_over_steps(steps, |c| c.sum(|p| p * p))
}

/// Mean Shannon entropy per step.
pub fn entropy(steps: &[TokenStep]) -> Result<f64, ConfidenceError> {
    mean_over_steps(steps, step_entropy)
}

/// Distributional perplexity: mean of exp(entropy) per step.
pub fn dp(steps: &[TokenStep]) -> Result<f64, ConfidenceError> {
    mean_over_steps(steps, |c| step_entropy(c).exp())
}

/// Mean over steps of −(1/|v|) Σ_j ln(|v|·p_j), a divergence from uniform.
pub fn self_certainty(steps: &[TokenStep]) -> Result<f64, ConfidenceError> {
    mean_over_steps(steps, |c| -c.sum(|p| (c.vocab * p).ln()) / c.vocab)
}

/// Scores `steps` under every metric.
pub fn score_all(steps: &[TokenStep]) -> Result<BTreeMap<MetricName, ConfidenceScore>, ConfidenceError> {
    MetricName::ALL
        .into_iter()
        .map(|m| Ok((m, orient(m, m.compute(steps)?)?)))
        .collect()
}

/// Index of the record with the highest oriented score under `metric`.
/// Equal scores go to the lowest embedding-model index, then list position.
pub fn select_most_confident<R: AsRef<GenerationRecord>>(
    records: &[R],
    metric: MetricName,
) -> Result<usize, ConfidenceError> {
    if records.is_empty() {
        return Err(ConfidenceError::NoRecords);
    }
    let mut best: Option<(usize, f64, usize)> = None;
    for (index, record) in records.iter().enumerate() {
        let record = record.as_ref();
        let score = record
            .score(metric)
            .ok_or(ConfidenceError::MissingScore { index, metric })?
            .oriented;
        let model = record.model_index.unwrap_or(usize::MAX);
        let better = match best {
            None => true,
            Some((_, s, m)) => score > s || (score == s && model < m),
        };
        if better {
            best = Some((index, score, model));
        }
    }
    Ok(best.expect("non-empty").0)
}

impl AsRef<GenerationRecord> for GenerationRecord {
    fn as_ref(&self) -> &GenerationRecord {
        self
    }
}
