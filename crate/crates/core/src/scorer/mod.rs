//! Next-token log-probability sources.
//!
//! A [`Scorer`] maps a token prefix (dialog history followed by the current
//! turn's `<bos>` and generated tokens) to a full log-probability vector over
//! the vocabulary. Impossible tokens carry the finite sentinel [`LOG_ZERO`]
//! rather than `-inf`, so scores always sort totally.

mod ngram;
mod subprocess;
mod table;

use std::sync::Arc;

use thiserror::Error;

use crate::vocab::{TokenId, Vocabulary};

pub use ngram::NgramScorer;
pub use subprocess::SubprocessScorer;
pub use table::TableScorer;

/// Shared, immutable log-probability row.
pub type LogProbs = Arc<[f64]>;

/// Log-probability of an impossible event.
pub const LOG_ZERO: f64 = f64::MIN;

/// Tolerance on `sum(exp(row)) == 1`.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

pub fn is_impossible(logp: f64) -> bool {
    logp <= LOG_ZERO
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScorerError {
    #[error("expected {expected} log-probabilities, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("log-probabilities do not normalize: exp-sum is {sum}")]
    Normalization { sum: f64 },
    #[error("log-probability at index {index} is not a valid value ({value})")]
    InvalidValue { index: usize, value: f64 },
    #[error("<bos> must have zero probability, got log-probability {0}")]
    BosProbability(f64),
    #[error("prefix contains unknown token id {0}")]
    UnknownToken(TokenId),
    #[error("invalid scorer parameters: {0}")]
    InvalidParameters(String),
    #[error("scorer process exited ({0})")]
    ChildExited(String),
    #[error("malformed response from scorer process: {0}")]
    Malformed(String),
    #[error("scorer handshake failed: {0}")]
    Handshake(String),
    #[error("scorer process i/o: {0}")]
    Io(String),
}

/// Pluggable language model.
///
/// Implementations must be deterministic and return rows where `<bos>` is
/// impossible and the probabilities sum to one within
/// [`NORMALIZATION_TOLERANCE`].
pub trait Scorer: Send + Sync {
    fn vocab(&self) -> &Vocabulary;

    fn next_logprobs(&self, prefix: &[TokenId]) -> Result<LogProbs, ScorerError>;
}

impl<S: Scorer + ?Sized> Scorer for Arc<S> {
    fn vocab(&self) -> &Vocabulary {
        (**self).vocab()
    }

    fn next_logprobs(&self, prefix: &[TokenId]) -> Result<LogProbs, ScorerError> {
        (**self).next_logprobs(prefix)
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn vocab(&self) -> &Vocabulary {
        (**self).vocab()
    }

    fn next_logprobs(&self, prefix: &[TokenId]) -> Result<LogProbs, ScorerError> {
        (**self).next_logprobs(prefix)
    }
}

/// `sum(exp(row))`, skipping sentinel entries.
pub fn exp_sum(row: &[f64]) -> f64 {
    row.iter()
        .filter(|lp| !is_impossible(**lp))
        .map(|lp| lp.exp())
        .sum()
}

/// Maps `-inf` to [`LOG_ZERO`] and validates a row against the scorer
/// contract for `vocab`.
pub fn validate_row(vocab: &Vocabulary, mut row: Vec<f64>) -> Result<Vec<f64>, ScorerError> {
    if row.len() != vocab.len() {
        return Err(ScorerError::LengthMismatch {
            expected: vocab.len(),
            actual: row.len(),
        });
    }
    for (index, v) in row.iter_mut().enumerate() {
        if *v == f64::NEG_INFINITY {
            *v = LOG_ZERO;
        } else if v.is_nan() || *v > 0.0 {
            return Err(ScorerError::InvalidValue { index, value: *v });
        }
    }
    let bos = row[vocab.bos_id() as usize];
    if !is_impossible(bos) {
        return Err(ScorerError::BosProbability(bos));
    }
    let sum = exp_sum(&row);
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(ScorerError::Normalization { sum });
    }
    Ok(row)
}

/// Converts probabilities to a validated log row (`0` becomes [`LOG_ZERO`]).
pub fn logprobs_from_probs(vocab: &Vocabulary, probs: &[f64]) -> Result<Vec<f64>, ScorerError> {
    let row = probs
        .iter()
        .map(|&p| if p <= 0.0 { LOG_ZERO } else { p.ln() })
        .collect();
    validate_row(vocab, row)
}
