use std::collections::HashMap;
use std::sync::Arc;

use super::{logprobs_from_probs, validate_row, LogProbs, Scorer, ScorerError};
use crate::vocab::{TokenId, Vocabulary};

/// Fixed lookup table: exact-prefix overrides on top of a default row.
#[derive(Clone, Debug)]
pub struct TableScorer {
    vocab: Vocabulary,
    default_dist: LogProbs,
    overrides: HashMap<Vec<TokenId>, LogProbs>,
}

impl TableScorer {
    pub fn new(vocab: Vocabulary, default_dist: Vec<f64>) -> Result<Self, ScorerError> {
        let default_dist = validate_row(&vocab, default_dist)?.into();
        Ok(Self {
            vocab,
            default_dist,
            overrides: HashMap::new(),
        })
    }

    /// Same as [`TableScorer::new`] but takes linear probabilities.
    pub fn from_probs(vocab: Vocabulary, probs: &[f64]) -> Result<Self, ScorerError> {
        let row = logprobs_from_probs(&vocab, probs)?;
        Self::new(vocab, row)
    }

    pub fn set_override(
        &mut self,
        prefix: Vec<TokenId>,
        dist: Vec<f64>,
    ) -> Result<(), ScorerError> {
        let row = validate_row(&self.vocab, dist)?;
        self.overrides.insert(prefix, row.into());
        Ok(())
    }

    pub fn set_override_probs(
        &mut self,
        prefix: Vec<TokenId>,
        probs: &[f64],
    ) -> Result<(), ScorerError> {
        let row = logprobs_from_probs(&self.vocab, probs)?;
        self.overrides.insert(prefix, row.into());
        Ok(())
    }
}

impl Scorer for TableScorer {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_logprobs(&self, prefix: &[TokenId]) -> Result<LogProbs, ScorerError> {
        Ok(Arc::clone(
            self.overrides.get(prefix).unwrap_or(&self.default_dist),
        ))
    }
}
