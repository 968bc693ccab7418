use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::vocab::TokenId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Bank {
    Unsatisfied,
    Satisfied,
}

/// How a token was added to a hypothesis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Expansion {
    /// Ordinary top-k continuation.
    Generate,
    /// First token of a force-inserted phrase.
    Start,
    /// Later token of a force-inserted phrase.
    Continue,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Finish {
    Eos,
    MaxLen,
}

/// A force-inserted phrase that is still being emitted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InProgress {
    /// Index into the turn's remaining-group list.
    pub group: usize,
    pub phrase: usize,
    pub next_position: usize,
}

/// The phrase force-inserted into a hypothesis this turn.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForcedPhrase {
    pub group: usize,
    pub group_name: Arc<str>,
    pub phrase: usize,
    /// Offset of the first phrase token among the generated tokens.
    pub start: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Starts with `<bos>`.
    pub tokens: Vec<TokenId>,
    /// Sum of per-token log-probabilities, `<bos>` excluded.
    pub logp: f64,
    pub bank: Bank,
    pub in_progress: Option<InProgress>,
    pub forced: Option<ForcedPhrase>,
    /// One entry per generated token.
    pub provenance: Vec<Expansion>,
    pub finish: Option<Finish>,
}

impl Hypothesis {
    pub fn root(bos: TokenId) -> Self {
        Self {
            tokens: vec![bos],
            logp: 0.0,
            bank: Bank::Unsatisfied,
            in_progress: None,
            forced: None,
            provenance: Vec::new(),
            finish: None,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.finish.is_some()
    }

    /// Tokens after `<bos>`, eos included.
    pub fn generated(&self) -> &[TokenId] {
        &self.tokens[1..]
    }

    pub fn generated_len(&self) -> usize {
        self.tokens.len() - 1
    }

    /// Generated tokens with a trailing eos removed.
    pub fn utterance(&self) -> Vec<TokenId> {
        let gen = self.generated();
        match self.finish {
            Some(Finish::Eos) => gen[..gen.len() - 1].to_vec(),
            _ => gen.to_vec(),
        }
    }

    pub fn constraint_position(&self) -> Option<usize> {
        self.forced.as_ref().map(|f| f.start)
    }

    pub(crate) fn extend(&self, token: TokenId, logp: f64, how: Expansion) -> Self {
        let mut tokens = Vec::with_capacity(self.tokens.len() + 1);
        tokens.extend_from_slice(&self.tokens);
        tokens.push(token);
        let mut provenance = Vec::with_capacity(self.provenance.len() + 1);
        provenance.extend_from_slice(&self.provenance);
        provenance.push(how);
        Self {
            tokens,
            logp: self.logp + logp,
            bank: self.bank,
            in_progress: self.in_progress,
            forced: self.forced.clone(),
            provenance,
            finish: None,
        }
    }
}

/// Total ranking order: higher score, then shorter, then earlier constraint
/// position (constrained before unconstrained), then lexicographically
/// smaller tokens. `Less` means `a` ranks first.
pub fn rank_cmp(a_score: f64, a: &Hypothesis, b_score: f64, b: &Hypothesis) -> Ordering {
    b_score
        .total_cmp(&a_score)
        .then(a.tokens.len().cmp(&b.tokens.len()))
        .then_with(
            || match (a.constraint_position(), b.constraint_position()) {
                (Some(x), Some(y)) => x.cmp(&y),
                (Some(_), None) => Ordering::Less,
                (None, Some(_)) => Ordering::Greater,
                (None, None) => Ordering::Equal,
            },
        )
        .then_with(|| a.tokens.cmp(&b.tokens))
}
