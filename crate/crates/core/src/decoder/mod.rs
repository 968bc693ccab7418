//! Two-bank grid beam search for one dialog turn.
//!
//! Hypotheses live in three pools: an unsatisfied bank built by ordinary
//! beam search, a satisfied bank holding candidates that contain exactly one
//! force-inserted constraint phrase, and an in-progress pool for candidates
//! part-way through a multi-token phrase. Only unsatisfied hypotheses may
//! start a constraint. When search ends, the best finished candidate of
//! each bank goes through the threshold comparison in [`select_final`].

mod grid;
mod hypothesis;
mod select;
mod vanilla;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::scorer::ScorerError;

pub use grid::{decode_turn, gbs_step, search_banks, BankOutcome, Banks};
pub use hypothesis::{rank_cmp, Bank, Expansion, Finish, ForcedPhrase, Hypothesis, InProgress};
pub use select::{select_final, BestScores, TurnResult};
pub use vanilla::vanilla_beam_search;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error("invalid beam configuration: {0}")]
    InvalidConfig(String),
    #[error("no finished candidate in either bank")]
    NoCandidates,
    #[error("final score requested for an unfinished hypothesis")]
    Unfinished,
}

/// How finished candidates are ranked and compared against the threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Accumulated log-probability.
    #[default]
    Raw,
    /// `logp / len^alpha`, with `len` counting generated tokens and eos.
    LengthNormalized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamConfig {
    /// Beam size per pool.
    pub k: usize,
    /// Maximum generated tokens per turn, eos included.
    pub max_len: usize,
    /// Generated tokens required before eos may be emitted.
    pub min_len: usize,
    /// Length penalty exponent.
    pub alpha: f64,
    /// Initial acceptance threshold, in log-probability units.
    pub t0: f64,
    /// Threshold growth rate per turn.
    pub a: f64,
    pub score_mode: ScoreMode,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            k: 10,
            max_len: 20,
            min_len: 1,
            alpha: 1.0,
            t0: 10.0,
            a: 1.0,
            score_mode: ScoreMode::Raw,
            execution: Execution::default(),
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        let bad = |m: String| Err(DecodeError::InvalidConfig(m));
        if self.k == 0 {
            return bad("beam size must be >= 1".into());
        }
        if self.max_len < 2 {
            return bad(format!("max_len must be >= 2, got {}", self.max_len));
        }
        if self.min_len > self.max_len {
            return bad(format!(
                "min_len {} exceeds max_len {}",
                self.min_len, self.max_len
            ));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("length penalty must be >= 0, got {}", self.alpha));
        }
        if !self.t0.is_finite() || !self.a.is_finite() {
            return bad("threshold parameters must be finite".into());
        }
        Ok(())
    }
}

/// Logistic function `1 / (1 + e^-x)`, evaluated without overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Acceptance threshold for turn `t`: `t0 * 2 * sigmoid(a * t)`.
///
/// Equals `t0` at `t = 0` and approaches `2 * t0` as `t` grows when `a > 0`.
pub fn dynamic_threshold(t0: f64, a: f64, t: usize) -> f64 {
    t0 * (2.0 * sigmoid(a * t as f64))
}

/// Score used to rank finished candidates.
pub fn final_score(h: &Hypothesis, cfg: &BeamConfig) -> Result<f64, DecodeError> {
    if !h.is_finished() {
        return Err(DecodeError::Unfinished);
    }
    Ok(score_finished(h.logp, h.generated_len(), cfg))
}

pub(crate) fn score_finished(logp: f64, len: usize, cfg: &BeamConfig) -> f64 {
    match cfg.score_mode {
        ScoreMode::Raw => logp,
        ScoreMode::LengthNormalized => logp / (len as f64).powf(cfg.alpha),
    }
}
