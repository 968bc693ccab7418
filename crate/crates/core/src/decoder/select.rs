use serde::Serialize;

use super::hypothesis::{Bank, Hypothesis};
use super::{final_score, BeamConfig, DecodeError};
use crate::vocab::TokenId;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct BestScores {
    pub satisfied: Option<f64>,
    pub unsatisfied: Option<f64>,
}

/// Outcome of one decoded turn.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TurnResult {
    /// Generated tokens without `<bos>`/`<eos>`.
    pub utterance: Vec<TokenId>,
    /// Set exactly when the satisfied bank was chosen.
    pub satisfied_group: Option<String>,
    pub chosen_bank: Bank,
    pub chosen_logp: f64,
    pub best_scores: BestScores,
    pub threshold_used: f64,
    /// Groups that were eligible for forcing in this turn.
    pub remaining_at_start: Vec<String>,
}

/// Accepts the satisfied candidate iff its score beats the unsatisfied
/// candidate's score minus `threshold`. A lone candidate is always taken.
pub fn select_final(
    best_sat: Option<&Hypothesis>,
    best_unsat: Option<&Hypothesis>,
    threshold: f64,
    cfg: &BeamConfig,
) -> Result<TurnResult, DecodeError> {
    let scores = BestScores {
        satisfied: best_sat.map(|h| final_score(h, cfg)).transpose()?,
        unsatisfied: best_unsat.map(|h| final_score(h, cfg)).transpose()?,
    };
    let (chosen, bank) = match (best_sat, best_unsat, scores.satisfied, scores.unsatisfied) {
        (Some(s), Some(_), Some(ss), Some(su)) if ss > su - threshold => (s, Bank::Satisfied),
        (_, Some(u), _, _) => (u, Bank::Unsatisfied),
        (Some(s), None, _, _) => (s, Bank::Satisfied),
        (None, None, _, _) => return Err(DecodeError::NoCandidates),
    };
    let satisfied_group = match bank {
        Bank::Satisfied => chosen.forced.as_ref().map(|f| f.group_name.to_string()),
        Bank::Unsatisfied => None,
    };
    Ok(TurnResult {
        utterance: chosen.utterance(),
        satisfied_group,
        chosen_bank: bank,
        chosen_logp: chosen.logp,
        best_scores: scores,
        threshold_used: threshold,
        remaining_at_start: Vec::new(),
    })
}
