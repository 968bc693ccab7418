//! Exhaustive decoding over tiny vocabularies.
//!
//! Enumerates every turn the decoder could emit, scores each one, and
//! reports the best sequence overall and the best one containing a
//! constraint phrase. Scoring and tie-breaking mirror the decoder's rules
//! but are written separately here, so a disagreement points at the search.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::constraint_state::find_subsequence;
use crate::curriculum::{ConstraintGroup, Curriculum, PhraseConstraint};
use crate::decoder::{BeamConfig, ScoreMode};
use crate::scorer::{is_impossible, Scorer, ScorerError, TableScorer};
use crate::vocab::{TokenId, Vocabulary};

pub const MAX_ORACLE_VOCAB: usize = 8;
pub const MAX_ORACLE_LEN: usize = 7;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("oracle limited to vocabulary <= {MAX_ORACLE_VOCAB} and max_len <= {MAX_ORACLE_LEN} (got {vocab} and {max_len}); pass force to override")]
    Guard { vocab: usize, max_len: usize },
    #[error("no sequence can terminate under this scorer")]
    NoSequences,
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

/// One fully enumerated sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    /// Generated tokens, eos included when the sequence ended on it.
    pub tokens: Vec<TokenId>,
    pub logp: f64,
    pub score: f64,
    /// Earliest start of any constraint phrase occurrence.
    pub constraint_position: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub best_overall: Scored,
    pub best_satisfying: Option<Scored>,
    pub best_unsatisfying: Option<Scored>,
    /// Number of terminated sequences scored.
    pub enumerated_count: usize,
}

fn sequence_score(logp: f64, len: usize, cfg: &BeamConfig) -> f64 {
    if cfg.score_mode == ScoreMode::LengthNormalized {
        logp / (len as f64).powf(cfg.alpha)
    } else {
        logp
    }
}

/// `Less` when `a` is preferred.
fn preference(a: &Scored, b: &Scored) -> Ordering {
    let by_score = b.score.total_cmp(&a.score);
    if by_score != Ordering::Equal {
        return by_score;
    }
    let by_len = a.tokens.len().cmp(&b.tokens.len());
    if by_len != Ordering::Equal {
        return by_len;
    }
    let by_pos = match (a.constraint_position, b.constraint_position) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Greater,
        (Some(_), None) => Ordering::Less,
        (Some(x), Some(y)) => x.cmp(&y),
    };
    by_pos.then_with(|| a.tokens.cmp(&b.tokens))
}

fn keep_best(slot: &mut Option<Scored>, cand: &Scored) {
    let replace = match slot {
        None => true,
        Some(cur) => preference(cand, cur) == Ordering::Less,
    };
    if replace {
        *slot = Some(cand.clone());
    }
}

fn earliest_phrase(tokens: &[TokenId], remaining: &[&ConstraintGroup]) -> Option<usize> {
    remaining
        .iter()
        .flat_map(|g| g.phrases())
        .filter_map(|p| find_subsequence(tokens, p.token_ids()))
        .min()
}

struct Search<'a, S: ?Sized> {
    scorer: &'a S,
    history: &'a [TokenId],
    remaining: &'a [&'a ConstraintGroup],
    cfg: &'a BeamConfig,
    max_len: usize,
    overall: Option<Scored>,
    satisfying: Option<Scored>,
    unsatisfying: Option<Scored>,
    count: usize,
}

impl<S: Scorer + ?Sized> Search<'_, S> {
    fn visit(&mut self, generated: &mut Vec<TokenId>, logp: f64) -> Result<(), ScorerError> {
        let vocab = self.scorer.vocab();
        let (bos, eos) = (vocab.bos_id(), vocab.eos_id());
        let mut prefix = self.history.to_vec();
        prefix.push(bos);
        prefix.extend_from_slice(generated);
        let row = self.scorer.next_logprobs(&prefix)?;
        for tok in 0..vocab.len() as TokenId {
            let lp = row[tok as usize];
            if tok == bos || is_impossible(lp) {
                continue;
            }
            if tok == eos && generated.len() < self.cfg.min_len {
                continue;
            }
            generated.push(tok);
            let total = logp + lp;
            if tok == eos || generated.len() == self.max_len {
                self.score(generated, total);
            } else {
                self.visit(generated, total)?;
            }
            generated.pop();
        }
        Ok(())
    }

    fn score(&mut self, generated: &[TokenId], logp: f64) {
        self.count += 1;
        let cand = Scored {
            tokens: generated.to_vec(),
            logp,
            score: sequence_score(logp, generated.len(), self.cfg),
            constraint_position: earliest_phrase(generated, self.remaining),
        };
        keep_best(&mut self.overall, &cand);
        if cand.constraint_position.is_some() {
            keep_best(&mut self.satisfying, &cand);
        } else {
            keep_best(&mut self.unsatisfying, &cand);
        }
    }
}

/// Enumerates all turns of at most `max_len` generated tokens.
///
/// Uses `cfg.min_len`, `cfg.score_mode` and `cfg.alpha`; beam settings are
/// irrelevant. Refuses vocabularies above [`MAX_ORACLE_VOCAB`] or lengths
/// above [`MAX_ORACLE_LEN`] unless `force` is set.
pub fn exhaustive_decode<S: Scorer + ?Sized>(
    scorer: &S,
    history: &[TokenId],
    max_len: usize,
    remaining: &[&ConstraintGroup],
    cfg: &BeamConfig,
    force: bool,
) -> Result<OracleResult, OracleError> {
    let vocab_len = scorer.vocab().len();
    if !force && (vocab_len > MAX_ORACLE_VOCAB || max_len > MAX_ORACLE_LEN) {
        return Err(OracleError::Guard {
            vocab: vocab_len,
            max_len,
        });
    }
    let mut search = Search {
        scorer,
        history,
        remaining,
        cfg,
        max_len,
        overall: None,
        satisfying: None,
        unsatisfying: None,
        count: 0,
    };
    if max_len > 0 {
        search.visit(&mut Vec::new(), 0.0)?;
    }
    Ok(OracleResult {
        best_overall: search.overall.ok_or(OracleError::NoSequences)?,
        best_satisfying: search.satisfying,
        best_unsatisfying: search.unsatisfying,
        enumerated_count: search.count,
    })
}

/// A randomized decoding problem small enough for [`exhaustive_decode`].
#[derive(Clone, Debug)]
pub struct RandomCase {
    pub scorer: TableScorer,
    pub curriculum: Curriculum,
}

fn random_row(rng: &mut ChaCha8Rng, len: usize, bos: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..len).map(|_| rng.gen_range(0.05..1.0)).collect();
    w[bos] = 0.0;
    // Occasionally make a token impossible, never all of them.
    if rng.gen_bool(0.15) {
        let z = rng.gen_range(0..len);
        if z != bos {
            w[z] = 0.0;
        }
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

/// Builds a context-dependent table scorer over `<bos>`, `<eos>` and
/// `words` word tokens, with a 1-2 group curriculum of 1-2 token phrases.
pub fn random_case(seed: u64, words: usize, max_len: usize) -> RandomCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (0..words).map(|i| format!("w{i}")).collect();
    let vocab = Vocabulary::with_words(&names);
    let (bos, eos) = (vocab.bos_id(), vocab.eos_id());
    let len = vocab.len();
    let word_ids: Vec<TokenId> = (0..len as TokenId)
        .filter(|&t| t != bos && t != eos)
        .collect();

    let probs = random_row(&mut rng, len, bos as usize);
    let mut scorer = TableScorer::from_probs(vocab.clone(), &probs).expect("normalized");
    // Every in-turn prefix that can still be extended gets its own row.
    let mut frontier = vec![vec![bos]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for prefix in frontier {
            let probs = random_row(&mut rng, len, bos as usize);
            scorer
                .set_override_probs(prefix.clone(), &probs)
                .expect("normalized");
            for &w in &word_ids {
                let mut p = prefix.clone();
                p.push(w);
                next.push(p);
            }
        }
        frontier = next;
    }

    let n_groups = rng.gen_range(1..=2);
    let mut groups = Vec::new();
    for g in 0..n_groups {
        let n_phrases = rng.gen_range(1..=2);
        let mut phrases: Vec<PhraseConstraint> = Vec::new();
        while phrases.len() < n_phrases {
            let plen = rng.gen_range(1..=2);
            let ids: Vec<TokenId> = (0..plen)
                .map(|_| word_ids[rng.gen_range(0..word_ids.len())])
                .collect();
            let surface = vocab.detokenize(&ids);
            if phrases.iter().all(|p| p.surface() != surface) {
                phrases.push(PhraseConstraint::new(surface, ids));
            }
        }
        groups.push(ConstraintGroup::new(format!("g{g}"), phrases).expect("valid group"));
    }
    RandomCase {
        scorer,
        curriculum: Curriculum::new(groups).expect("distinct names"),
    }
}
