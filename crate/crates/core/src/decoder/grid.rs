use std::collections::HashSet;
use std::sync::Arc;

use super::hypothesis::{rank_cmp, Bank, Expansion, Finish, ForcedPhrase, Hypothesis, InProgress};
use super::select::{select_final, TurnResult};
use super::{dynamic_threshold, final_score, BeamConfig, DecodeError};
use crate::curriculum::ConstraintGroup;
use crate::exec;
use crate::scorer::{is_impossible, Scorer};
use crate::vocab::TokenId;

/// Active pools and finished sets of a two-bank search.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Banks {
    pub unsatisfied: Vec<Hypothesis>,
    pub satisfied: Vec<Hypothesis>,
    pub in_progress: Vec<Hypothesis>,
    pub finished_unsatisfied: Vec<Hypothesis>,
    pub finished_satisfied: Vec<Hypothesis>,
}

impl Banks {
    pub fn initial(bos: TokenId) -> Self {
        Self {
            unsatisfied: vec![Hypothesis::root(bos)],
            ..Self::default()
        }
    }

    /// True once no pool has an unfinished hypothesis left.
    pub fn is_exhausted(&self) -> bool {
        self.unsatisfied.is_empty() && self.satisfied.is_empty() && self.in_progress.is_empty()
    }
}

/// Best finished candidate of each bank.
#[derive(Clone, Debug, PartialEq)]
pub struct BankOutcome {
    pub best_unsatisfied: Option<Hypothesis>,
    pub best_satisfied: Option<Hypothesis>,
}

impl BankOutcome {
    /// Better of the two bank bests under the ranking order.
    pub fn best_overall(&self, cfg: &BeamConfig) -> Option<&Hypothesis> {
        match (&self.best_unsatisfied, &self.best_satisfied) {
            (Some(u), Some(s)) => {
                let (su, ss) = (final_score(u, cfg).ok()?, final_score(s, cfg).ok()?);
                Some(if rank_cmp(ss, s, su, u).is_lt() { s } else { u })
            }
            (u, s) => u.as_ref().or(s.as_ref()),
        }
    }
}

/// Up to `k` best continuations of one row, best first, ties to lower ids.
pub(crate) fn top_continuations(
    row: &[f64],
    k: usize,
    eos: TokenId,
    bos: TokenId,
    allow_eos: bool,
    banned: &[TokenId],
) -> Vec<(TokenId, f64)> {
    let better = |a: &(TokenId, f64), b: &(TokenId, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    let mut top: Vec<(TokenId, f64)> = Vec::with_capacity(k + 1);
    for (id, &lp) in row.iter().enumerate() {
        let id = id as TokenId;
        if id == bos || is_impossible(lp) || (id == eos && !allow_eos) || banned.contains(&id) {
            continue;
        }
        let cand = (id, lp);
        if top.len() == k && better(&cand, &top[k - 1]).is_ge() {
            continue;
        }
        let at = top.partition_point(|x| better(x, &cand).is_lt());
        top.insert(at, cand);
        top.truncate(k);
    }
    top
}

/// Tokens that would complete a remaining phrase at the end of `h`.
fn completing_tokens(h: &Hypothesis, remaining: &[&ConstraintGroup]) -> Vec<TokenId> {
    let mut out = Vec::new();
    for g in remaining {
        for p in g.phrases() {
            let ids = p.token_ids();
            let (head, last) = ids.split_at(ids.len() - 1);
            if h.generated().ends_with(head) {
                out.push(last[0]);
            }
        }
    }
    out
}

fn mark_finish(mut h: Hypothesis, eos: TokenId, max_len: usize) -> Hypothesis {
    if h.tokens.last() == Some(&eos) {
        h.finish = Some(Finish::Eos);
    } else if h.generated_len() >= max_len {
        h.finish = Some(Finish::MaxLen);
    }
    h
}

/// Keeps the `k` best distinct candidates, split into (active, finished).
type PoolKey<'a> = (&'a [TokenId], Option<(usize, usize)>);

fn prune(mut cands: Vec<Hypothesis>, k: usize) -> (Vec<Hypothesis>, Vec<Hypothesis>) {
    cands.sort_by(|a, b| rank_cmp(a.logp, a, b.logp, b));
    // In-progress hypotheses share a prefix across phrases with a common
    // first token, so the phrase is part of the identity.
    let mut seen: HashSet<PoolKey> = HashSet::with_capacity(k);
    let mut keep = vec![false; cands.len()];
    for (i, c) in cands.iter().enumerate() {
        if seen.len() == k {
            break;
        }
        let key = (
            c.tokens.as_slice(),
            c.in_progress.map(|ip| (ip.group, ip.phrase)),
        );
        if seen.insert(key) {
            keep[i] = true;
        }
    }
    let mut active = Vec::new();
    let mut finished = Vec::new();
    for (c, kept) in cands.into_iter().zip(keep) {
        if !kept {
            continue;
        }
        if c.is_finished() {
            finished.push(c);
        } else {
            active.push(c);
        }
    }
    (active, finished)
}

/// Advances every pool by one token.
///
/// Unsatisfied hypotheses get their top-k continuations (minus any token
/// that would complete a remaining phrase, which is only reachable through
/// a forced start) and one forced start per remaining phrase that still
/// fits. In-progress hypotheses take only their phrase's next token.
/// Satisfied hypotheses get ordinary top-k continuations and never a second
/// forced phrase. Each pool is then cut back to `k`.
pub fn gbs_step<S: Scorer + ?Sized>(
    banks: &mut Banks,
    scorer: &S,
    history: &[TokenId],
    remaining: &[&ConstraintGroup],
    cfg: &BeamConfig,
) -> Result<(), DecodeError> {
    let vocab = scorer.vocab();
    let (bos, eos) = (vocab.bos_id(), vocab.eos_id());
    let names: Vec<Arc<str>> = remaining.iter().map(|g| Arc::from(g.name())).collect();

    let active: Vec<&Hypothesis> = banks
        .unsatisfied
        .iter()
        .chain(&banks.in_progress)
        .chain(&banks.satisfied)
        .collect();
    let rows = exec::map(cfg.execution, &active, |h| {
        let mut prefix = Vec::with_capacity(history.len() + h.tokens.len());
        prefix.extend_from_slice(history);
        prefix.extend_from_slice(&h.tokens);
        scorer.next_logprobs(&prefix)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let (unsat_rows, rest) = rows.split_at(banks.unsatisfied.len());
    let (prog_rows, sat_rows) = rest.split_at(banks.in_progress.len());

    let mut next_unsat = Vec::new();
    let mut next_sat = Vec::new();
    let mut next_prog = Vec::new();

    for (h, row) in banks.unsatisfied.iter().zip(unsat_rows) {
        let allow_eos = h.generated_len() >= cfg.min_len;
        let banned = completing_tokens(h, remaining);
        for (tok, lp) in top_continuations(row, cfg.k, eos, bos, allow_eos, &banned) {
            next_unsat.push(mark_finish(
                h.extend(tok, lp, Expansion::Generate),
                eos,
                cfg.max_len,
            ));
        }
        for (gi, group) in remaining.iter().enumerate() {
            for (pi, phrase) in group.phrases().iter().enumerate() {
                if h.generated_len() + phrase.len() > cfg.max_len {
                    continue;
                }
                let first = phrase.token_ids()[0];
                let lp = row[first as usize];
                if is_impossible(lp) {
                    continue;
                }
                let mut c = h.extend(first, lp, Expansion::Start);
                c.forced = Some(ForcedPhrase {
                    group: gi,
                    group_name: names[gi].clone(),
                    phrase: pi,
                    start: h.generated_len(),
                });
                if phrase.len() == 1 {
                    c.bank = Bank::Satisfied;
                    next_sat.push(mark_finish(c, eos, cfg.max_len));
                } else {
                    c.in_progress = Some(InProgress {
                        group: gi,
                        phrase: pi,
                        next_position: 1,
                    });
                    next_prog.push(c);
                }
            }
        }
    }

    for (h, row) in banks.in_progress.iter().zip(prog_rows) {
        let ip = h
            .in_progress
            .expect("in-progress pool holds in-progress hypotheses");
        let ids = remaining[ip.group].phrases()[ip.phrase].token_ids();
        let tok = ids[ip.next_position];
        let lp = row[tok as usize];
        if is_impossible(lp) {
            continue;
        }
        let mut c = h.extend(tok, lp, Expansion::Continue);
        if ip.next_position + 1 == ids.len() {
            c.in_progress = None;
            c.bank = Bank::Satisfied;
            next_sat.push(mark_finish(c, eos, cfg.max_len));
        } else {
            c.in_progress = Some(InProgress {
                next_position: ip.next_position + 1,
                ..ip
            });
            next_prog.push(c);
        }
    }

    for (h, row) in banks.satisfied.iter().zip(sat_rows) {
        let allow_eos = h.generated_len() >= cfg.min_len;
        for (tok, lp) in top_continuations(row, cfg.k, eos, bos, allow_eos, &[]) {
            next_sat.push(mark_finish(
                h.extend(tok, lp, Expansion::Generate),
                eos,
                cfg.max_len,
            ));
        }
    }

    let (unsat, fin_unsat) = prune(next_unsat, cfg.k);
    let (sat, fin_sat) = prune(next_sat, cfg.k);
    let (prog, fin_prog) = prune(next_prog, cfg.k);
    debug_assert!(
        fin_prog.is_empty(),
        "forced phrases always fit within max_len"
    );
    banks.unsatisfied = unsat;
    banks.satisfied = sat;
    banks.in_progress = prog;
    banks.finished_unsatisfied.extend(fin_unsat);
    banks.finished_satisfied.extend(fin_sat);
    Ok(())
}

fn best_finished(pool: &[Hypothesis], cfg: &BeamConfig) -> Option<Hypothesis> {
    pool.iter()
        .map(|h| (final_score(h, cfg).expect("finished"), h))
        .min_by(|(sa, a), (sb, b)| rank_cmp(*sa, a, *sb, b))
        .map(|(_, h)| h.clone())
}

/// Runs the two-bank search to completion and returns each bank's best.
pub fn search_banks<S: Scorer + ?Sized>(
    history: &[TokenId],
    remaining: &[&ConstraintGroup],
    scorer: &S,
    cfg: &BeamConfig,
) -> Result<BankOutcome, DecodeError> {
    cfg.validate()?;
    let mut banks = Banks::initial(scorer.vocab().bos_id());
    for _ in 0..cfg.max_len {
        if banks.is_exhausted() {
            break;
        }
        gbs_step(&mut banks, scorer, history, remaining, cfg)?;
    }
    debug_assert!(banks.is_exhausted());
    Ok(BankOutcome {
        best_unsatisfied: best_finished(&banks.finished_unsatisfied, cfg),
        best_satisfied: best_finished(&banks.finished_satisfied, cfg),
    })
}

/// Decodes one system turn at dialog turn `t`.
///
/// `history` is the flat dialog so far, each turn followed by `<eos>`.
pub fn decode_turn<S: Scorer + ?Sized>(
    history: &[TokenId],
    remaining: &[&ConstraintGroup],
    scorer: &S,
    cfg: &BeamConfig,
    t: usize,
) -> Result<TurnResult, DecodeError> {
    let outcome = search_banks(history, remaining, scorer, cfg)?;
    let threshold = dynamic_threshold(cfg.t0, cfg.a, t);
    let mut result = select_final(
        outcome.best_satisfied.as_ref(),
        outcome.best_unsatisfied.as_ref(),
        threshold,
        cfg,
    )?;
    result.remaining_at_start = remaining.iter().map(|g| g.name().to_string()).collect();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_continuations_orders_and_filters() {
        let row = [f64::MIN, -1.0, -0.5, -0.5, -3.0];
        let got = top_continuations(&row, 3, 1, 0, true, &[]);
        assert_eq!(got.iter().map(|x| x.0).collect::<Vec<_>>(), vec![2, 3, 1]);
        let got = top_continuations(&row, 3, 1, 0, false, &[3]);
        assert_eq!(got.iter().map(|x| x.0).collect::<Vec<_>>(), vec![2, 4]);
        let got = top_continuations(&row, 10, 1, 0, true, &[]);
        assert_eq!(got.len(), 4);
    }
}
