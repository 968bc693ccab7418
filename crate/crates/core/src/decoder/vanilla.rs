use super::hypothesis::{rank_cmp, Expansion, Finish, Hypothesis};
use super::{final_score, BeamConfig, DecodeError};
use crate::scorer::{is_impossible, Scorer};
use crate::vocab::TokenId;

/// Plain beam search with the same finishing and ranking rules as the
/// two-bank decoder, kept separate as a parity baseline.
pub fn vanilla_beam_search<S: Scorer + ?Sized>(
    history: &[TokenId],
    scorer: &S,
    cfg: &BeamConfig,
) -> Result<Hypothesis, DecodeError> {
    cfg.validate()?;
    let vocab = scorer.vocab();
    let (bos, eos) = (vocab.bos_id(), vocab.eos_id());
    let mut beam = vec![Hypothesis::root(bos)];
    let mut finished: Vec<Hypothesis> = Vec::new();

    while !beam.is_empty() {
        let mut cands = Vec::new();
        for h in &beam {
            let mut prefix = history.to_vec();
            prefix.extend_from_slice(&h.tokens);
            let row = scorer.next_logprobs(&prefix)?;
            let mut options: Vec<(TokenId, f64)> = row
                .iter()
                .enumerate()
                .map(|(i, &lp)| (i as TokenId, lp))
                .filter(|&(t, lp)| {
                    t != bos && !is_impossible(lp) && (t != eos || h.generated_len() >= cfg.min_len)
                })
                .collect();
            options.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            options.truncate(cfg.k);
            for (t, lp) in options {
                let mut c = h.extend(t, lp, Expansion::Generate);
                if t == eos {
                    c.finish = Some(Finish::Eos);
                } else if c.generated_len() >= cfg.max_len {
                    c.finish = Some(Finish::MaxLen);
                }
                cands.push(c);
            }
        }
        cands.sort_by(|a, b| rank_cmp(a.logp, a, b.logp, b));
        cands.truncate(cfg.k);
        let (done, live): (Vec<_>, Vec<_>) = cands.into_iter().partition(Hypothesis::is_finished);
        finished.extend(done);
        beam = live;
    }

    finished
        .into_iter()
        .map(|h| (final_score(&h, cfg).expect("finished"), h))
        .min_by(|(sa, a), (sb, b)| rank_cmp(*sa, a, *sb, b))
        .map(|(_, h)| h)
        .ok_or(DecodeError::NoCandidates)
}
