use std::collections::HashMap;
use std::sync::RwLock;

use super::{LogProbs, Scorer, ScorerError, LOG_ZERO};
use crate::vocab::{TokenId, Vocabulary};

const ROW_CACHE_LIMIT: usize = 8192;

#[derive(Clone, Debug, Default)]
struct ContextCounts {
    total: u64,
    next: HashMap<TokenId, u64>,
}

/// Add-k smoothed n-gram model over a word-level vocabulary.
///
/// `P(w | c) = (count(c, w) + k) / (count(c, .) + k * |V|)` where `|V|`
/// counts every token except `<bos>`. Training sequences are padded with
/// `n - 1` `<bos>` tokens on the left and one `<eos>` on the right.
#[derive(Debug)]
pub struct NgramScorer {
    vocab: Vocabulary,
    order: usize,
    k: f64,
    counts: HashMap<Vec<TokenId>, ContextCounts>,
    rows: RwLock<HashMap<Vec<TokenId>, LogProbs>>,
}

impl NgramScorer {
    pub fn train(
        vocab: Vocabulary,
        corpus: &[Vec<TokenId>],
        order: usize,
        k: f64,
    ) -> Result<Self, ScorerError> {
        if order == 0 {
            return Err(ScorerError::InvalidParameters(
                "n-gram order must be >= 1".into(),
            ));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(ScorerError::InvalidParameters(format!(
                "smoothing constant must be positive, got {k}"
            )));
        }
        let (bos, eos) = (vocab.bos_id(), vocab.eos_id());
        let mut counts: HashMap<Vec<TokenId>, ContextCounts> = HashMap::new();
        for seq in corpus {
            let mut padded = vec![bos; order - 1];
            for &t in seq {
                vocab
                    .check_id(t)
                    .map_err(|_| ScorerError::UnknownToken(t))?;
                if vocab.is_special(t) {
                    return Err(ScorerError::InvalidParameters(format!(
                        "training sequence contains reserved token {t}"
                    )));
                }
                padded.push(t);
            }
            padded.push(eos);
            for window in padded.windows(order) {
                let (ctx, next) = window.split_at(order - 1);
                let entry = counts.entry(ctx.to_vec()).or_default();
                entry.total += 1;
                *entry.next.entry(next[0]).or_default() += 1;
            }
        }
        Ok(Self {
            vocab,
            order,
            k,
            counts,
            rows: RwLock::new(HashMap::new()),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.k
    }

    /// Number of tokens the distribution ranges over (all but `<bos>`).
    pub fn support_size(&self) -> usize {
        self.vocab.len() - 1
    }

    fn context_of(&self, prefix: &[TokenId]) -> Vec<TokenId> {
        let want = self.order - 1;
        let mut ctx = vec![self.vocab.bos_id(); want.saturating_sub(prefix.len())];
        ctx.extend_from_slice(&prefix[prefix.len().saturating_sub(want)..]);
        ctx
    }

    /// Smoothed linear probability of `next` after `context` (already the
    /// right length).
    pub fn probability(&self, context: &[TokenId], next: TokenId) -> f64 {
        if next == self.vocab.bos_id() {
            return 0.0;
        }
        let support = self.support_size() as f64;
        let (count, total) = match self.counts.get(context) {
            Some(c) => (c.next.get(&next).copied().unwrap_or(0), c.total),
            None => (0, 0),
        };
        (count as f64 + self.k) / (total as f64 + self.k * support)
    }

    fn build_row(&self, ctx: &[TokenId]) -> Vec<f64> {
        let support = self.support_size() as f64;
        let counts = self.counts.get(ctx);
        let total = counts.map_or(0, |c| c.total) as f64;
        let denom = total + self.k * support;
        let floor = (self.k / denom).ln();
        let mut row = vec![floor; self.vocab.len()];
        if let Some(c) = counts {
            for (&t, &n) in &c.next {
                row[t as usize] = ((n as f64 + self.k) / denom).ln();
            }
        }
        row[self.vocab.bos_id() as usize] = LOG_ZERO;
        row
    }
}

impl Scorer for NgramScorer {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_logprobs(&self, prefix: &[TokenId]) -> Result<LogProbs, ScorerError> {
        if let Some(&bad) = prefix.iter().find(|&&t| self.vocab.check_id(t).is_err()) {
            return Err(ScorerError::UnknownToken(bad));
        }
        let ctx = self.context_of(prefix);
        if let Some(row) = self.rows.read().expect("row cache poisoned").get(&ctx) {
            return Ok(row.clone());
        }
        let row: LogProbs = self.build_row(&ctx).into();
        let mut cache = self.rows.write().expect("row cache poisoned");
        if cache.len() >= ROW_CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(ctx, row.clone());
        Ok(row)
    }
}
