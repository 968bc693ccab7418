use mgbs::curriculum::{ConstraintGroup, PhraseConstraint};
use mgbs::decoder::{
    decode_turn, gbs_step, rank_cmp, search_banks, select_final, vanilla_beam_search, Bank, Banks,
    BeamConfig, Expansion, Hypothesis, ScoreMode,
};
use mgbs::oracle::{exhaustive_decode, random_case};
use mgbs::scorer::{NgramScorer, Scorer, TableScorer};
use mgbs::synthetic::dialog_corpus;
use mgbs::{Execution, TokenId, Vocabulary};
use proptest::prelude::*;

const LN_HALF: f64 = -std::f64::consts::LN_2;

/// `<bos>`=0, `<eos>`=1, a=2, b=3 with P(a)=0.5, P(b)=0.3, P(eos)=0.2.
fn unigram() -> TableScorer {
    let vocab = Vocabulary::with_words(["a", "b"]);
    TableScorer::from_probs(vocab, &[0.0, 0.2, 0.5, 0.3]).unwrap()
}

fn group(name: &str, phrases: &[&[TokenId]]) -> ConstraintGroup {
    ConstraintGroup::new(
        name,
        phrases
            .iter()
            .map(|ids| PhraseConstraint::new(format!("{ids:?}"), ids.to_vec()))
            .collect(),
    )
    .unwrap()
}

fn fixture_cfg(t0: f64) -> BeamConfig {
    BeamConfig {
        max_len: 3,
        t0,
        ..BeamConfig::default()
    }
}

#[test]
fn unigram_unconstrained_turn() {
    let lm = unigram();
    let r = decode_turn(&[], &[], &lm, &fixture_cfg(10.0), 0).unwrap();
    assert_eq!(r.utterance, vec![2, 2, 2]);
    assert!((r.chosen_logp - 3.0 * LN_HALF).abs() < 1e-12);
    assert_eq!(r.chosen_bank, Bank::Unsatisfied);
    assert_eq!(r.satisfied_group, None);
}

#[test]
fn unigram_forced_turn_depends_on_threshold() {
    let lm = unigram();
    let b = group("b", &[&[3]]);
    let r = decode_turn(&[], &[&b], &lm, &fixture_cfg(10.0), 0).unwrap();
    assert_eq!(r.threshold_used, 10.0);
    assert_eq!(r.utterance, vec![3, 2, 2]);
    assert_eq!(r.satisfied_group.as_deref(), Some("b"));
    let expected = 2.0 * LN_HALF + 0.3f64.ln();
    assert!((r.best_scores.satisfied.unwrap() - expected).abs() < 1e-12);
    assert!((r.best_scores.unsatisfied.unwrap() - 3.0 * LN_HALF).abs() < 1e-12);

    let r = decode_turn(&[], &[&b], &lm, &fixture_cfg(0.1), 0).unwrap();
    assert_eq!(r.utterance, vec![2, 2, 2]);
    assert_eq!(r.satisfied_group, None);
}

#[test]
fn first_step_starts_every_constraint() {
    let vocab = Vocabulary::with_words(["i", "travel", "fly", "hotel", "want"]);
    let n = vocab.len();
    let mut probs = vec![1.0 / (n - 1) as f64; n];
    probs[0] = 0.0;
    let lm = TableScorer::from_probs(vocab.clone(), &probs).unwrap();
    let id = |w: &str| vocab.id(w).unwrap();
    let groups: Vec<ConstraintGroup> = ["travel", "fly", "hotel"]
        .iter()
        .map(|w| group(w, &[&[id(w)]]))
        .collect();
    let refs: Vec<&ConstraintGroup> = groups.iter().collect();
    let cfg = BeamConfig::default();
    let mut banks = Banks::initial(vocab.bos_id());
    gbs_step(&mut banks, &lm, &[], &refs, &cfg).unwrap();
    let mut sat: Vec<Vec<TokenId>> = banks.satisfied.iter().map(|h| h.tokens.clone()).collect();
    sat.sort();
    let mut want = vec![
        vec![0, id("travel")],
        vec![0, id("fly")],
        vec![0, id("hotel")],
    ];
    want.sort();
    assert_eq!(sat, want);
    assert!(banks
        .unsatisfied
        .iter()
        .all(|h| !["travel", "fly", "hotel"].contains(&vocab.surface(h.tokens[1]).unwrap())));
}

#[test]
fn in_progress_phrase_only_continues_with_next_token() {
    let vocab = Vocabulary::with_words(["on", "monday", "x"]);
    let n = vocab.len();
    let mut probs = vec![1.0 / (n - 1) as f64; n];
    probs[0] = 0.0;
    let lm = TableScorer::from_probs(vocab.clone(), &probs).unwrap();
    let (on, monday) = (vocab.id("on").unwrap(), vocab.id("monday").unwrap());
    let g = group("days", &[&[on, monday]]);
    let cfg = BeamConfig::default();
    let mut banks = Banks::initial(vocab.bos_id());
    gbs_step(&mut banks, &lm, &[], &[&g], &cfg).unwrap();
    assert_eq!(banks.in_progress.len(), 1);
    assert_eq!(banks.in_progress[0].tokens, vec![0, on]);
    gbs_step(&mut banks, &lm, &[], &[&g], &cfg).unwrap();
    for h in &banks.satisfied {
        let start = h.forced.as_ref().unwrap().start;
        assert_eq!(&h.generated()[start..start + 2], &[on, monday]);
    }
    assert!(banks
        .satisfied
        .iter()
        .any(|h| h.tokens == vec![0, on, monday]));
    // "on" generated freely may not be followed by a free "monday".
    assert!(banks
        .unsatisfied
        .iter()
        .all(|h| !h.generated().windows(2).any(|w| w == [on, monday])));
}

#[test]
fn empty_remaining_leaves_constraint_pools_empty() {
    let lm = unigram();
    let cfg = fixture_cfg(10.0);
    let mut banks = Banks::initial(0);
    while !banks.is_exhausted() {
        gbs_step(&mut banks, &lm, &[], &[], &cfg).unwrap();
        assert!(banks.satisfied.is_empty() && banks.in_progress.is_empty());
    }
    assert!(banks.finished_satisfied.is_empty());
}

#[test]
fn greedy_is_beam_one() {
    let lm = unigram();
    let cfg = BeamConfig {
        k: 1,
        max_len: 5,
        ..BeamConfig::default()
    };
    let h = vanilla_beam_search(&[], &lm, &cfg).unwrap();
    assert_eq!(h.generated(), &[2, 2, 2, 2, 2]);
}

fn small_ngram(seed: u64) -> NgramScorer {
    let corpus = dialog_corpus(12, 40, seed);
    let vocab = Vocabulary::with_words(&corpus);
    let seqs: Vec<Vec<TokenId>> = corpus.iter().map(|l| vocab.tokenize(l).unwrap()).collect();
    NgramScorer::train(vocab, &seqs, 2, 0.5).unwrap()
}

#[test]
fn vanilla_is_deterministic_and_matches_empty_grid() {
    let lm = small_ngram(3);
    let mut history = lm.vocab().tokenize("see you on monday").unwrap();
    history.push(lm.vocab().eos_id());
    for k in [1, 4, 10] {
        for execution in [Execution::Sequential, Execution::Parallel] {
            let cfg = BeamConfig {
                k,
                max_len: 8,
                execution,
                ..BeamConfig::default()
            };
            let a = vanilla_beam_search(&history, &lm, &cfg).unwrap();
            let b = vanilla_beam_search(&history, &lm, &cfg).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.logp.to_bits(), b.logp.to_bits());
            let r = decode_turn(&history, &[], &lm, &cfg, 0).unwrap();
            assert_eq!(r.utterance, a.utterance());
        }
    }
}

/// Recomputes a hypothesis' score from scratch.
fn path_logp(lm: &dyn Scorer, history: &[TokenId], h: &Hypothesis) -> f64 {
    let mut prefix = history.to_vec();
    prefix.push(h.tokens[0]);
    let mut total = 0.0;
    for &t in h.generated() {
        total += lm.next_logprobs(&prefix).unwrap()[t as usize];
        prefix.push(t);
    }
    total
}

fn contains_phrase(h: &Hypothesis, groups: &[&ConstraintGroup]) -> bool {
    groups
        .iter()
        .flat_map(|g| g.phrases())
        .any(|p| h.generated().windows(p.len()).any(|w| w == p.token_ids()))
}

#[test]
fn bank_invariants_hold_every_step() {
    for seed in 0..20 {
        let case = random_case(seed, 3, 5);
        let groups: Vec<&ConstraintGroup> = case.curriculum.groups().iter().collect();
        let cfg = BeamConfig {
            k: 4,
            max_len: 5,
            ..BeamConfig::default()
        };
        let mut banks = Banks::initial(0);
        while !banks.is_exhausted() {
            gbs_step(&mut banks, &case.scorer, &[], &groups, &cfg).unwrap();
            for h in banks.satisfied.iter().chain(&banks.finished_satisfied) {
                assert_eq!(h.bank, Bank::Satisfied);
                assert!(contains_phrase(h, &groups));
                let starts = h
                    .provenance
                    .iter()
                    .filter(|e| **e == Expansion::Start)
                    .count();
                assert_eq!(starts, 1, "exactly one forced phrase");
                assert!(h.in_progress.is_none());
            }
            for h in banks.unsatisfied.iter().chain(&banks.finished_unsatisfied) {
                assert!(!contains_phrase(h, &groups));
                assert!(h.provenance.iter().all(|e| *e == Expansion::Generate));
            }
            for h in &banks.in_progress {
                let ip = h.in_progress.unwrap();
                let plen = groups[ip.group].phrases()[ip.phrase].len();
                assert!(ip.next_position < plen && !h.is_finished());
            }
            for pool in [&banks.unsatisfied, &banks.satisfied, &banks.in_progress] {
                assert!(pool.len() <= cfg.k);
                assert!(pool.windows(2).all(|w| w[0].logp >= w[1].logp));
            }
        }
        for h in banks
            .finished_satisfied
            .iter()
            .chain(&banks.finished_unsatisfied)
        {
            assert!((h.logp - path_logp(&case.scorer, &[], h)).abs() < 1e-9);
        }
    }
}

#[test]
fn selection_is_monotone_in_threshold() {
    for seed in 0..30 {
        let case = random_case(100 + seed, 3, 4);
        let groups: Vec<&ConstraintGroup> = case.curriculum.groups().iter().collect();
        let cfg = BeamConfig {
            k: 5,
            max_len: 4,
            ..BeamConfig::default()
        };
        let out = search_banks(&[], &groups, &case.scorer, &cfg).unwrap();
        let mut chosen_sat = false;
        for i in 0..60 {
            let t = i as f64 * 0.25;
            let r = select_final(
                out.best_satisfied.as_ref(),
                out.best_unsatisfied.as_ref(),
                t,
                &cfg,
            )
            .unwrap();
            let sat = r.chosen_bank == Bank::Satisfied;
            assert!(
                !chosen_sat || sat,
                "once satisfied is chosen it stays chosen"
            );
            chosen_sat = sat;
            if let (Some(s), Some(u)) = (r.best_scores.satisfied, r.best_scores.unsatisfied) {
                if t > u - s {
                    assert!(sat);
                }
            }
        }
    }
}

#[test]
fn length_normalized_mode_matches_oracle_on_fixture() {
    let lm = unigram();
    let b = group("b", &[&[3]]);
    let cfg = BeamConfig {
        score_mode: ScoreMode::LengthNormalized,
        ..fixture_cfg(10.0)
    };
    let out = search_banks(&[], &[&b], &lm, &cfg).unwrap();
    let oracle = exhaustive_decode(&lm, &[], 3, &[&b], &cfg, false).unwrap();
    assert_eq!(
        out.best_satisfied.unwrap().generated(),
        &oracle.best_satisfying.unwrap().tokens[..]
    );
    assert_eq!(
        out.best_unsatisfied.unwrap().generated(),
        &oracle.best_unsatisfying.unwrap().tokens[..]
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn wide_beam_equals_oracle(seed in 0u64..10_000, raw in any::<bool>(), max_len in 2usize..=4) {
        let case = random_case(seed, 3, max_len);
        let groups: Vec<&ConstraintGroup> = case.curriculum.groups().iter().collect();
        let cfg = BeamConfig {
            k: 256,
            max_len,
            score_mode: if raw { ScoreMode::Raw } else { ScoreMode::LengthNormalized },
            ..BeamConfig::default()
        };
        let out = search_banks(&[], &groups, &case.scorer, &cfg).unwrap();
        let oracle = exhaustive_decode(&case.scorer, &[], max_len, &groups, &cfg, false).unwrap();
        prop_assert_eq!(
            out.best_satisfied.as_ref().map(|h| h.generated().to_vec()),
            oracle.best_satisfying.as_ref().map(|s| s.tokens.clone())
        );
        prop_assert_eq!(
            out.best_unsatisfied.as_ref().map(|h| h.generated().to_vec()),
            oracle.best_unsatisfying.as_ref().map(|s| s.tokens.clone())
        );
        let best = out.best_overall(&cfg).unwrap();
        prop_assert_eq!(best.generated(), &oracle.best_overall.tokens[..]);

        // the acceptance rule applied to the oracle's two bests picks the same turn
        for t0 in [0.0, 0.5, 2.0, 10.0] {
            let cfg = BeamConfig { t0, ..cfg.clone() };
            let r = decode_turn(&[], &groups, &case.scorer, &cfg, 0).unwrap();
            let pick = match (&oracle.best_satisfying, &oracle.best_unsatisfying) {
                (Some(s), Some(u)) => if s.score > u.score - t0 { s } else { u },
                (Some(s), None) => s,
                (None, Some(u)) => u,
                (None, None) => unreachable!(),
            };
            let words: Vec<TokenId> = pick.tokens.iter().copied().filter(|&t| t != 1).collect();
            prop_assert_eq!(&r.utterance, &words);
        }
    }

    #[test]
    fn rank_order_is_total(a in -5.0f64..0.0, b in -5.0f64..0.0) {
        let mut x = Hypothesis::root(0);
        x.tokens.push(2);
        let mut y = Hypothesis::root(0);
        y.tokens.push(3);
        prop_assert_eq!(rank_cmp(a, &x, b, &y), rank_cmp(b, &y, a, &x).reverse());
    }
}

#[test]
fn phrases_sharing_a_first_token_are_all_tried() {
    // P(a)=0.5, P(b)=0.3, P(eos)=0.2; the phrases "a b" and "a a" both begin with a.
    let lm = unigram();
    let g = group("g", &[&[2, 3], &[2, 2]]);
    let cfg = BeamConfig {
        max_len: 2,
        ..BeamConfig::default()
    };
    let out = search_banks(&[], &[&g], &lm, &cfg).unwrap();
    assert_eq!(out.best_satisfied.unwrap().generated(), &[2, 2]);
}
