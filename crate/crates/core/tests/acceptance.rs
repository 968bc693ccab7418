//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use mgbs::constraint_state::ConstraintState;
use mgbs::curriculum::{ConstraintGroup, Curriculum, OovPolicy, PhraseConstraint};
use mgbs::decoder::{
    decode_turn, dynamic_threshold, search_banks, vanilla_beam_search, Bank, BeamConfig, ScoreMode,
};
use mgbs::harness::{
    compute_usage, run_simulation, ScorerSpec, SimulationConfig, SimulationOutput, ANY,
};
use mgbs::oracle::{exhaustive_decode, random_case};
use mgbs::policy::PolicyConfig;
use mgbs::scorer::{
    exp_sum, is_impossible, NgramScorer, Scorer, ScorerError, SubprocessScorer, TableScorer,
    NORMALIZATION_TOLERANCE,
};
use mgbs::session::{write_transcripts, SessionTranscript};
use mgbs::synthetic::{dialog_corpus, school_curriculum_json, write_fixture};
use mgbs::{Execution, Side, TokenId, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("threshold schedule", threshold_schedule),
        ("empty-curriculum parity", empty_curriculum_parity),
        ("forcing limit", forcing_limit),
        ("dynamic-list correctness", dynamic_list),
        ("simulation behavior", simulation_behavior),
        ("metrics recount", metrics_recount),
        ("scorer contracts", scorer_contracts),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome =
            std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {}. {name} ({secs:.2}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name} ({secs:.2}s): {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut compared = 0;
    for seed in 0..50 {
        // eos plus three words: four tokens a turn can emit
        let case = random_case(seed, 3, 5);
        let groups: Vec<&ConstraintGroup> = case.curriculum.groups().iter().collect();
        for mode in [ScoreMode::Raw, ScoreMode::LengthNormalized] {
            let cfg = BeamConfig {
                k: 256,
                max_len: 5,
                score_mode: mode,
                ..BeamConfig::default()
            };
            let r = search_banks(&[], &groups, &case.scorer, &cfg).map_err(|e| e.to_string())?;
            let o = exhaustive_decode(&case.scorer, &[], 5, &groups, &cfg, false)
                .map_err(|e| e.to_string())?;
            let overall = r
                .best_overall(&cfg)
                .ok_or("no finished hypothesis")?
                .generated()
                .to_vec();
            let satisfying = r.best_satisfied.as_ref().map(|h| h.generated().to_vec());
            ensure!(
                overall == o.best_overall.tokens,
                "seed {seed} {mode:?}: best_overall {overall:?} vs oracle {:?}",
                o.best_overall.tokens
            );
            let want = o.best_satisfying.map(|s| s.tokens);
            ensure!(
                satisfying == want,
                "seed {seed} {mode:?}: best_satisfying {satisfying:?} vs oracle {want:?}"
            );
            compared += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!(
        "{compared} seed/mode pairs identical in {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn threshold_schedule() -> Outcome {
    let mut points = 0;
    for t0 in [0.5, 1.0, 10.0, 100.0] {
        ensure!(
            dynamic_threshold(t0, 1.0, 0) == t0,
            "T(0) != T0 for T0={t0}"
        );
        for a in [0.0, 0.05, 0.5, 1.0] {
            let mut prev = f64::NEG_INFINITY;
            for t in 0..=30usize {
                let got = dynamic_threshold(t0, a, t);
                let want = t0 * 2.0 / (1.0 + (-a * t as f64).exp());
                ensure!(
                    (got - want).abs() < 1e-9,
                    "T0={t0} a={a} t={t}: {got} vs {want}"
                );
                ensure!(got < 2.0 * t0, "T0={t0} a={a} t={t}: {got} not below 2*T0");
                if a > 0.0 {
                    ensure!(got > prev, "T0={t0} a={a} t={t}: not increasing");
                } else {
                    ensure!(got == t0, "a=0 must keep T at T0");
                }
                prev = got;
                points += 1;
            }
        }
        // Past a*t of about 37 the logistic rounds to 1 in double precision;
        // the schedule must still be monotone and capped there.
        let mut prev = f64::NEG_INFINITY;
        for t in 0..=200usize {
            let got = dynamic_threshold(t0, 3.0, t);
            ensure!(
                got >= prev && got <= 2.0 * t0,
                "saturation: T0={t0} t={t}: {got}"
            );
            prev = got;
        }
    }
    Ok(format!("{points} grid points within 1e-9, T(0)=T0 exact"))
}

fn seeded_ngram(seed: u64) -> NgramScorer {
    let corpus = dialog_corpus(30, 200, seed);
    let vocab = Vocabulary::with_words(&corpus);
    let seqs: Vec<Vec<TokenId>> = corpus.iter().map(|l| vocab.tokenize(l).unwrap()).collect();
    let order = 2 + (seed % 2) as usize;
    let k = [0.01, 0.1, 0.5, 1.0][(seed % 4) as usize];
    NgramScorer::train(vocab, &seqs, order, k).unwrap()
}

fn empty_curriculum_parity() -> Outcome {
    let mut runs = 0;
    for seed in 0..20u64 {
        let lm = seeded_ngram(seed);
        let vocab = lm.vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut history = Vec::new();
        for _ in 0..rng.gen_range(0..3) {
            let w = rng.gen_range(2..vocab.len()) as TokenId;
            history.extend([w, vocab.eos_id()]);
        }
        for k in [1, 4, 10] {
            let cfg = BeamConfig {
                k,
                max_len: 12,
                ..BeamConfig::default()
            };
            let grid = decode_turn(&history, &[], &lm, &cfg, 0).map_err(|e| e.to_string())?;
            let plain = vanilla_beam_search(&history, &lm, &cfg).map_err(|e| e.to_string())?;
            ensure!(
                grid.utterance == plain.utterance(),
                "seed {seed} k={k}: {:?} vs {:?}",
                grid.utterance,
                plain.utterance()
            );
            runs += 1;
        }
    }
    Ok(format!("{runs} scorer/beam pairs token-identical"))
}

fn forcing_limit() -> Outcome {
    let vocab = Vocabulary::with_words(["a", "b"]);
    let (a, b) = (vocab.id("a").unwrap(), vocab.id("b").unwrap());
    let lm = TableScorer::from_probs(vocab, &[0.0, 0.2, 0.5, 0.3]).unwrap();
    let group = ConstraintGroup::new("b", vec![PhraseConstraint::new("b", vec![b])]).unwrap();
    let mut details = Vec::new();
    for (t0, want, bank) in [
        (10.0, vec![b, a, a], Bank::Satisfied),
        (0.1, vec![a, a, a], Bank::Unsatisfied),
    ] {
        let cfg = BeamConfig {
            max_len: 3,
            t0,
            ..BeamConfig::default()
        };
        let r = decode_turn(&[], &[&group], &lm, &cfg, 0).map_err(|e| e.to_string())?;
        let o =
            exhaustive_decode(&lm, &[], 3, &[&group], &cfg, false).map_err(|e| e.to_string())?;
        ensure!(
            r.utterance == want && r.chosen_bank == bank,
            "T={t0}: chose {:?}",
            r.utterance
        );
        let (sat, unsat) = (
            r.best_scores.satisfied.ok_or("no satisfied candidate")?,
            r.best_scores
                .unsatisfied
                .ok_or("no unsatisfied candidate")?,
        );
        let (osat, ounsat) = (
            o.best_satisfying.unwrap().score,
            o.best_unsatisfying.unwrap().score,
        );
        ensure!(
            (sat - osat).abs() < 1e-6 && (unsat - ounsat).abs() < 1e-6,
            "scores off the enumeration"
        );
        ensure!(
            (sat + 2.5903).abs() < 1e-4 && (unsat + 2.0794).abs() < 1e-4,
            "scores {sat} / {unsat}"
        );
        details.push(format!(
            "T={t0} -> {:?} ({sat:.4} vs {unsat:.4})",
            r.utterance
        ));
    }
    Ok(details.join("; "))
}

fn sim_config(
    dir: &Path,
    filler: usize,
    sentences: usize,
    policy: PolicyConfig,
) -> SimulationConfig {
    let (corpus, curriculum) = write_fixture(dir, filler, sentences, 5).unwrap();
    SimulationConfig {
        scorer: ScorerSpec::Ngram {
            corpus_path: corpus,
            order: 2,
            k: 0.1,
            vocab_path: None,
        },
        curriculum_path: curriculum,
        beam: BeamConfig::default(),
        policy,
        sessions: 100,
        seed: 1,
        sides_counted: vec![Side::System, Side::User],
        max_system_turns: 6,
        opener: Side::System,
        oov_policy: OovPolicy::Reject,
        record_timing: false,
        execution: Execution::default(),
    }
}

fn curious() -> PolicyConfig {
    PolicyConfig::ConstraintCurious {
        script: [
            "i like to travel",
            "see you",
            "my birthday is",
            "w3 w4",
            "w2",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
        p_adopt: 0.5,
    }
}

fn dynamic_list() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = sim_config(dir.path(), 60, 600, curious());
    let mut checked = 0;
    let curriculum = load_curriculum(&cfg)?;
    for sides in [vec![Side::System, Side::User], vec![Side::System]] {
        cfg.sides_counted = sides;
        cfg.sessions = 50;
        let out = run_simulation(&cfg).map_err(|e| e.to_string())?;
        for rec in &out.records {
            let t = &rec.transcript;
            ensure!(t.error.is_none(), "{}: {:?}", t.session_id, t.error);
            let mut state = ConstraintState::new(&curriculum);
            let mut satisfied_at: BTreeMap<String, usize> = BTreeMap::new();
            let mut results = rec.turn_results.iter();
            for turn in &t.turns {
                if turn.side == Side::System {
                    let r = results.next().ok_or("missing turn result")?;
                    for g in &r.remaining_at_start {
                        ensure!(
                            !satisfied_at.contains_key(g),
                            "{}: group {g} forced at turn {} after its satisfaction",
                            t.session_id,
                            turn.turn_index
                        );
                    }
                    ensure!(
                        r.remaining_at_start == state.remaining(),
                        "decode input differs from replay"
                    );
                    checked += 1;
                }
                state
                    .scan_utterance(
                        &curriculum,
                        &turn.tokens,
                        turn.side,
                        turn.turn_index,
                        cfg.sides(),
                    )
                    .map_err(|e| e.to_string())?;
                ensure!(
                    state.is_conserved(&curriculum),
                    "conservation broken in {}",
                    t.session_id
                );
                for e in &turn.events {
                    satisfied_at.insert(e.group.clone(), turn.turn_index);
                }
            }
            ensure!(
                state.remaining() == t.final_remaining,
                "final remaining differs"
            );
        }
    }
    Ok(format!(
        "100 transcripts replayed, {checked} decode inputs checked"
    ))
}

fn load_curriculum(cfg: &SimulationConfig) -> Result<Curriculum, String> {
    let ScorerSpec::Ngram { corpus_path, .. } = &cfg.scorer else {
        unreachable!()
    };
    let text = std::fs::read_to_string(corpus_path).map_err(|e| e.to_string())?;
    let vocab = Vocabulary::with_words(text.lines());
    Curriculum::parse(&school_curriculum_json(), &vocab, OovPolicy::Reject)
        .map(|(c, _)| c)
        .map_err(|e| e.to_string())
}

fn transcript_bytes(out: &SimulationOutput) -> Vec<u8> {
    let mut buf = Vec::new();
    write_transcripts(&mut buf, &out.transcripts()).unwrap();
    buf
}

fn simulation_behavior() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = sim_config(dir.path(), 4960, 20_000, PolicyConfig::Echo {});
    let vocab_size = school_vocab_size(&cfg)?;
    let start = Instant::now();
    let first = run_simulation(&cfg).map_err(|e| e.to_string())?;
    let t1 = start.elapsed();
    let start = Instant::now();
    let second = run_simulation(&cfg).map_err(|e| e.to_string())?;
    let t2 = start.elapsed();
    let sys = first.report.fraction(Side::System, ANY).unwrap_or(f64::NAN);
    let user = first.report.fraction(Side::User, ANY).unwrap_or(f64::NAN);
    ensure!(
        first.report.sessions == 100,
        "{} completed sessions",
        first.report.sessions
    );
    ensure!(sys == 1.0, "SYSTEM ANY = {sys}");
    ensure!(user == 1.0, "USER ANY = {user}");
    ensure!(
        transcript_bytes(&first) == transcript_bytes(&second),
        "transcripts differ between runs"
    );
    ensure!(
        t1 < Duration::from_secs(60) && t2 < Duration::from_secs(60),
        "runs took {t1:?} / {t2:?}"
    );
    Ok(format!(
        "|V|={vocab_size}, SYSTEM ANY={sys}, USER ANY={user}, byte-identical, runs {:.1}s / {:.1}s",
        t1.as_secs_f64(),
        t2.as_secs_f64()
    ))
}

fn school_vocab_size(cfg: &SimulationConfig) -> Result<usize, String> {
    let ScorerSpec::Ngram { corpus_path, .. } = &cfg.scorer else {
        unreachable!()
    };
    let text = std::fs::read_to_string(corpus_path).map_err(|e| e.to_string())?;
    Ok(Vocabulary::with_words(text.lines()).len())
}

/// Usage fractions recomputed from the JSONL text alone.
fn recount(jsonl: &str, curriculum_doc: &str) -> BTreeMap<(String, String), f64> {
    let doc: Value = serde_json::from_str(curriculum_doc).unwrap();
    let groups: Vec<(String, Vec<String>)> = doc["groups"]
        .as_array()
        .unwrap()
        .iter()
        .map(|g| {
            let phrases = g["phrases"]
                .as_array()
                .unwrap()
                .iter()
                .map(|p| format!(" {} ", p.as_str().unwrap().to_lowercase()))
                .collect();
            (g["name"].as_str().unwrap().to_string(), phrases)
        })
        .collect();
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut sessions = 0;
    for line in jsonl.lines().filter(|l| !l.trim().is_empty()) {
        let t: Value = serde_json::from_str(line).unwrap();
        if !t["error"].is_null() {
            continue;
        }
        sessions += 1;
        for side in ["SYSTEM", "USER"] {
            let texts: Vec<String> = t["turns"]
                .as_array()
                .unwrap()
                .iter()
                .filter(|turn| turn["side"] == side)
                .map(|turn| {
                    let words: Vec<String> = turn["text"]
                        .as_str()
                        .unwrap()
                        .split_whitespace()
                        .map(str::to_lowercase)
                        .collect();
                    format!(" {} ", words.join(" "))
                })
                .collect();
            let mut any = false;
            for (name, phrases) in &groups {
                let hit = texts
                    .iter()
                    .any(|text| phrases.iter().any(|p| text.contains(p.as_str())));
                *counts.entry((side.to_string(), name.clone())).or_default() += hit as usize;
                any |= hit;
            }
            *counts
                .entry((side.to_string(), ANY.to_string()))
                .or_default() += any as usize;
        }
    }
    counts
        .into_iter()
        .map(|(key, c)| (key, c as f64 / sessions as f64))
        .collect()
}

fn compare_recount(
    label: &str,
    transcripts: &[SessionTranscript],
    curriculum: &Curriculum,
) -> Result<(), String> {
    let report = compute_usage(transcripts, curriculum).map_err(|e| format!("{label}: {e}"))?;
    let mut jsonl = Vec::new();
    write_transcripts(&mut jsonl, transcripts).unwrap();
    let expected = recount(
        std::str::from_utf8(&jsonl).unwrap(),
        &school_curriculum_json(),
    );
    let got: BTreeMap<(String, String), f64> = report
        .rows
        .iter()
        .map(|r| {
            let side = if r.side == Side::System {
                "SYSTEM"
            } else {
                "USER"
            };
            ((side.to_string(), r.group.clone()), r.fraction)
        })
        .collect();
    ensure!(
        got == expected,
        "{label}: report {got:?} vs recount {expected:?}"
    );
    Ok(())
}

fn metrics_recount() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = sim_config(dir.path(), 60, 600, curious());
    let curriculum = load_curriculum(&cfg)?;
    let out = run_simulation(&cfg).map_err(|e| e.to_string())?;
    let mut all = out.transcripts();
    compare_recount("100 sessions", &all, &curriculum)?;
    compare_recount("single session", &all[..1], &curriculum)?;
    all[3].error = Some("scorer failed".into());
    compare_recount("with an errored session", &all, &curriculum)?;

    // A threshold this negative never accepts a satisfied candidate.
    cfg.beam.t0 = -1000.0;
    cfg.beam.a = 0.0;
    cfg.policy = PolicyConfig::Scripted {
        script: vec!["see you".into(), "w3 w4".into()],
    };
    cfg.sessions = 10;
    let none = run_simulation(&cfg).map_err(|e| e.to_string())?;
    ensure!(
        none.report.fraction(Side::System, ANY) == Some(0.0),
        "expected no constraint use, got {:?}",
        none.report
    );
    compare_recount("all unsatisfied", &none.transcripts(), &curriculum)?;
    Ok(format!(
        "exact match on 4 transcript sets (SYSTEM ANY {:.2}, USER ANY {:.2})",
        out.report.fraction(Side::System, ANY).unwrap(),
        out.report.fraction(Side::User, ANY).unwrap()
    ))
}

/// Every prefix `<bos> x1 .. xn` with n <= `max_len` over the non-bos tokens.
fn all_prefixes(vocab: &Vocabulary, max_len: usize) -> Vec<Vec<TokenId>> {
    let symbols: Vec<TokenId> = (0..vocab.len() as TokenId)
        .filter(|&t| t != vocab.bos_id())
        .collect();
    let mut out = vec![vec![vocab.bos_id()]];
    let mut frontier = out.clone();
    for _ in 0..max_len {
        let mut next = Vec::new();
        for p in &frontier {
            for &s in &symbols {
                let mut q = p.clone();
                q.push(s);
                next.push(q);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn check_rows(name: &str, lm: &dyn Scorer, prefixes: &[Vec<TokenId>]) -> Result<(), String> {
    for p in prefixes {
        let row = lm
            .next_logprobs(p)
            .map_err(|e| format!("{name} {p:?}: {e}"))?;
        let sum = exp_sum(&row);
        ensure!(
            (sum - 1.0).abs() < NORMALIZATION_TOLERANCE,
            "{name} {p:?}: sum {sum}"
        );
        ensure!(
            is_impossible(row[lm.vocab().bos_id() as usize]),
            "{name} {p:?}: bos has mass"
        );
    }
    Ok(())
}

fn scorer_contracts() -> Outcome {
    let vocab = Vocabulary::with_words(["a", "b", "c"]);
    let prefixes = all_prefixes(&vocab, 6);
    let mut scorers: Vec<(String, Box<dyn Scorer>)> = Vec::new();
    for seed in 0..3 {
        scorers.push((
            format!("table#{seed}"),
            Box::new(random_case(seed, 3, 6).scorer),
        ));
    }
    let corpus: Vec<Vec<TokenId>> = vec![vec![2, 3, 2], vec![4], vec![3, 3, 3, 2], vec![]];
    for order in 1..=4 {
        for k in [0.01, 1.0] {
            let lm =
                NgramScorer::train(vocab.clone(), &corpus, order, k).map_err(|e| e.to_string())?;
            scorers.push((format!("ngram(n={order},k={k})"), Box::new(lm)));
        }
    }
    for (name, lm) in &scorers {
        check_rows(name, lm.as_ref(), &prefixes)?;
    }

    let l = (0.25f64).ln();
    let good = SubprocessScorer::spawn(
        &sh_child(&format!("[null, {l}, {l}, {l}, {l}]")),
        vocab.clone(),
    )
    .map_err(|e| e.to_string())?;
    check_rows("subprocess", &good, &prefixes[..200])?;
    let l = (0.2f64).ln();
    let bad = SubprocessScorer::spawn(&sh_child(&format!("[null, {l}, {l}, {l}, {l}]")), vocab)
        .map_err(|e| e.to_string())?;
    match bad.next_logprobs(&[0]) {
        Err(ScorerError::Normalization { sum }) if (sum - 0.8).abs() < 1e-9 => {}
        other => return Err(format!("mis-normalized child gave {other:?}")),
    }
    Ok(format!(
        "{} scorers x {} prefixes normalized; mis-normalized child rejected (sum 0.8)",
        scorers.len() + 1,
        prefixes.len()
    ))
}

fn sh_child(row: &str) -> Vec<String> {
    vec![
        "sh".into(),
        "-c".into(),
        format!(
            "echo '{{\"vocab_size\": 5, \"bos_id\": 0, \"eos_id\": 1}}'; \
             while read -r line; do echo '{{\"logprobs\": {row}}}'; done"
        ),
    ]
}
