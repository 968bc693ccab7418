//! Seeded toy corpora and a seasons/months/days curriculum for demos,
//! benchmarks and end-to-end tests.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SEASONS: [&str; 4] = ["spring", "summer", "autumn", "winter"];
pub const MONTHS: [&str; 12] = [
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
];
pub const DAYS: [&str; 7] = [
    "monday",
    "tuesday",
    "wednesday",
    "thursday",
    "friday",
    "saturday",
    "sunday",
];

const TEMPLATES: [&str; 8] = [
    "i like to travel during {season}",
    "we went to the beach in {month}",
    "see you on {day}",
    "my birthday is in {month}",
    "it is cold in {season}",
    "the test is on {day}",
    "do you like {season}",
    "school starts in {month}",
];

/// Curriculum document with three groups and preposition phrases.
pub fn school_curriculum_json() -> String {
    let group = |name: &str, words: &[&str], extra: &[&str]| {
        let phrases: Vec<String> = words
            .iter()
            .chain(extra)
            .map(|w| format!("\"{w}\""))
            .collect();
        format!(
            "{{\"name\": \"{name}\", \"phrases\": [{}]}}",
            phrases.join(", ")
        )
    };
    format!(
        "{{\"groups\": [\n  {},\n  {},\n  {}\n]}}\n",
        group("seasons", &SEASONS, &["in spring", "during winter"]),
        group("months", &MONTHS, &["in july", "in december"]),
        group("days", &DAYS, &["on monday", "on friday"]),
    )
}

/// `sentences` lines mixing template sentences that use curriculum words
/// with skewed random filler over `filler_words` words (`w0`, `w1`, ...).
/// Every filler word and every curriculum word appears at least once.
pub fn dialog_corpus(filler_words: usize, sentences: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(sentences + filler_words / 8 + 32);
    out.extend(
        SEASONS
            .iter()
            .map(|s| format!("i like to travel during {s}")),
    );
    out.extend(MONTHS.iter().map(|m| format!("my birthday is in {m}")));
    out.extend(DAYS.iter().map(|d| format!("see you on {d}")));
    for chunk in (0..filler_words).collect::<Vec<_>>().chunks(8) {
        out.push(
            chunk
                .iter()
                .map(|i| format!("w{i}"))
                .collect::<Vec<_>>()
                .join(" "),
        );
    }
    for _ in 0..sentences {
        if filler_words == 0 || rng.gen_bool(0.3) {
            let t = TEMPLATES[rng.gen_range(0..TEMPLATES.len())];
            let line = t
                .replace("{season}", SEASONS[rng.gen_range(0..SEASONS.len())])
                .replace("{month}", MONTHS[rng.gen_range(0..MONTHS.len())])
                .replace("{day}", DAYS[rng.gen_range(0..DAYS.len())]);
            out.push(line);
        } else {
            let len = rng.gen_range(3..=8);
            let words: Vec<String> = (0..len)
                .map(|_| {
                    let u: f64 = rng.gen();
                    format!("w{}", ((filler_words as f64) * u * u * u) as usize)
                })
                .collect();
            out.push(words.join(" "));
        }
    }
    out
}

/// Writes `corpus.txt` and `curriculum.json` into `dir` and returns their
/// paths in that order.
pub fn write_fixture(
    dir: &Path,
    filler_words: usize,
    sentences: usize,
    seed: u64,
) -> io::Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let corpus = dir.join("corpus.txt");
    let mut text = dialog_corpus(filler_words, sentences, seed).join("\n");
    text.push('\n');
    fs::write(&corpus, text)?;
    let curriculum = dir.join("curriculum.json");
    fs::write(&curriculum, school_curriculum_json())?;
    Ok((corpus, curriculum))
}
