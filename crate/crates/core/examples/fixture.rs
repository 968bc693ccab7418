//! Writes a synthetic corpus, curriculum and simulation config.
//!
//! cargo run -p mgbs --example fixture -- <dir> [filler_words] [sentences] [seed]

use std::path::PathBuf;

use mgbs::synthetic::write_fixture;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(
        args.next()
            .ok_or("usage: fixture <dir> [filler_words] [sentences] [seed]")?,
    );
    let filler: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(200);
    let sentences: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2000);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    write_fixture(&dir, filler, sentences, seed)?;
    let config = r#"{
  "scorer": {"kind": "ngram", "corpus_path": "corpus.txt", "order": 2, "k": 0.1},
  "curriculum_path": "curriculum.json",
  "beam": {"k": 10, "max_len": 20, "alpha": 1.0, "t0": 10.0, "a": 1.0, "score_mode": "raw"},
  "policy": {"kind": "constraint_curious", "script": ["i like to travel", "see you", "my birthday is"], "p_adopt": 0.5},
  "sessions": 100,
  "seed": 7,
  "sides_counted": ["SYSTEM", "USER"],
  "max_system_turns": 6
}
"#;
    std::fs::write(dir.join("simulate.json"), config)?;
    println!(
        "wrote corpus.txt, curriculum.json and simulate.json to {}",
        dir.display()
    );
    Ok(())
}
