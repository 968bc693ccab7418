//! Multi-turn lexically constrained grid beam search.
//!
//! Forces curriculum words and phrases into generated dialog turns with a
//! two-bank beam search, relaxes the forcing threshold as the dialog goes
//! on, and drops constraint groups from the forcing list once either side
//! has used them.
//!
//! ```
//! use std::sync::Arc;
//! use mgbs::{BeamConfig, Curriculum, NgramScorer, OovPolicy, SessionState, SideSet, Vocabulary};
//!
//! # fn main() -> Result<(), Box<dyn std::error::Error>> {
//! let lines = ["see you on monday", "i like spring"];
//! let vocab = Vocabulary::with_words(lines);
//! let corpus: Vec<_> = lines.iter().map(|l| vocab.tokenize(l).unwrap()).collect();
//! let lm = NgramScorer::train(vocab.clone(), &corpus, 2, 0.1)?;
//! let doc = r#"{"groups": [{"name": "days", "phrases": ["monday"]}]}"#;
//! let (curriculum, _) = Curriculum::parse(doc, &vocab, OovPolicy::Reject)?;
//! let mut session = SessionState::new(Arc::new(curriculum), Arc::new(lm), BeamConfig::default(), SideSet::BOTH)?;
//! let (turn, result) = session.system_turn()?;
//! assert_eq!(result.satisfied_group.as_deref(), Some("days"));
//! println!("{}", turn.text);
//! # Ok(())
//! # }
//! ```

pub mod constraint_state;
pub mod curriculum;
pub mod decoder;
pub mod exec;
pub mod harness;
pub mod oracle;
pub mod policy;
pub mod scorer;
pub mod session;
pub mod synthetic;
pub mod vocab;

pub use constraint_state::{ConstraintState, SatisfactionEvent, Side, SideSet};
pub use curriculum::{ConstraintGroup, Curriculum, OovPolicy, PhraseConstraint};
pub use decoder::{
    decode_turn, dynamic_threshold, final_score, select_final, sigmoid, vanilla_beam_search,
    BeamConfig, ScoreMode, TurnResult,
};
pub use exec::Execution;
pub use policy::{PolicyConfig, UserPolicy};
pub use scorer::{NgramScorer, Scorer, SubprocessScorer, TableScorer};
pub use session::{DialogTurn, SessionState, SessionTranscript};
pub use vocab::{TokenId, Vocabulary};
