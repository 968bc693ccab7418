//! Multi-turn dialog sessions.
//!
//! A session alternates system and user turns. Each system turn is decoded
//! against the groups still remaining, with the acceptance threshold grown
//! by the number of system turns already taken; after every turn the
//! utterance is scanned and any group it uses leaves the forcing list.

use std::io::{BufRead, Write};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint_state::{ConstraintState, SatisfactionEvent, Side, SideSet, StateError};
use crate::curriculum::{Curriculum, CurriculumError};
use crate::decoder::{decode_turn, BeamConfig, DecodeError, TurnResult};
use crate::policy::{PolicyContext, PolicyError, PolicyReply, UserPolicy};
use crate::scorer::Scorer;
use crate::vocab::{TokenId, VocabError};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("session is closed")]
    Closed,
    #[error("it is not the {0:?} side's turn")]
    OutOfTurn(Side),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("dialog aborted: {message}")]
    Aborted {
        transcript: Box<SessionTranscript>,
        message: String,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DialogTurn {
    pub side: Side,
    /// Position of the turn in the dialog, counting both sides.
    pub turn_index: usize,
    pub text: String,
    pub tokens: Vec<TokenId>,
    pub events: Vec<SatisfactionEvent>,
}

/// Settings recorded alongside every transcript.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSnapshot {
    pub beam: BeamConfig,
    pub sides_counted: Vec<Side>,
    pub opener: Side,
    /// Curriculum group names, in order.
    pub groups: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptEvent {
    pub group: String,
    pub phrase: String,
    pub side: Side,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptTurn {
    pub side: Side,
    pub turn_index: usize,
    pub text: String,
    pub tokens: Vec<TokenId>,
    pub events: Vec<TranscriptEvent>,
}

/// A finished (or aborted) dialog, one JSON object per line on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionTranscript {
    pub session_id: String,
    pub config: ConfigSnapshot,
    pub turns: Vec<TranscriptTurn>,
    pub final_remaining: Vec<String>,
    pub duration_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl From<&DialogTurn> for TranscriptTurn {
    fn from(t: &DialogTurn) -> Self {
        Self {
            side: t.side,
            turn_index: t.turn_index,
            text: t.text.clone(),
            tokens: t.tokens.clone(),
            events: t
                .events
                .iter()
                .map(|e| TranscriptEvent {
                    group: e.group_name.clone(),
                    phrase: e.phrase_surface.clone(),
                    side: e.side,
                })
                .collect(),
        }
    }
}

/// Writes transcripts as JSON lines.
pub fn write_transcripts<W: Write>(
    mut out: W,
    transcripts: &[SessionTranscript],
) -> std::io::Result<()> {
    for t in transcripts {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads JSON-lines transcripts, skipping blank lines.
pub fn read_transcripts<R: BufRead>(input: R) -> Result<Vec<SessionTranscript>, String> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| format!("transcript line {}: {e}", i + 1))?,
        );
    }
    Ok(out)
}

pub struct SessionState {
    curriculum: Arc<Curriculum>,
    scorer: Arc<dyn Scorer>,
    cfg: BeamConfig,
    sides_counted: SideSet,
    opener: Side,
    constraint_state: ConstraintState,
    history: Vec<DialogTurn>,
    turn_results: Vec<TurnResult>,
    system_turns: usize,
    closed: bool,
    started: Instant,
}

impl SessionState {
    pub fn new(
        curriculum: Arc<Curriculum>,
        scorer: Arc<dyn Scorer>,
        cfg: BeamConfig,
        sides_counted: SideSet,
    ) -> Result<Self, SessionError> {
        curriculum.validate_against(scorer.vocab())?;
        cfg.validate()?;
        Ok(Self {
            constraint_state: ConstraintState::new(&curriculum),
            curriculum,
            scorer,
            cfg,
            sides_counted,
            opener: Side::System,
            history: Vec::new(),
            turn_results: Vec::new(),
            system_turns: 0,
            closed: false,
            started: Instant::now(),
        })
    }

    /// Which side speaks first in [`SessionState::run_dialog`].
    pub fn with_opener(mut self, opener: Side) -> Self {
        self.opener = opener;
        self
    }

    /// A fresh session with the same curriculum, scorer and settings.
    pub fn reset(&self) -> Self {
        Self::new(
            self.curriculum.clone(),
            self.scorer.clone(),
            self.cfg.clone(),
            self.sides_counted,
        )
        .expect("settings were already validated")
        .with_opener(self.opener)
    }

    pub fn curriculum(&self) -> &Curriculum {
        &self.curriculum
    }

    pub fn constraint_state(&self) -> &ConstraintState {
        &self.constraint_state
    }

    pub fn history(&self) -> &[DialogTurn] {
        &self.history
    }

    pub fn turn_results(&self) -> &[TurnResult] {
        &self.turn_results
    }

    /// Number of system turns taken so far; the threshold's turn index.
    pub fn turn_counter(&self) -> usize {
        self.system_turns
    }

    pub fn config(&self) -> &BeamConfig {
        &self.cfg
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    /// All previous turns, each followed by `<eos>`.
    pub fn history_prefix(&self) -> Vec<TokenId> {
        let eos = self.scorer.vocab().eos_id();
        let mut out = Vec::new();
        for turn in &self.history {
            out.extend_from_slice(&turn.tokens);
            out.push(eos);
        }
        out
    }

    fn check_turn(&self, side: Side) -> Result<(), SessionError> {
        if self.closed {
            return Err(SessionError::Closed);
        }
        match self.history.last() {
            Some(last) if last.side == side => Err(SessionError::OutOfTurn(side)),
            _ => Ok(()),
        }
    }

    fn record(
        &mut self,
        side: Side,
        text: String,
        tokens: Vec<TokenId>,
    ) -> Result<DialogTurn, SessionError> {
        let turn_index = self.history.len();
        let events = self.constraint_state.scan_utterance(
            &self.curriculum,
            &tokens,
            side,
            turn_index,
            self.sides_counted,
        )?;
        let turn = DialogTurn {
            side,
            turn_index,
            text,
            tokens,
            events,
        };
        self.history.push(turn.clone());
        debug_assert!(self.constraint_state.is_conserved(&self.curriculum));
        Ok(turn)
    }

    /// Decodes and records one system turn.
    pub fn system_turn(&mut self) -> Result<(DialogTurn, TurnResult), SessionError> {
        self.check_turn(Side::System)?;
        let remaining = self.constraint_state.remaining_groups(&self.curriculum);
        let result = decode_turn(
            &self.history_prefix(),
            &remaining,
            self.scorer.as_ref(),
            &self.cfg,
            self.system_turns,
        )?;
        let text = self.scorer.vocab().detokenize(&result.utterance);
        let turn = self.record(Side::System, text, result.utterance.clone())?;
        self.system_turns += 1;
        self.turn_results.push(result.clone());
        Ok((turn, result))
    }

    /// Records a user turn given as text, tokenized with the scorer's vocabulary.
    pub fn user_turn(&mut self, text: &str) -> Result<DialogTurn, SessionError> {
        self.check_turn(Side::User)?;
        let tokens = self.scorer.vocab().tokenize(text)?;
        self.record(Side::User, text.to_string(), tokens)
    }

    /// Records a user turn given as token ids.
    pub fn user_turn_tokens(&mut self, tokens: Vec<TokenId>) -> Result<DialogTurn, SessionError> {
        self.check_turn(Side::User)?;
        let vocab = self.scorer.vocab();
        for &t in &tokens {
            vocab.check_id(t)?;
            if vocab.is_special(t) {
                return Err(SessionError::InvalidArgument(format!(
                    "user turn contains reserved token {t}"
                )));
            }
        }
        let text = vocab.detokenize(&tokens);
        self.record(Side::User, text, tokens)
    }

    pub fn snapshot(&self) -> ConfigSnapshot {
        ConfigSnapshot {
            beam: self.cfg.clone(),
            sides_counted: self.sides_counted.to_sides(),
            opener: self.opener,
            groups: self.curriculum.group_names(),
        }
    }

    /// Transcript of the dialog so far. `duration_ms` defaults to the wall
    /// clock since the session was created.
    pub fn transcript(
        &self,
        session_id: impl Into<String>,
        duration_ms: Option<u64>,
    ) -> SessionTranscript {
        SessionTranscript {
            session_id: session_id.into(),
            config: self.snapshot(),
            turns: self.history.iter().map(TranscriptTurn::from).collect(),
            final_remaining: self.constraint_state.remaining().to_vec(),
            duration_ms: duration_ms.unwrap_or_else(|| self.started.elapsed().as_millis() as u64),
            error: None,
        }
    }

    /// Alternates system turns and policy replies until `max_system_turns`
    /// system turns have been taken or the policy ends the dialog, then
    /// closes the session.
    ///
    /// On failure the partial transcript, marked with the error, travels in
    /// [`SessionError::Aborted`].
    pub fn run_dialog(
        &mut self,
        policy: &mut dyn UserPolicy,
        max_system_turns: usize,
        session_id: &str,
        duration_ms: Option<u64>,
    ) -> Result<SessionTranscript, SessionError> {
        if max_system_turns == 0 {
            return Err(SessionError::InvalidArgument(
                "max_system_turns must be >= 1".into(),
            ));
        }
        let outcome = self.dialog_loop(policy, max_system_turns);
        self.close();
        let mut transcript = self.transcript(session_id, duration_ms);
        match outcome {
            Ok(()) => Ok(transcript),
            Err(e) => {
                let message = e.to_string();
                transcript.error = Some(message.clone());
                Err(SessionError::Aborted {
                    transcript: Box::new(transcript),
                    message,
                })
            }
        }
    }

    fn dialog_loop(
        &mut self,
        policy: &mut dyn UserPolicy,
        max_system_turns: usize,
    ) -> Result<(), SessionError> {
        let mut next = match self.history.last() {
            Some(t) => t.side.other(),
            None => self.opener,
        };
        let mut taken = 0;
        while taken < max_system_turns {
            match next {
                Side::System => {
                    self.system_turn()?;
                    taken += 1;
                }
                Side::User => {
                    let last_system = self
                        .history
                        .iter()
                        .rev()
                        .find(|t| t.side == Side::System)
                        .map(|t| (t.text.as_str(), t.tokens.as_slice()));
                    let ctx = PolicyContext {
                        last_system,
                        curriculum: &self.curriculum,
                    };
                    match policy.reply(&ctx)? {
                        PolicyReply::Say(text) => {
                            self.user_turn(&text)?;
                        }
                        PolicyReply::End => break,
                    }
                }
            }
            next = next.other();
        }
        Ok(())
    }
}

impl std::fmt::Debug for SessionState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionState")
            .field("constraint_state", &self.constraint_state)
            .field("turns", &self.history.len())
            .field("system_turns", &self.system_turns)
            .field("closed", &self.closed)
            .finish_non_exhaustive()
    }
}
