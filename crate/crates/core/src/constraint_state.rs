//! Per-session record of which constraint groups are still to be used.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curriculum::{ConstraintGroup, Curriculum, PhraseConstraint};
use crate::vocab::TokenId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Side {
    System,
    User,
}

impl Side {
    pub fn other(self) -> Self {
        match self {
            Side::System => Side::User,
            Side::User => Side::System,
        }
    }
}

/// Which sides' utterances remove groups from the forcing list.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SideSet {
    pub system: bool,
    pub user: bool,
}

impl SideSet {
    pub const BOTH: SideSet = SideSet {
        system: true,
        user: true,
    };
    pub const SYSTEM_ONLY: SideSet = SideSet {
        system: true,
        user: false,
    };

    pub fn contains(&self, side: Side) -> bool {
        match side {
            Side::System => self.system,
            Side::User => self.user,
        }
    }

    pub fn from_sides(sides: &[Side]) -> Self {
        Self {
            system: sides.contains(&Side::System),
            user: sides.contains(&Side::User),
        }
    }

    pub fn to_sides(self) -> Vec<Side> {
        let mut v = Vec::new();
        if self.system {
            v.push(Side::System);
        }
        if self.user {
            v.push(Side::User);
        }
        v
    }
}

impl Default for SideSet {
    fn default() -> Self {
        Self::BOTH
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SatisfactionEvent {
    pub group_name: String,
    pub phrase_surface: String,
    pub turn_index: usize,
    pub side: Side,
}

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("turn index {got} precedes already recorded turn {last}")]
    TurnRegression { got: usize, last: usize },
}

/// Position of `needle` as a contiguous whole-token run in `haystack`.
pub fn find_subsequence(haystack: &[TokenId], needle: &[TokenId]) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    haystack.windows(needle.len()).position(|w| w == needle)
}

/// Best matching phrase of `group` in `tokens`: longest phrase first, then
/// earliest position, then lexicographically smaller surface.
pub fn longest_match<'g>(
    group: &'g ConstraintGroup,
    tokens: &[TokenId],
) -> Option<&'g PhraseConstraint> {
    group
        .phrases()
        .iter()
        .filter_map(|p| find_subsequence(tokens, p.token_ids()).map(|pos| (p, pos)))
        .min_by(|(pa, a), (pb, b)| {
            pb.len()
                .cmp(&pa.len())
                .then(a.cmp(b))
                .then_with(|| pa.surface().cmp(pb.surface()))
        })
        .map(|(p, _)| p)
}

/// Remaining vs. satisfied groups, plus the satisfaction history.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintState {
    remaining: Vec<String>,
    events: Vec<SatisfactionEvent>,
}

impl ConstraintState {
    pub fn new(curriculum: &Curriculum) -> Self {
        Self {
            remaining: curriculum.group_names(),
            events: Vec::new(),
        }
    }

    /// Remaining group names in curriculum order.
    pub fn remaining(&self) -> &[String] {
        &self.remaining
    }

    pub fn events(&self) -> &[SatisfactionEvent] {
        &self.events
    }

    pub fn is_remaining(&self, group: &str) -> bool {
        self.remaining.iter().any(|g| g == group)
    }

    /// The curriculum groups still to be forced, in curriculum order.
    pub fn remaining_groups<'c>(&self, curriculum: &'c Curriculum) -> Vec<&'c ConstraintGroup> {
        curriculum
            .groups()
            .iter()
            .filter(|g| self.is_remaining(g.name()))
            .collect()
    }

    /// Checks `tokens` for uses of still-remaining groups and records one
    /// event per newly satisfied group.
    pub fn scan_utterance(
        &mut self,
        curriculum: &Curriculum,
        tokens: &[TokenId],
        side: Side,
        turn_index: usize,
        sides_counted: SideSet,
    ) -> Result<Vec<SatisfactionEvent>, StateError> {
        if let Some(last) = self.events.last().map(|e| e.turn_index) {
            if turn_index < last {
                return Err(StateError::TurnRegression {
                    got: turn_index,
                    last,
                });
            }
        }
        if !sides_counted.contains(side) || self.remaining.is_empty() {
            return Ok(Vec::new());
        }
        let mut new_events = Vec::new();
        for group in curriculum.groups() {
            if !self.is_remaining(group.name()) {
                continue;
            }
            if let Some(phrase) = longest_match(group, tokens) {
                new_events.push(SatisfactionEvent {
                    group_name: group.name().to_string(),
                    phrase_surface: phrase.surface().to_string(),
                    turn_index,
                    side,
                });
            }
        }
        self.remaining
            .retain(|g| !new_events.iter().any(|e| &e.group_name == g));
        self.events.extend(new_events.iter().cloned());
        Ok(new_events)
    }

    /// `|remaining| + |events|` equals the number of curriculum groups.
    pub fn is_conserved(&self, curriculum: &Curriculum) -> bool {
        self.remaining.len() + self.events.len() == curriculum.len()
            && self
                .events
                .iter()
                .all(|e| !self.is_remaining(&e.group_name))
    }
}
