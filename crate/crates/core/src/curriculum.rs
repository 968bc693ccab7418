//! Curriculum word lists: disjunctive groups of word or phrase constraints.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vocab::{normalize, TokenId, Vocabulary};

#[derive(Debug, Error, PartialEq)]
pub enum CurriculumError {
    #[error("malformed curriculum document: {0}")]
    Malformed(String),
    #[error("duplicate group name {0:?}")]
    DuplicateGroup(String),
    #[error("group {group:?} lists phrase {phrase:?} twice")]
    DuplicatePhrase { group: String, phrase: String },
    #[error("group {0:?} has no phrases")]
    EmptyGroup(String),
    #[error("group {group:?}: phrase {phrase:?} is empty")]
    EmptyPhrase { group: String, phrase: String },
    #[error("group {group:?}: phrase {phrase:?} has out-of-vocabulary word {word:?}")]
    OutOfVocabulary {
        group: String,
        phrase: String,
        word: String,
    },
    #[error("group {0:?} is empty after skipping out-of-vocabulary phrases")]
    EmptiedBySkip(String),
    #[error("phrase {phrase:?} contains a reserved or unknown token id {id}")]
    BadToken { phrase: String, id: TokenId },
}

/// What to do with a phrase that uses a word missing from the vocabulary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OovPolicy {
    #[default]
    Reject,
    Skip,
}

/// A single word or multi-word phrase, already tokenized.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PhraseConstraint {
    surface: String,
    token_ids: Vec<TokenId>,
}

impl PhraseConstraint {
    pub fn new(surface: impl Into<String>, token_ids: Vec<TokenId>) -> Self {
        Self {
            surface: surface.into(),
            token_ids,
        }
    }

    /// Tokenizes `text` against `vocab`.
    pub fn from_text(text: &str, vocab: &Vocabulary) -> Result<Self, CurriculumError> {
        let words = normalize(text);
        let mut ids = Vec::with_capacity(words.len());
        for w in &words {
            match vocab.id(w) {
                Some(id) => ids.push(id),
                None => {
                    return Err(CurriculumError::OutOfVocabulary {
                        group: String::new(),
                        phrase: text.to_string(),
                        word: w.clone(),
                    })
                }
            }
        }
        Ok(Self::new(words.join(" "), ids))
    }

    pub fn surface(&self) -> &str {
        &self.surface
    }

    pub fn token_ids(&self) -> &[TokenId] {
        &self.token_ids
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// Disjunctive alternatives: emitting any one phrase satisfies the group.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintGroup {
    name: String,
    phrases: Vec<PhraseConstraint>,
}

impl ConstraintGroup {
    pub fn new(
        name: impl Into<String>,
        phrases: Vec<PhraseConstraint>,
    ) -> Result<Self, CurriculumError> {
        let name = name.into();
        if phrases.is_empty() {
            return Err(CurriculumError::EmptyGroup(name));
        }
        let mut seen = HashSet::new();
        for p in &phrases {
            if p.is_empty() {
                return Err(CurriculumError::EmptyPhrase {
                    group: name,
                    phrase: p.surface.clone(),
                });
            }
            if !seen.insert(p.surface.as_str()) {
                return Err(CurriculumError::DuplicatePhrase {
                    group: name,
                    phrase: p.surface.clone(),
                });
            }
        }
        Ok(Self { name, phrases })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn phrases(&self) -> &[PhraseConstraint] {
        &self.phrases
    }
}

/// Ordered list of constraint groups. May be empty.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Curriculum {
    groups: Vec<ConstraintGroup>,
}

/// Phrases dropped under [`OovPolicy::Skip`].
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SkipReport {
    pub skipped: Vec<SkippedPhrase>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SkippedPhrase {
    pub group: String,
    pub phrase: String,
    pub word: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CurriculumDoc {
    groups: Vec<GroupDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupDoc {
    name: String,
    phrases: Vec<String>,
}

impl Curriculum {
    pub fn new(groups: Vec<ConstraintGroup>) -> Result<Self, CurriculumError> {
        let mut seen = HashSet::new();
        for g in &groups {
            if !seen.insert(g.name.as_str()) {
                return Err(CurriculumError::DuplicateGroup(g.name.clone()));
            }
        }
        Ok(Self { groups })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn groups(&self) -> &[ConstraintGroup] {
        &self.groups
    }

    pub fn group(&self, name: &str) -> Option<&ConstraintGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn group_names(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.name.clone()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    /// Every phrase id must lie in the vocabulary and be neither bos nor eos.
    pub fn validate_against(&self, vocab: &Vocabulary) -> Result<(), CurriculumError> {
        for g in &self.groups {
            for p in &g.phrases {
                for &id in &p.token_ids {
                    if vocab.check_id(id).is_err() || vocab.is_special(id) {
                        return Err(CurriculumError::BadToken {
                            phrase: p.surface.clone(),
                            id,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Parses the JSON curriculum document and tokenizes every phrase.
    pub fn parse(
        document: &str,
        vocab: &Vocabulary,
        policy: OovPolicy,
    ) -> Result<(Self, SkipReport), CurriculumError> {
        let doc: CurriculumDoc = serde_json::from_str(document)
            .map_err(|e| CurriculumError::Malformed(e.to_string()))?;
        let mut report = SkipReport::default();
        let mut groups = Vec::with_capacity(doc.groups.len());
        for g in doc.groups {
            if g.phrases.is_empty() {
                return Err(CurriculumError::EmptyGroup(g.name));
            }
            let mut phrases = Vec::with_capacity(g.phrases.len());
            for text in &g.phrases {
                match PhraseConstraint::from_text(text, vocab) {
                    Ok(p) => phrases.push(p),
                    Err(CurriculumError::OutOfVocabulary { word, .. }) => match policy {
                        OovPolicy::Reject => {
                            return Err(CurriculumError::OutOfVocabulary {
                                group: g.name,
                                phrase: text.clone(),
                                word,
                            })
                        }
                        OovPolicy::Skip => report.skipped.push(SkippedPhrase {
                            group: g.name.clone(),
                            phrase: text.clone(),
                            word,
                        }),
                    },
                    Err(e) => return Err(e),
                }
            }
            if phrases.is_empty() {
                return Err(CurriculumError::EmptiedBySkip(g.name));
            }
            groups.push(ConstraintGroup::new(g.name, phrases)?);
        }
        let curriculum = Self::new(groups)?;
        curriculum.validate_against(vocab)?;
        Ok((curriculum, report))
    }
}
