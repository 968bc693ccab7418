//! Word-level token alphabet shared by curricula, scorers and the decoder.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

/// Token identifier. Ids are dense in `[0, vocab.len())`.
pub type TokenId = u32;

pub const BOS_SURFACE: &str = "<bos>";
pub const EOS_SURFACE: &str = "<eos>";

#[derive(Debug, Error, PartialEq)]
pub enum VocabError {
    #[error("duplicate surface form {0:?}")]
    Duplicate(String),
    #[error("token {0:?} contains whitespace or is empty")]
    BadSurface(String),
    #[error("bos and eos must be distinct ids, both got {0}")]
    SameSpecial(TokenId),
    #[error("special id {id} out of range for vocabulary of size {size}")]
    SpecialOutOfRange { id: TokenId, size: usize },
    #[error("vocabulary file is missing the {0} token")]
    MissingSpecial(&'static str),
    #[error("word {0:?} is not in the vocabulary")]
    OutOfVocabulary(String),
    #[error("token id {id} out of range for vocabulary of size {size}")]
    UnknownId { id: TokenId, size: usize },
    #[error("reading vocabulary file: {0}")]
    Io(String),
}

/// Lowercases and splits on whitespace. The same rule is applied to user
/// text, curriculum phrases and corpora.
pub fn normalize(text: &str) -> Vec<String> {
    text.split_whitespace().map(|w| w.to_lowercase()).collect()
}

/// Bijective surface <-> id map with reserved begin/end-of-turn ids.
#[derive(Clone, PartialEq)]
pub struct Vocabulary {
    surfaces: Vec<String>,
    ids: HashMap<String, TokenId>,
    bos_id: TokenId,
    eos_id: TokenId,
}

impl fmt::Debug for Vocabulary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Vocabulary")
            .field("size", &self.surfaces.len())
            .field("bos_id", &self.bos_id)
            .field("eos_id", &self.eos_id)
            .finish()
    }
}

impl Vocabulary {
    /// Builds a vocabulary from explicit surfaces, where position is the id.
    pub fn from_surfaces(
        surfaces: Vec<String>,
        bos_id: TokenId,
        eos_id: TokenId,
    ) -> Result<Self, VocabError> {
        if bos_id == eos_id {
            return Err(VocabError::SameSpecial(bos_id));
        }
        for id in [bos_id, eos_id] {
            if id as usize >= surfaces.len() {
                return Err(VocabError::SpecialOutOfRange {
                    id,
                    size: surfaces.len(),
                });
            }
        }
        let mut ids = HashMap::with_capacity(surfaces.len());
        for (i, s) in surfaces.iter().enumerate() {
            if s.is_empty() || s.chars().any(char::is_whitespace) {
                return Err(VocabError::BadSurface(s.clone()));
            }
            if ids.insert(s.clone(), i as TokenId).is_some() {
                return Err(VocabError::Duplicate(s.clone()));
            }
        }
        Ok(Self {
            surfaces,
            ids,
            bos_id,
            eos_id,
        })
    }

    /// `<bos>` = 0, `<eos>` = 1, then the given words (normalized, first
    /// occurrence wins) in order.
    pub fn with_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut surfaces = vec![BOS_SURFACE.to_string(), EOS_SURFACE.to_string()];
        let mut seen: HashMap<String, ()> = HashMap::new();
        seen.insert(BOS_SURFACE.into(), ());
        seen.insert(EOS_SURFACE.into(), ());
        for w in words {
            for tok in normalize(w.as_ref()) {
                if seen.insert(tok.clone(), ()).is_none() {
                    surfaces.push(tok);
                }
            }
        }
        Self::from_surfaces(surfaces, 0, 1).expect("constructed vocabulary is valid")
    }

    /// One surface per line; the line number is the id. `<bos>` and `<eos>`
    /// must both appear.
    pub fn parse(text: &str) -> Result<Self, VocabError> {
        let surfaces: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        let find = |name: &'static str| {
            surfaces
                .iter()
                .position(|s| s == name)
                .map(|p| p as TokenId)
                .ok_or(VocabError::MissingSpecial(name))
        };
        let bos = find(BOS_SURFACE)?;
        let eos = find(EOS_SURFACE)?;
        Self::from_surfaces(surfaces, bos, eos)
    }

    pub fn load(path: &Path) -> Result<Self, VocabError> {
        let text = fs::read_to_string(path)
            .map_err(|e| VocabError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for s in &self.surfaces {
            out.push_str(s);
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn bos_id(&self) -> TokenId {
        self.bos_id
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos_id
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        id == self.bos_id || id == self.eos_id
    }

    pub fn id(&self, surface: &str) -> Option<TokenId> {
        self.ids.get(surface).copied()
    }

    pub fn surface(&self, id: TokenId) -> Option<&str> {
        self.surfaces.get(id as usize).map(String::as_str)
    }

    pub fn check_id(&self, id: TokenId) -> Result<(), VocabError> {
        if (id as usize) < self.len() {
            Ok(())
        } else {
            Err(VocabError::UnknownId {
                id,
                size: self.len(),
            })
        }
    }

    /// Normalizes `text` and maps every word to its id.
    pub fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, VocabError> {
        normalize(text)
            .into_iter()
            .map(|w| self.id(&w).ok_or(VocabError::OutOfVocabulary(w)))
            .collect()
    }

    /// Space-joined surfaces. Unknown ids render as `<unk:N>`.
    pub fn detokenize(&self, tokens: &[TokenId]) -> String {
        tokens
            .iter()
            .map(|&t| match self.surface(t) {
                Some(s) => s.to_string(),
                None => format!("<unk:{t}>"),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}
