//! Simulated users that reply to system turns.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint_state::longest_match;
use crate::curriculum::Curriculum;
use crate::vocab::TokenId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("invalid user policy: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum PolicyReply {
    Say(String),
    End,
}

/// What a policy can see when it is its turn to speak.
pub struct PolicyContext<'a> {
    /// Text and tokens of the most recent system turn, if any.
    pub last_system: Option<(&'a str, &'a [TokenId])>,
    pub curriculum: &'a Curriculum,
}

pub trait UserPolicy {
    fn reply(&mut self, ctx: &PolicyContext<'_>) -> Result<PolicyReply, PolicyError>;
}

/// Says each script line in order, then ends the dialog.
#[derive(Clone, Debug)]
pub struct ScriptedPolicy {
    script: Vec<String>,
    next: usize,
}

impl ScriptedPolicy {
    pub fn new(script: Vec<String>) -> Result<Self, PolicyError> {
        if script.is_empty() {
            return Err(PolicyError::Invalid(
                "scripted policy needs a non-empty script".into(),
            ));
        }
        Ok(Self { script, next: 0 })
    }
}

impl UserPolicy for ScriptedPolicy {
    fn reply(&mut self, _ctx: &PolicyContext<'_>) -> Result<PolicyReply, PolicyError> {
        match self.script.get(self.next) {
            Some(line) => {
                self.next += 1;
                Ok(PolicyReply::Say(line.clone()))
            }
            None => Ok(PolicyReply::End),
        }
    }
}

/// Repeats the last system utterance verbatim.
#[derive(Clone, Copy, Debug, Default)]
pub struct EchoPolicy;

impl UserPolicy for EchoPolicy {
    fn reply(&mut self, ctx: &PolicyContext<'_>) -> Result<PolicyReply, PolicyError> {
        Ok(PolicyReply::Say(
            ctx.last_system
                .map(|(text, _)| text.to_string())
                .unwrap_or_default(),
        ))
    }
}

/// Follows a fallback script, but with probability `p_adopt` appends a
/// constraint phrase the system just used.
///
/// One random draw is consumed per reply whether or not the system used a
/// constraint phrase, so runs with different `p_adopt` and the same seed
/// stay coupled.
#[derive(Clone, Debug)]
pub struct ConstraintCuriousPolicy {
    script: ScriptedPolicy,
    p_adopt: f64,
    rng: ChaCha8Rng,
}

impl ConstraintCuriousPolicy {
    pub fn new(script: Vec<String>, p_adopt: f64, seed: u64) -> Result<Self, PolicyError> {
        if !(0.0..=1.0).contains(&p_adopt) {
            return Err(PolicyError::Invalid(format!(
                "p_adopt must be in [0, 1], got {p_adopt}"
            )));
        }
        Ok(Self {
            script: ScriptedPolicy::new(script)?,
            p_adopt,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl UserPolicy for ConstraintCuriousPolicy {
    fn reply(&mut self, ctx: &PolicyContext<'_>) -> Result<PolicyReply, PolicyError> {
        let line = match self.script.reply(ctx)? {
            PolicyReply::Say(line) => line,
            PolicyReply::End => return Ok(PolicyReply::End),
        };
        let draw: f64 = self.rng.gen();
        if draw >= self.p_adopt {
            return Ok(PolicyReply::Say(line));
        }
        let used = ctx.last_system.and_then(|(_, tokens)| {
            ctx.curriculum
                .groups()
                .iter()
                .find_map(|g| longest_match(g, tokens))
        });
        Ok(PolicyReply::Say(match used {
            Some(p) if line.trim().is_empty() => p.surface().to_string(),
            Some(p) => format!("{line} {}", p.surface()),
            None => line,
        }))
    }
}

/// Serializable policy description, as found in simulation configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyConfig {
    Scripted { script: Vec<String> },
    Echo {},
    ConstraintCurious { script: Vec<String>, p_adopt: f64 },
}

impl PolicyConfig {
    pub fn build(&self, seed: u64) -> Result<Box<dyn UserPolicy + Send>, PolicyError> {
        Ok(match self {
            PolicyConfig::Scripted { script } => Box::new(ScriptedPolicy::new(script.clone())?),
            PolicyConfig::Echo {} => Box::new(EchoPolicy),
            PolicyConfig::ConstraintCurious { script, p_adopt } => Box::new(
                ConstraintCuriousPolicy::new(script.clone(), *p_adopt, seed)?,
            ),
        })
    }
}
