//! Batch simulation, interactive chat and usage metrics.

pub mod chat;
pub mod metrics;
pub mod simulate;

use thiserror::Error;

use crate::curriculum::CurriculumError;
use crate::policy::PolicyError;
use crate::scorer::ScorerError;
use crate::session::SessionError;
use crate::vocab::VocabError;

pub use chat::run_chat;
pub use metrics::{compute_usage, MetricsError, UsageReport, UsageRow, ANY};
pub use simulate::{
    run_simulation, write_outputs, Environment, ScorerSpec, SessionRecord, SimulationConfig,
    SimulationOutput,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{context}: {error}")]
    Io {
        context: String,
        error: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl HarnessError {
    pub(crate) fn io(context: impl Into<String>, error: std::io::Error) -> Self {
        Self::Io {
            context: context.into(),
            error,
        }
    }
}
