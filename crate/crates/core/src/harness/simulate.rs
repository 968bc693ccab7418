//! Config-driven batches of simulated dialogs.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::metrics::{compute_usage, UsageReport};
use super::HarnessError;
use crate::constraint_state::{Side, SideSet};
use crate::curriculum::{Curriculum, OovPolicy};
use crate::decoder::{BeamConfig, TurnResult};
use crate::exec::{self, Execution};
use crate::policy::PolicyConfig;
use crate::scorer::{NgramScorer, Scorer, SubprocessScorer};
use crate::session::{write_transcripts, SessionError, SessionState, SessionTranscript};
use crate::vocab::Vocabulary;

fn default_order() -> usize {
    2
}

fn default_k() -> f64 {
    1.0
}

fn default_sides() -> Vec<Side> {
    vec![Side::System, Side::User]
}

fn default_turns() -> usize {
    6
}

fn default_opener() -> Side {
    Side::System
}

/// Which language model backs the sessions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScorerSpec {
    /// Add-k n-gram trained on a text corpus, one utterance per line. The
    /// vocabulary is the corpus words unless `vocab_path` is given.
    Ngram {
        corpus_path: PathBuf,
        #[serde(default = "default_order")]
        order: usize,
        #[serde(default = "default_k")]
        k: f64,
        #[serde(default)]
        vocab_path: Option<PathBuf>,
    },
    /// External model speaking the JSON line protocol; one child per session.
    Subprocess {
        command: Vec<String>,
        vocab_path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub scorer: ScorerSpec,
    pub curriculum_path: PathBuf,
    #[serde(default)]
    pub beam: BeamConfig,
    pub policy: PolicyConfig,
    pub sessions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sides")]
    pub sides_counted: Vec<Side>,
    #[serde(default = "default_turns")]
    pub max_system_turns: usize,
    #[serde(default = "default_opener")]
    pub opener: Side,
    #[serde(default)]
    pub oov_policy: OovPolicy,
    /// Record wall-clock durations. Off by default so transcripts are
    /// byte-for-byte reproducible.
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub execution: Execution,
}

impl SimulationConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::io(format!("reading {}", path.display()), e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.curriculum_path);
        match &mut self.scorer {
            ScorerSpec::Ngram {
                corpus_path,
                vocab_path,
                ..
            } => {
                fix(corpus_path);
                if let Some(v) = vocab_path {
                    fix(v);
                }
            }
            ScorerSpec::Subprocess { vocab_path, .. } => fix(vocab_path),
        }
    }

    pub fn sides(&self) -> SideSet {
        SideSet::from_sides(&self.sides_counted)
    }

    pub fn beam(&self) -> BeamConfig {
        BeamConfig {
            execution: self.execution,
            ..self.beam.clone()
        }
    }
}

fn read(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|e| HarnessError::io(format!("reading {}", path.display()), e))
}

/// Vocabulary, curriculum and scorer built from a config.
pub struct Environment {
    pub vocab: Vocabulary,
    pub curriculum: Arc<Curriculum>,
    shared: Option<Arc<dyn Scorer>>,
    command: Vec<String>,
}

impl Environment {
    pub fn build(cfg: &SimulationConfig) -> Result<Self, HarnessError> {
        let (vocab, shared, command) = match &cfg.scorer {
            ScorerSpec::Ngram {
                corpus_path,
                order,
                k,
                vocab_path,
            } => {
                let text = read(corpus_path)?;
                let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
                let vocab = match vocab_path {
                    Some(p) => Vocabulary::load(p)?,
                    None => Vocabulary::with_words(&lines),
                };
                let corpus = lines
                    .iter()
                    .map(|l| vocab.tokenize(l))
                    .collect::<Result<Vec<_>, _>>()?;
                let lm = NgramScorer::train(vocab.clone(), &corpus, *order, *k)?;
                (vocab, Some(Arc::new(lm) as Arc<dyn Scorer>), Vec::new())
            }
            ScorerSpec::Subprocess {
                command,
                vocab_path,
            } => (Vocabulary::load(vocab_path)?, None, command.clone()),
        };
        let (curriculum, _) =
            Curriculum::parse(&read(&cfg.curriculum_path)?, &vocab, cfg.oov_policy)?;
        Ok(Self {
            vocab,
            curriculum: Arc::new(curriculum),
            shared,
            command,
        })
    }

    /// Scorer for one session: the shared model, or a fresh child process.
    pub fn session_scorer(&self) -> Result<Arc<dyn Scorer>, HarnessError> {
        match &self.shared {
            Some(s) => Ok(s.clone()),
            None => Ok(Arc::new(SubprocessScorer::spawn(
                &self.command,
                self.vocab.clone(),
            )?)),
        }
    }

    pub fn new_session(&self, cfg: &SimulationConfig) -> Result<SessionState, HarnessError> {
        Ok(SessionState::new(
            self.curriculum.clone(),
            self.session_scorer()?,
            cfg.beam(),
            cfg.sides(),
        )?
        .with_opener(cfg.opener))
    }
}

#[derive(Clone, Debug)]
pub struct SessionRecord {
    pub transcript: SessionTranscript,
    /// One entry per system turn, in order.
    pub turn_results: Vec<TurnResult>,
}

#[derive(Clone, Debug)]
pub struct SimulationOutput {
    pub records: Vec<SessionRecord>,
    pub report: UsageReport,
}

impl SimulationOutput {
    pub fn transcripts(&self) -> Vec<SessionTranscript> {
        self.records.iter().map(|r| r.transcript.clone()).collect()
    }
}

fn run_one(env: &Environment, cfg: &SimulationConfig, index: usize) -> SessionRecord {
    let session_id = format!("s{index:04}");
    let timing = if cfg.record_timing { None } else { Some(0) };
    let failed = |message: String| SessionRecord {
        transcript: SessionTranscript {
            session_id: session_id.clone(),
            config: crate::session::ConfigSnapshot {
                beam: cfg.beam.clone(),
                sides_counted: cfg.sides().to_sides(),
                opener: cfg.opener,
                groups: env.curriculum.group_names(),
            },
            turns: Vec::new(),
            final_remaining: env.curriculum.group_names(),
            duration_ms: 0,
            error: Some(message),
        },
        turn_results: Vec::new(),
    };
    let mut session = match env.new_session(cfg) {
        Ok(s) => s,
        Err(e) => return failed(e.to_string()),
    };
    let mut policy = match cfg.policy.build(cfg.seed.wrapping_add(index as u64)) {
        Ok(p) => p,
        Err(e) => return failed(e.to_string()),
    };
    let transcript =
        match session.run_dialog(policy.as_mut(), cfg.max_system_turns, &session_id, timing) {
            Ok(t) => t,
            Err(SessionError::Aborted { transcript, .. }) => *transcript,
            Err(e) => return failed(e.to_string()),
        };
    SessionRecord {
        transcript,
        turn_results: session.turn_results().to_vec(),
    }
}

/// Runs `cfg.sessions` independent dialogs and computes the usage report.
///
/// Session `i` seeds its policy with `seed + i`. A failing session keeps its
/// partial transcript (marked with the error) and is counted in the
/// report's error total; the others proceed.
pub fn run_simulation(cfg: &SimulationConfig) -> Result<SimulationOutput, HarnessError> {
    if cfg.max_system_turns == 0 {
        return Err(HarnessError::Config("max_system_turns must be >= 1".into()));
    }
    cfg.beam()
        .validate()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    cfg.policy.build(cfg.seed)?;
    let env = Environment::build(cfg)?;
    let indices: Vec<usize> = (0..cfg.sessions).collect();
    let records = exec::map(cfg.execution, &indices, |&i| run_one(&env, cfg, i));
    let transcripts: Vec<SessionTranscript> =
        records.iter().map(|r| r.transcript.clone()).collect();
    let report = compute_usage(&transcripts, &env.curriculum)?;
    Ok(SimulationOutput { records, report })
}

/// Writes `transcripts.jsonl`, `report.csv` and `report.json` into `dir`.
pub fn write_outputs(dir: &Path, output: &SimulationOutput) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)
        .map_err(|e| HarnessError::io(format!("creating {}", dir.display()), e))?;
    let open = |name: &str| {
        let p = dir.join(name);
        fs::File::create(&p).map_err(|e| HarnessError::io(format!("creating {}", p.display()), e))
    };
    write_transcripts(
        std::io::BufWriter::new(open("transcripts.jsonl")?),
        &output.transcripts(),
    )
    .map_err(|e| HarnessError::io("writing transcripts", e))?;
    output
        .report
        .write_csv(open("report.csv")?)
        .map_err(|e| HarnessError::Config(format!("writing report.csv: {e}")))?;
    let json = serde_json::to_string_pretty(&output.report).expect("report serializes");
    fs::write(dir.join("report.json"), json + "\n")
        .map_err(|e| HarnessError::io("writing report.json", e))?;
    Ok(())
}
