use std::fs;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mgbs::constraint_state::SideSet;
use mgbs::curriculum::{ConstraintGroup, OovPolicy};
use mgbs::decoder::{decode_turn, search_banks, BeamConfig, ScoreMode};
use mgbs::exec;
use mgbs::harness::{
    compute_usage, run_chat, run_simulation, write_outputs, Environment, ScorerSpec,
    SimulationConfig,
};
use mgbs::oracle::{exhaustive_decode, random_case};
use mgbs::policy::PolicyConfig;
use mgbs::session::read_transcripts;
use mgbs::{Execution, Side, TokenId};

#[derive(Parser)]
#[command(
    name = "mgbs",
    version,
    about = "Curriculum-constrained dialog decoding"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode one system turn.
    Decode(DecodeArgs),
    /// Chat with the decoder on stdin/stdout.
    Chat(ChatArgs),
    /// Run a batch of simulated dialogs from a config file.
    Simulate(SimulateArgs),
    /// Compute constraint-usage frequencies from a transcript file.
    Metrics(MetricsArgs),
    /// Compare the decoder with exhaustive search on random small models.
    OracleCheck(OracleArgs),
}

/// Where the language model and curriculum come from.
#[derive(Args)]
#[group(required = true, multiple = false, id = "source")]
struct ModelSource {
    /// Simulation config file; its scorer, curriculum and beam are used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Train an add-k n-gram model on this corpus (one utterance per line).
    #[arg(long, requires = "curriculum")]
    corpus: Option<PathBuf>,
    /// External scorer command, split on whitespace. Needs --vocab.
    #[arg(long, requires_all = ["curriculum", "vocab"])]
    scorer_cmd: Option<String>,
}

#[derive(Args)]
struct ModelArgs {
    #[command(flatten)]
    source: ModelSource,
    /// Curriculum JSON file.
    #[arg(long)]
    curriculum: Option<PathBuf>,
    /// Vocabulary file, one token per line.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// Add-k smoothing constant.
    #[arg(long, default_value_t = 1.0)]
    smoothing: f64,
    #[arg(long, value_enum, default_value_t = OovArg::Reject)]
    oov: OovArg,
    #[command(flatten)]
    beam: BeamArgs,
    /// Run sequentially even when built with parallel support.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Default)]
struct BeamArgs {
    /// Beam size.
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    min_len: Option<usize>,
    /// Length penalty exponent.
    #[arg(long)]
    alpha: Option<f64>,
    /// Initial forcing threshold.
    #[arg(long)]
    t0: Option<f64>,
    /// Threshold growth rate.
    #[arg(long)]
    a: Option<f64>,
    #[arg(long, value_enum)]
    score_mode: Option<ScoreModeArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoreModeArg {
    Raw,
    LengthNormalized,
}

#[derive(Clone, Copy, ValueEnum)]
enum OovArg {
    Reject,
    Skip,
}

#[derive(Clone, Copy, ValueEnum)]
enum SidesArg {
    Both,
    System,
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// A previous turn; repeat for several, oldest first.
    #[arg(long = "history")]
    history: Vec<String>,
    /// Only force these groups (comma-separated); default all.
    #[arg(long, value_delimiter = ',')]
    remaining: Option<Vec<String>>,
    /// Dialog turn index used for the threshold schedule.
    #[arg(long, default_value_t = 0)]
    turn: usize,
    /// Print the full turn result as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ChatArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Print the remaining constraint groups after every system turn.
    #[arg(long)]
    show_constraints: bool,
    /// Which sides' utterances satisfy a group.
    #[arg(long, value_enum, default_value_t = SidesArg::Both)]
    sides: SidesArg,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory for transcripts.jsonl, report.csv and report.json.
    #[arg(long)]
    out: PathBuf,
    /// Override the configured number of sessions.
    #[arg(long)]
    sessions: Option<usize>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct MetricsArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Transcript file (JSON lines).
    #[arg(long)]
    transcripts: PathBuf,
    /// Also write the report as JSON here.
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 50)]
    cases: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Content words per random model (eos and bos come on top).
    #[arg(long, default_value_t = 3)]
    words: usize,
    #[arg(long, default_value_t = 5)]
    max_len: usize,
    #[arg(long, default_value_t = 256)]
    beam: usize,
    #[arg(long)]
    sequential: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Decode(a) => decode(a),
        Command::Chat(a) => chat(a),
        Command::Simulate(a) => simulate(a),
        Command::Metrics(a) => metrics(a),
        Command::OracleCheck(a) => oracle_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

impl BeamArgs {
    fn apply(&self, cfg: &mut BeamConfig) {
        if let Some(k) = self.beam {
            cfg.k = k;
        }
        if let Some(v) = self.max_len {
            cfg.max_len = v;
        }
        if let Some(v) = self.min_len {
            cfg.min_len = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.t0 {
            cfg.t0 = v;
        }
        if let Some(v) = self.a {
            cfg.a = v;
        }
        match self.score_mode {
            Some(ScoreModeArg::Raw) => cfg.score_mode = ScoreMode::Raw,
            Some(ScoreModeArg::LengthNormalized) => cfg.score_mode = ScoreMode::LengthNormalized,
            None => {}
        }
    }
}

impl ModelArgs {
    /// A simulation config carrying the model, curriculum and beam settings.
    fn config(&self) -> Result<SimulationConfig> {
        let mut cfg = match &self.source.config {
            Some(path) => SimulationConfig::load(path)?,
            None => {
                let scorer = match (&self.source.corpus, &self.source.scorer_cmd) {
                    (Some(corpus), _) => ScorerSpec::Ngram {
                        corpus_path: corpus.clone(),
                        order: self.order,
                        k: self.smoothing,
                        vocab_path: self.vocab.clone(),
                    },
                    (None, Some(cmd)) => ScorerSpec::Subprocess {
                        command: cmd.split_whitespace().map(str::to_string).collect(),
                        vocab_path: self.vocab.clone().context("--scorer-cmd needs --vocab")?,
                    },
                    (None, None) => bail!("no model given"),
                };
                SimulationConfig {
                    scorer,
                    curriculum_path: self
                        .curriculum
                        .clone()
                        .context("--curriculum is required")?,
                    beam: BeamConfig::default(),
                    policy: PolicyConfig::Echo {},
                    sessions: 1,
                    seed: 0,
                    sides_counted: vec![Side::System, Side::User],
                    max_system_turns: 6,
                    opener: Side::System,
                    oov_policy: match self.oov {
                        OovArg::Reject => OovPolicy::Reject,
                        OovArg::Skip => OovPolicy::Skip,
                    },
                    record_timing: false,
                    execution: Execution::Parallel,
                }
            }
        };
        self.beam.apply(&mut cfg.beam);
        if self.sequential {
            cfg.execution = Execution::Sequential;
        }
        cfg.beam().validate()?;
        Ok(cfg)
    }
}

fn decode(args: DecodeArgs) -> Result<()> {
    let cfg = args.model.config()?;
    let env = Environment::build(&cfg)?;
    let scorer = env.session_scorer()?;
    let mut history: Vec<TokenId> = Vec::new();
    for (i, turn) in args.history.iter().enumerate() {
        let tokens = env
            .vocab
            .tokenize(turn)
            .with_context(|| format!("history turn {}", i + 1))?;
        history.extend(tokens);
        history.push(env.vocab.eos_id());
    }
    let groups: Vec<&ConstraintGroup> = match &args.remaining {
        None => env.curriculum.groups().iter().collect(),
        Some(names) => names
            .iter()
            .filter(|n| !n.is_empty())
            .map(|n| {
                env.curriculum
                    .group(n)
                    .with_context(|| format!("unknown constraint group {n:?}"))
            })
            .collect::<Result<_>>()?,
    };
    let result = decode_turn(&history, &groups, scorer.as_ref(), &cfg.beam(), args.turn)?;
    let mut out = io::stdout().lock();
    if args.json {
        serde_json::to_writer_pretty(&mut out, &result)?;
        writeln!(out)?;
    } else {
        writeln!(out, "{}", env.vocab.detokenize(&result.utterance))?;
        writeln!(
            out,
            "satisfied: {}",
            result.satisfied_group.as_deref().unwrap_or("-")
        )?;
    }
    Ok(())
}

fn chat(args: ChatArgs) -> Result<()> {
    let mut cfg = args.model.config()?;
    if let SidesArg::System = args.sides {
        cfg.sides_counted = SideSet::SYSTEM_ONLY.to_sides();
    }
    let env = Environment::build(&cfg)?;
    let session = env.new_session(&cfg)?;
    run_chat(
        session,
        args.show_constraints,
        io::stdin().lock(),
        io::stdout().lock(),
    )?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = SimulationConfig::load(&args.config)?;
    if let Some(n) = args.sessions {
        cfg.sessions = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.sequential {
        cfg.execution = Execution::Sequential;
    }
    let output = run_simulation(&cfg)?;
    write_outputs(&args.out, &output)?;
    output.report.write_csv(io::stdout().lock())?;
    if output.report.errors > 0 {
        eprintln!("{} session(s) ended in an error", output.report.errors);
    }
    Ok(())
}

fn metrics(args: MetricsArgs) -> Result<()> {
    let cfg = args.model.config()?;
    let env = Environment::build(&cfg)?;
    let file = fs::File::open(&args.transcripts)
        .with_context(|| format!("opening {}", args.transcripts.display()))?;
    let transcripts = read_transcripts(BufReader::new(file))
        .map_err(anyhow::Error::msg)
        .with_context(|| format!("reading {}", args.transcripts.display()))?;
    let report = compute_usage(&transcripts, &env.curriculum)?;
    report.write_csv(io::stdout().lock())?;
    if let Some(path) = args.json_out {
        let json = serde_json::to_string_pretty(&report)? + "\n";
        fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn oracle_check(args: OracleArgs) -> Result<()> {
    let seeds: Vec<u64> = (args.seed..args.seed + args.cases).collect();
    let outcomes = exec::map(
        execution(args.sequential),
        &seeds,
        |&seed| -> Result<Vec<String>> {
            let case = random_case(seed, args.words, args.max_len);
            let groups: Vec<&ConstraintGroup> = case.curriculum.groups().iter().collect();
            let mut mismatches = Vec::new();
            for mode in [ScoreMode::Raw, ScoreMode::LengthNormalized] {
                let cfg = BeamConfig {
                    k: args.beam,
                    max_len: args.max_len,
                    score_mode: mode,
                    execution: Execution::Sequential,
                    ..BeamConfig::default()
                };
                let banks = search_banks(&[], &groups, &case.scorer, &cfg)?;
                let oracle =
                    exhaustive_decode(&case.scorer, &[], args.max_len, &groups, &cfg, false)?;
                let overall = banks.best_overall(&cfg).map(|h| h.generated().to_vec());
                let satisfying = banks
                    .best_satisfied
                    .as_ref()
                    .map(|h| h.generated().to_vec());
                if overall.as_ref() != Some(&oracle.best_overall.tokens)
                    || satisfying != oracle.best_satisfying.map(|s| s.tokens)
                {
                    mismatches.push(format!("seed {seed} {mode:?}"));
                }
            }
            Ok(mismatches)
        },
    );
    let mut mismatches = Vec::new();
    for o in outcomes {
        mismatches.extend(o?);
    }
    let total = 2 * args.cases;
    println!(
        "{} of {total} decodes match exhaustive search",
        total - mismatches.len() as u64
    );
    if !mismatches.is_empty() {
        for m in &mismatches {
            println!("mismatch: {m}");
        }
        bail!("{} mismatches", mismatches.len());
    }
    Ok(())
}
