use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{validate_row, LogProbs, Scorer, ScorerError};
use crate::vocab::{TokenId, Vocabulary};

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub(crate) struct Handshake {
    pub vocab_size: usize,
    pub bos_id: TokenId,
    pub eos_id: TokenId,
}

#[derive(Serialize)]
struct Request<'a> {
    prefix: &'a [TokenId],
}

#[derive(Deserialize)]
struct Response {
    logprobs: Vec<Option<f64>>,
}

struct Channel {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Channel {
    fn read_line(&mut self) -> Result<String, ScorerError> {
        let mut line = String::new();
        let n = self
            .stdout
            .read_line(&mut line)
            .map_err(|e| ScorerError::Io(e.to_string()))?;
        if n == 0 {
            let status = match self.child.wait() {
                Ok(s) => s.to_string(),
                Err(e) => format!("unknown status: {e}"),
            };
            return Err(ScorerError::ChildExited(status));
        }
        Ok(line)
    }
}

/// Language model living in a child process that speaks a JSON line
/// protocol on stdin/stdout.
///
/// The child first prints `{"vocab_size": N, "bos_id": B, "eos_id": E}`,
/// then answers every `{"prefix": [...]}` line with
/// `{"logprobs": [...]}`. `null` entries are read as `-inf`. Requests are
/// serialized; use one child per concurrent session.
pub struct SubprocessScorer {
    vocab: Vocabulary,
    channel: Mutex<Channel>,
}

impl std::fmt::Debug for SubprocessScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SubprocessScorer")
            .field("vocab", &self.vocab)
            .finish_non_exhaustive()
    }
}

impl SubprocessScorer {
    pub fn spawn(argv: &[String], vocab: Vocabulary) -> Result<Self, ScorerError> {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| ScorerError::InvalidParameters("empty scorer command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ScorerError::Io(format!("spawning {program}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        let mut channel = Channel {
            child,
            stdin,
            stdout,
        };
        let line = channel.read_line().map_err(|e| match e {
            ScorerError::ChildExited(s) => ScorerError::Handshake(format!("child exited: {s}")),
            other => other,
        })?;
        let hs: Handshake = serde_json::from_str(line.trim()).map_err(|e| {
            ScorerError::Handshake(format!("bad handshake line {:?}: {e}", line.trim()))
        })?;
        let expected = Handshake {
            vocab_size: vocab.len(),
            bos_id: vocab.bos_id(),
            eos_id: vocab.eos_id(),
        };
        if hs != expected {
            let _ = channel.child.kill();
            return Err(ScorerError::Handshake(format!(
                "child reports {hs:?}, engine vocabulary is {expected:?}"
            )));
        }
        Ok(Self {
            vocab,
            channel: Mutex::new(channel),
        })
    }
}

impl Scorer for SubprocessScorer {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_logprobs(&self, prefix: &[TokenId]) -> Result<LogProbs, ScorerError> {
        let mut ch = self
            .channel
            .lock()
            .map_err(|_| ScorerError::Io("scorer channel poisoned".into()))?;
        let mut req = serde_json::to_string(&Request { prefix }).expect("request serializes");
        req.push('\n');
        if let Err(e) = ch
            .stdin
            .write_all(req.as_bytes())
            .and_then(|_| ch.stdin.flush())
        {
            if let Ok(Some(status)) = ch.child.try_wait() {
                return Err(ScorerError::ChildExited(status.to_string()));
            }
            return Err(ScorerError::Io(e.to_string()));
        }
        let line = ch.read_line()?;
        let resp: Response = serde_json::from_str(line.trim())
            .map_err(|e| ScorerError::Malformed(format!("{e} in {:?}", line.trim())))?;
        let row = resp
            .logprobs
            .into_iter()
            .map(|v| v.unwrap_or(f64::NEG_INFINITY))
            .collect();
        Ok(validate_row(&self.vocab, row)?.into())
    }
}

impl Drop for SubprocessScorer {
    fn drop(&mut self) {
        if let Ok(ch) = self.channel.get_mut() {
            let _ = ch.child.kill();
            let _ = ch.child.wait();
        }
    }
}
