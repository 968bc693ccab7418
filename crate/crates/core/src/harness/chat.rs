//! Line-oriented interactive chat.

use std::io::{BufRead, Write};

use super::HarnessError;
use crate::session::SessionState;

fn io(e: std::io::Error) -> HarnessError {
    HarnessError::io("chat i/o", e)
}

/// Runs a chat REPL: prints each system turn as `BOT: ...`, then reads one
/// user line. `/reset` starts over with the full curriculum, `/quit` (or
/// end of input) stops. With `show_constraints`, the remaining groups are
/// printed as `REMAINING: ...` after every system turn.
pub fn run_chat<R: BufRead, W: Write>(
    mut session: SessionState,
    show_constraints: bool,
    input: R,
    mut output: W,
) -> Result<SessionState, HarnessError> {
    let mut lines = input.lines();
    'dialog: loop {
        let (turn, _) = session.system_turn()?;
        writeln!(output, "BOT: {}", turn.text).map_err(io)?;
        if show_constraints {
            let remaining = session.constraint_state().remaining();
            let shown = if remaining.is_empty() {
                "(none)".to_string()
            } else {
                remaining.join(", ")
            };
            writeln!(output, "REMAINING: {shown}").map_err(io)?;
        }
        output.flush().map_err(io)?;
        loop {
            let line = match lines.next() {
                None => break 'dialog,
                Some(l) => l.map_err(io)?,
            };
            match line.trim() {
                "/quit" => break 'dialog,
                "/reset" => {
                    session = session.reset();
                    writeln!(output, "RESET").map_err(io)?;
                    continue 'dialog;
                }
                text => match session.user_turn(text) {
                    Ok(_) => continue 'dialog,
                    Err(e) => {
                        writeln!(output, "ERR: {e}").map_err(io)?;
                        output.flush().map_err(io)?;
                    }
                },
            }
        }
    }
    output.flush().map_err(io)?;
    Ok(session)
}
