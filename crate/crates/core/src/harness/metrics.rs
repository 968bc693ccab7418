//! Constraint-usage frequencies over a set of dialogs.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint_state::{longest_match, Side};
use crate::curriculum::Curriculum;
use crate::session::SessionTranscript;

/// Group column aggregating every group.
pub const ANY: &str = "ANY";

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no completed transcripts to count")]
    Empty,
    #[error("session {session_id} was recorded with groups {found:?}, expected {expected:?}")]
    CurriculumMismatch {
        session_id: String,
        found: Vec<String>,
        expected: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UsageRow {
    pub side: Side,
    pub group: String,
    pub fraction: f64,
    pub sessions: usize,
}

/// Fraction of sessions in which each side used each group (and any group).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UsageReport {
    pub sessions: usize,
    /// Sessions excluded because they ended in an error.
    pub errors: usize,
    pub rows: Vec<UsageRow>,
}

impl UsageReport {
    pub fn fraction(&self, side: Side, group: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.side == side && r.group == group)
            .map(|r| r.fraction)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["side", "group", "fraction", "sessions"])?;
        for r in &self.rows {
            let side = match r.side {
                Side::System => "SYSTEM",
                Side::User => "USER",
            };
            w.write_record([
                side,
                &r.group,
                &r.fraction.to_string(),
                &r.sessions.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Counts, per side, the sessions in which any turn of that side contains a
/// phrase of each group. Satisfaction state is ignored: a group mentioned
/// after it left the forcing list still counts. Transcripts carrying an
/// error are excluded and counted in [`UsageReport::errors`].
pub fn compute_usage(
    transcripts: &[SessionTranscript],
    curriculum: &Curriculum,
) -> Result<UsageReport, MetricsError> {
    let expected = curriculum.group_names();
    let mut sessions = 0;
    let mut errors = 0;
    let groups = curriculum.groups();
    // [side][group], with the last column for ANY
    let mut used = [
        vec![0usize; groups.len() + 1],
        vec![0usize; groups.len() + 1],
    ];
    for t in transcripts {
        if t.config.groups != expected {
            return Err(MetricsError::CurriculumMismatch {
                session_id: t.session_id.clone(),
                found: t.config.groups.clone(),
                expected,
            });
        }
        if t.error.is_some() {
            errors += 1;
            continue;
        }
        sessions += 1;
        for (si, side) in [Side::System, Side::User].into_iter().enumerate() {
            let mut any = false;
            for (gi, g) in groups.iter().enumerate() {
                let hit = t
                    .turns
                    .iter()
                    .filter(|turn| turn.side == side)
                    .any(|turn| longest_match(g, &turn.tokens).is_some());
                if hit {
                    used[si][gi] += 1;
                    any = true;
                }
            }
            if any {
                used[si][groups.len()] += 1;
            }
        }
    }
    if sessions == 0 {
        return Err(MetricsError::Empty);
    }
    let mut rows = Vec::new();
    for (si, side) in [Side::System, Side::User].into_iter().enumerate() {
        let names = groups.iter().map(|g| g.name()).chain(std::iter::once(ANY));
        for (gi, name) in names.enumerate() {
            rows.push(UsageRow {
                side,
                group: name.to_string(),
                fraction: used[si][gi] as f64 / sessions as f64,
                sessions,
            });
        }
    }
    Ok(UsageReport {
        sessions,
        errors,
        rows,
    })
}
