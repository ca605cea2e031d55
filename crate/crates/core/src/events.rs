//! The append-only choice-event log and its JSONL encoding.
//!
//! One JSON object per line:
//! `{"seq":..,"timestamp":..,"session_id":..,"card_id":..,"item_id":..,"kind":..,"payload":{..}}`.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::ids::{CardId, ItemId, SessionId, StudentId};
use crate::lifecycle::SwipeDirection;
use crate::student::StudentState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Load,
    Preload,
    Promote,
    Drag,
    Cancel,
    Swipe,
    Tap,
    Answer,
    SessionStart,
    SessionEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    /// Closed by the client.
    Closed,
    /// The simulated student quit.
    Quit,
    /// The simulated step budget ran out.
    StepsExhausted,
    /// No cards left to show.
    PoolExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    SessionStart {
        student_id: StudentId,
        /// Student state at session start, after the session counter reset.
        student: StudentState,
        /// True swipe policy, present only in simulated logs.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        policy: Option<String>,
    },
    SessionEnd {
        reason: EndReason,
    },
    /// Card creation; carries the features frozen on the card.
    Load {
        features: FeatureVector,
    },
    Preload {},
    Promote {},
    Drag {
        dx: f64,
        vx: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        token: Option<String>,
    },
    Cancel {
        dx: f64,
        vx: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        token: Option<String>,
    },
    Swipe {
        dx: f64,
        vx: f64,
        direction: SwipeDirection,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        token: Option<String>,
    },
    Tap {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        token: Option<String>,
    },
    Answer {
        correct: bool,
        elapsed_s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        token: Option<String>,
    },
}

impl EventBody {
    pub fn kind(&self) -> EventKind {
        match self {
            EventBody::SessionStart { .. } => EventKind::SessionStart,
            EventBody::SessionEnd { .. } => EventKind::SessionEnd,
            EventBody::Load { .. } => EventKind::Load,
            EventBody::Preload {} => EventKind::Preload,
            EventBody::Promote {} => EventKind::Promote,
            EventBody::Drag { .. } => EventKind::Drag,
            EventBody::Cancel { .. } => EventKind::Cancel,
            EventBody::Swipe { .. } => EventKind::Swipe,
            EventBody::Tap { .. } => EventKind::Tap,
            EventBody::Answer { .. } => EventKind::Answer,
        }
    }

    /// Client idempotency token, for the request kinds that carry one.
    pub fn token(&self) -> Option<&str> {
        match self {
            EventBody::Drag { token, .. }
            | EventBody::Cancel { token, .. }
            | EventBody::Swipe { token, .. }
            | EventBody::Tap { token }
            | EventBody::Answer { token, .. } => token.as_deref(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceEvent {
    pub seq: u64,
    /// UTC milliseconds, or synthetic ticks in simulated logs.
    pub timestamp: i64,
    pub session_id: SessionId,
    pub card_id: Option<CardId>,
    pub item_id: Option<ItemId>,
    #[serde(flatten)]
    pub body: EventBody,
}

impl ChoiceEvent {
    pub fn kind(&self) -> EventKind {
        self.body.kind()
    }

    pub fn to_json_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("events always serialize");
        line.push('\n');
        line
    }
}

pub fn write_jsonl<W: Write>(mut w: W, events: &[ChoiceEvent]) -> Result<()> {
    for e in events {
        w.write_all(e.to_json_line().as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_jsonl(text: &str) -> Result<Vec<ChoiceEvent>> {
    read_jsonl(text.as_bytes())
}

/// Reads every event; blank lines are skipped.
pub fn read_jsonl<R: std::io::Read>(r: R) -> Result<Vec<ChoiceEvent>> {
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| Error::Log(format!("line {}: {e}", lineno + 1)))?;
        out.push(event);
    }
    Ok(out)
}

pub fn read_jsonl_file(path: impl AsRef<Path>) -> Result<Vec<ChoiceEvent>> {
    read_jsonl(File::open(path)?)
}

pub fn write_jsonl_file(path: impl AsRef<Path>, events: &[ChoiceEvent]) -> Result<()> {
    write_jsonl(BufWriter::new(File::create(path)?), events)
}

/// Appending writer over a JSONL file. Each record is a single `write_all`
/// followed by a flush, so a line is either fully present or absent.
#[derive(Debug)]
pub struct EventLog {
    file: File,
    appended: u64,
}

impl EventLog {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file, appended: 0 })
    }

    pub fn append(&mut self, event: &ChoiceEvent) -> Result<()> {
        self.file.write_all(event.to_json_line().as_bytes())?;
        self.file.flush()?;
        self.appended += 1;
        Ok(())
    }

    /// Appends a batch with a single write, so a request's events land
    /// together.
    pub fn append_all(&mut self, events: &[ChoiceEvent]) -> Result<()> {
        if events.is_empty() {
            return Ok(());
        }
        let batch: String = events.iter().map(ChoiceEvent::to_json_line).collect();
        self.file.write_all(batch.as_bytes())?;
        self.file.flush()?;
        self.appended += events.len() as u64;
        Ok(())
    }

    /// Records appended through this handle.
    pub fn appended(&self) -> u64 {
        self.appended
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn drag(seq: u64, dx: f64, vx: f64) -> ChoiceEvent {
        ChoiceEvent {
            seq,
            timestamp: 1_700_000_000_000,
            session_id: SessionId::from("s-1"),
            card_id: Some(CardId::from("c1")),
            item_id: Some(ItemId::from("i1")),
            body: EventBody::Drag { dx, vx, token: None },
        }
    }

    #[test]
    fn line_layout() {
        let line = drag(3, 0.25, -1.0).to_json_line();
        assert_eq!(
            line,
            "{\"seq\":3,\"timestamp\":1700000000000,\"session_id\":\"s-1\",\"card_id\":\"c1\",\"item_id\":\"i1\",\"kind\":\"drag\",\"payload\":{\"dx\":0.25,\"vx\":-1.0}}\n"
        );
        let empty = ChoiceEvent {
            body: EventBody::Promote {},
            ..drag(4, 0.0, 0.0)
        };
        assert!(empty.to_json_line().ends_with("\"kind\":\"promote\",\"payload\":{}}\n"));
    }

    #[test]
    fn bad_line_reports_position() {
        let text = format!("{}\n{{not json\n", drag(1, 0.1, 0.0).to_json_line().trim_end());
        let err = parse_jsonl(&text).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn append_log_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let mut log = EventLog::open(&path).unwrap();
        log.append(&drag(1, 0.1, 0.0)).unwrap();
        log.append(&drag(2, 0.2, 0.5)).unwrap();
        drop(log);
        let mut log = EventLog::open(&path).unwrap();
        log.append_all(&[drag(3, 0.3, 1.0), drag(4, 0.0, 0.0)]).unwrap();
        assert_eq!(log.appended(), 2);
        let events = read_jsonl_file(&path).unwrap();
        assert_eq!(events.iter().map(|e| e.seq).collect::<Vec<_>>(), [1, 2, 3, 4]);
    }

    proptest! {
        #[test]
        fn floats_survive_json(dx in any::<f64>().prop_filter("finite", |v| v.is_finite()), vx in -1e6f64..1e6) {
            let e = drag(9, dx, vx);
            let back = parse_jsonl(&e.to_json_line()).unwrap();
            prop_assert_eq!(&back[0], &e);
        }
    }
}
