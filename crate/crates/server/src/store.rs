//! Durability: every committed request appends its events to the JSONL log;
//! startup folds the log (optionally on top of a snapshot) back into state.

use std::fs;
use std::path::{Path, PathBuf};

use cardstack_core::events::{read_jsonl_file, EventLog};
use cardstack_core::replay::Replayer;
use cardstack_core::session::EngineState;
use cardstack_core::student::ItemPool;
use cardstack_core::{ChoiceEvent, Config, Error, Result};
use serde::{Deserialize, Serialize};

/// Engine state after the first `events` lines of the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub events: u64,
    pub state: EngineState,
}

impl Snapshot {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Log(format!("snapshot {}: {e}", path.display())))
    }

    /// Writes to a sibling temp file and renames over the target.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let text = serde_json::to_string(self).expect("state always serializes");
        fs::write(&tmp, text)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct Store {
    log: Option<EventLog>,
    snapshot_path: Option<PathBuf>,
    snapshot_every: u64,
    total: u64,
    since_snapshot: u64,
}

impl Store {
    /// Keeps nothing on disk.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Recovers state from the configured log and snapshot, then opens the
    /// log for appending. Returns the recovered state and the full log.
    pub fn open(config: &Config, pool: &ItemPool) -> Result<(Self, EngineState, Vec<ChoiceEvent>)> {
        let svc = &config.service;
        let events = if svc.event_log_path.exists() {
            read_jsonl_file(&svc.event_log_path)?
        } else {
            Vec::new()
        };
        let snapshot = match &svc.snapshot_path {
            Some(p) if p.exists() => Some(Snapshot::load(p)?),
            _ => None,
        };
        let (base, skip) = match snapshot {
            Some(s) if s.events as usize <= events.len() => (s.state, s.events as usize),
            Some(s) => {
                return Err(Error::Log(format!(
                    "snapshot covers {} events but the log holds {}",
                    s.events,
                    events.len()
                )))
            }
            None => (EngineState::default(), 0),
        };
        let mut replayer = Replayer::from_state(base, pool, config);
        replayer.apply_all(&events[skip..])?;
        let state = replayer.finish()?;
        let store = Self {
            log: Some(EventLog::open(&svc.event_log_path)?),
            snapshot_path: svc.snapshot_path.clone(),
            snapshot_every: svc.snapshot_every,
            total: events.len() as u64,
            since_snapshot: (events.len() - skip) as u64,
        };
        Ok((store, state, events))
    }

    pub fn append(&mut self, events: &[ChoiceEvent]) -> Result<()> {
        if let Some(log) = &mut self.log {
            log.append_all(events)?;
        }
        self.total += events.len() as u64;
        self.since_snapshot += events.len() as u64;
        Ok(())
    }

    /// True once enough events accumulated since the last snapshot.
    pub fn snapshot_due(&self) -> bool {
        self.snapshot_path.is_some() && self.snapshot_every > 0 && self.since_snapshot >= self.snapshot_every
    }

    pub fn snapshot(&mut self, state: &EngineState) -> Result<()> {
        if let Some(path) = &self.snapshot_path {
            Snapshot {
                events: self.total,
                state: state.clone(),
            }
            .save(path)?;
            self.since_snapshot = 0;
        }
        Ok(())
    }
}
