//! Durable study state.
//!
//! Every mutation is appended to `journal.jsonl` as one numbered record and
//! fsynced before the caller gets an acknowledgment. Every
//! `snapshot_every` records the full state is written to `snapshot.json`
//! (temp file, fsync, rename). On open the snapshot is loaded and journal
//! records with a higher sequence number are replayed.
//!
//! Readers get an `Arc` of an immutable state; writers serialize on one mutex,
//! build the next state, persist the record and then publish it.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TuringError};
use crate::session::{validate_score, RatingSession, Score};

pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
pub const DEFAULT_SNAPSHOT_EVERY: u64 = 100;

/// A replaced score, kept so overwrites stay auditable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub session_id: String,
    pub item_id: String,
    pub previous: Score,
    pub replacement: Score,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyState {
    pub last_seq: u64,
    pub sessions: BTreeMap<String, RatingSession>,
    pub audit: Vec<AuditEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SessionsCreated {
        sessions: Vec<RatingSession>,
    },
    ScoreSubmitted {
        session_id: String,
        item_id: String,
        score: Score,
    },
    SessionClosed {
        session_id: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Record {
    seq: u64,
    #[serde(flatten)]
    event: Event,
}

/// What a score submission changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScoreAck {
    pub seq: u64,
    pub overwritten: bool,
    pub scored: usize,
    pub total: usize,
}

impl StudyState {
    /// Check that `event` is legal in this state.
    fn check(&self, event: &Event) -> Result<()> {
        match event {
            Event::SessionsCreated { sessions } => {
                for s in sessions {
                    if self.sessions.contains_key(&s.session_id) {
                        return Err(TuringError::DuplicateSession(s.session_id.clone()));
                    }
                }
            }
            Event::ScoreSubmitted {
                session_id,
                item_id,
                score,
            } => {
                validate_score(score.completeness.into(), score.correctness.into())?;
                let session = self.open_session(session_id)?;
                if session.item(item_id).is_none() {
                    return Err(TuringError::UnknownItem(item_id.clone()));
                }
            }
            Event::SessionClosed { session_id } => {
                if !self.sessions.contains_key(session_id) {
                    return Err(TuringError::UnknownSession(session_id.clone()));
                }
            }
        }
        Ok(())
    }

    fn open_session(&self, session_id: &str) -> Result<&RatingSession> {
        let session = self
            .sessions
            .get(session_id)
            .ok_or_else(|| TuringError::UnknownSession(session_id.to_string()))?;
        if session.closed {
            return Err(TuringError::ClosedSession(session_id.to_string()));
        }
        Ok(session)
    }

    /// Apply a checked event; returns whether a score was replaced.
    fn apply(&mut self, seq: u64, event: Event) -> bool {
        self.last_seq = seq;
        match event {
            Event::SessionsCreated { sessions } => {
                for s in sessions {
                    self.sessions.insert(s.session_id.clone(), s);
                }
                false
            }
            Event::ScoreSubmitted {
                session_id,
                item_id,
                score,
            } => {
                let session = self.sessions.get_mut(&session_id).expect("checked");
                match session.scores.insert(item_id.clone(), score) {
                    Some(previous) => {
                        self.audit.push(AuditEntry {
                            seq,
                            session_id,
                            item_id,
                            previous,
                            replacement: score,
                        });
                        true
                    }
                    None => false,
                }
            }
            Event::SessionClosed { session_id } => {
                self.sessions.get_mut(&session_id).expect("checked").closed = true;
                false
            }
        }
    }

    pub fn session(&self, session_id: &str) -> Result<&RatingSession> {
        self.sessions
            .get(session_id)
            .ok_or_else(|| TuringError::UnknownSession(session_id.to_string()))
    }

    pub fn completed_sessions(&self) -> Vec<RatingSession> {
        self.sessions
            .values()
            .filter(|s| s.is_complete())
            .cloned()
            .collect()
    }
}

pub struct Store {
    dir: PathBuf,
    snapshot_every: u64,
    state: RwLock<Arc<StudyState>>,
    journal: Mutex<File>,
}

impl Store {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        Self::open_with(dir, DEFAULT_SNAPSHOT_EVERY)
    }

    pub fn open_with(dir: impl AsRef<Path>, snapshot_every: u64) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(|e| TuringError::io(&dir, e))?;

        let snap_path = dir.join(SNAPSHOT_FILE);
        let mut state = if snap_path.exists() {
            let text = std::fs::read_to_string(&snap_path).map_err(|e| TuringError::io(&snap_path, e))?;
            serde_json::from_str::<StudyState>(&text)?
        } else {
            StudyState::default()
        };

        let journal_path = dir.join(JOURNAL_FILE);
        if journal_path.exists() {
            let file = File::open(&journal_path).map_err(|e| TuringError::io(&journal_path, e))?;
            let lines: Vec<String> = BufReader::new(file)
                .lines()
                .collect::<std::io::Result<_>>()
                .map_err(|e| TuringError::io(&journal_path, e))?;
            let last = lines.len();
            for (k, line) in lines.into_iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let record: Record = match serde_json::from_str(&line) {
                    Ok(r) => r,
                    // A torn final line was never acknowledged.
                    Err(_) if k + 1 == last => {
                        log::warn!("ignoring torn final journal line");
                        break;
                    }
                    Err(e) => {
                        return Err(TuringError::CorruptJournal {
                            line: k + 1,
                            message: e.to_string(),
                        })
                    }
                };
                if record.seq <= state.last_seq {
                    continue;
                }
                state.check(&record.event).map_err(|e| TuringError::CorruptJournal {
                    line: k + 1,
                    message: e.to_string(),
                })?;
                state.apply(record.seq, record.event);
            }
        }

        let journal = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&journal_path)
            .map_err(|e| TuringError::io(&journal_path, e))?;
        Ok(Store {
            dir,
            snapshot_every: snapshot_every.max(1),
            state: RwLock::new(Arc::new(state)),
            journal: Mutex::new(journal),
        })
    }

    /// Current state; cheap, and never blocked for longer than a pointer swap.
    pub fn state(&self) -> Arc<StudyState> {
        self.state.read().expect("state lock").clone()
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn commit(&self, event: Event) -> Result<(u64, bool, Arc<StudyState>)> {
        let mut journal = self.journal.lock().expect("journal lock");
        let current = self.state();
        current.check(&event)?;
        let seq = current.last_seq + 1;

        let mut line = serde_json::to_vec(&Record {
            seq,
            event: event.clone(),
        })?;
        line.push(b'\n');
        let journal_path = self.dir.join(JOURNAL_FILE);
        journal
            .write_all(&line)
            .and_then(|_| journal.sync_data())
            .map_err(|e| TuringError::io(&journal_path, e))?;

        let mut next = (*current).clone();
        let overwritten = next.apply(seq, event);
        let next = Arc::new(next);
        *self.state.write().expect("state lock") = next.clone();

        if seq % self.snapshot_every == 0 {
            if let Err(e) = self.write_snapshot(&next) {
                // The journal alone is sufficient for recovery.
                log::warn!("snapshot failed: {e}");
            }
        }
        Ok((seq, overwritten, next))
    }

    fn write_snapshot(&self, state: &StudyState) -> Result<()> {
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let dest = self.dir.join(SNAPSHOT_FILE);
        let bytes = serde_json::to_vec(state)?;
        let mut f = File::create(&tmp).map_err(|e| TuringError::io(&tmp, e))?;
        f.write_all(&bytes)
            .and_then(|_| f.sync_all())
            .map_err(|e| TuringError::io(&tmp, e))?;
        std::fs::rename(&tmp, &dest).map_err(|e| TuringError::io(&dest, e))?;
        Ok(())
    }

    /// Force a snapshot of the current state.
    pub fn snapshot(&self) -> Result<()> {
        let _guard = self.journal.lock().expect("journal lock");
        self.write_snapshot(&self.state())
    }

    pub fn add_sessions(&self, sessions: Vec<RatingSession>) -> Result<u64> {
        self.commit(Event::SessionsCreated { sessions }).map(|(seq, _, _)| seq)
    }

    /// Record a score. Rescoring an item replaces the earlier score and
    /// appends an audit entry.
    pub fn submit_score(
        &self,
        session_id: &str,
        item_id: &str,
        completeness: i64,
        correctness: i64,
    ) -> Result<ScoreAck> {
        let (completeness, correctness) = validate_score(completeness, correctness)?;
        let timestamp_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        let (seq, overwritten, state) = self.commit(Event::ScoreSubmitted {
            session_id: session_id.to_string(),
            item_id: item_id.to_string(),
            score: Score {
                completeness,
                correctness,
                timestamp_ms,
            },
        })?;
        let session = state.session(session_id)?;
        Ok(ScoreAck {
            seq,
            overwritten,
            scored: session.scored(),
            total: session.items.len(),
        })
    }

    pub fn close_session(&self, session_id: &str) -> Result<u64> {
        self.commit(Event::SessionClosed {
            session_id: session_id.to_string(),
        })
        .map(|(seq, _, _)| seq)
    }
}
