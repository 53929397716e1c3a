//! Durable diary state: an append-only JSON-lines event log plus periodic
//! snapshots.
//!
//! Every accepted write is appended and flushed to disk before the
//! in-memory diary changes, so a crash between any two events loses no
//! acknowledged write. Startup loads the latest snapshot and replays the
//! events after it.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use platter_core::nutrition::{BandThresholds, Diary, DiaryEvent, DiarySnapshot, NutritionError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const EVENTS_FILE: &str = "events.jsonl";
const SNAPSHOT_FILE: &str = "snapshot.json";

/// One line of the event log: `{seq, at, request_id?, kind, payload}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEvent", into = "RawEvent")]
pub struct StoredEvent {
    pub seq: u64,
    pub at: DateTime<Utc>,
    /// Client-supplied idempotency key of the request that produced the event.
    pub request_id: Option<String>,
    pub event: DiaryEvent,
}

// `#[serde(flatten)]` would lose the integer keys of dish counts, so the
// event is spliced in through a JSON value instead.
#[derive(Serialize, Deserialize)]
struct RawEvent {
    seq: u64,
    at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    request_id: Option<String>,
    kind: String,
    payload: serde_json::Value,
}

impl TryFrom<RawEvent> for StoredEvent {
    type Error = serde_json::Error;

    fn try_from(raw: RawEvent) -> Result<Self, Self::Error> {
        let event = serde_json::from_value(
            serde_json::json!({ "kind": raw.kind, "payload": raw.payload }),
        )?;
        Ok(Self {
            seq: raw.seq,
            at: raw.at,
            request_id: raw.request_id,
            event,
        })
    }
}

impl From<StoredEvent> for RawEvent {
    fn from(e: StoredEvent) -> Self {
        let mut value = serde_json::to_value(&e.event).expect("events serialize");
        Self {
            seq: e.seq,
            at: e.at,
            request_id: e.request_id,
            kind: e.event.kind().to_owned(),
            payload: value["payload"].take(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    seq: u64,
    diary: DiarySnapshot,
    requests: BTreeMap<String, DiaryEvent>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Domain(#[from] NutritionError),
    #[error("idempotency key {0:?} was already used for a different request")]
    KeyReused(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_owned(),
        source,
    }
}

struct Writer {
    file: File,
    len: u64,
    seq: u64,
    since_snapshot: u64,
    requests: BTreeMap<String, DiaryEvent>,
}

/// Outcome of a write.
#[derive(Debug, Clone, PartialEq)]
pub struct Committed {
    pub event: DiaryEvent,
    /// True when an earlier request with the same key already produced the event.
    pub replayed: bool,
}

pub struct Store {
    dir: PathBuf,
    snapshot_every: u64,
    diary: RwLock<Diary>,
    writer: Mutex<Writer>,
}

impl Store {
    /// Opens or creates the store in `dir`. A torn final line left by a crash
    /// mid-append is discarded; any other malformed line is an error.
    pub fn open(
        dir: &Path,
        bands: BandThresholds,
        snapshot_every: u64,
    ) -> Result<Self, StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let snap_path = dir.join(SNAPSHOT_FILE);
        let (mut diary, mut seq, mut requests) = match fs::read_to_string(&snap_path) {
            Ok(text) => {
                let s: Snapshot = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                    path: snap_path.clone(),
                    line: e.line(),
                    message: e.to_string(),
                })?;
                (Diary::restore(s.diary, bands), s.seq, s.requests)
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                (Diary::new(bands), 0, BTreeMap::new())
            }
            Err(e) => return Err(io_err(&snap_path)(e)),
        };

        let log_path = dir.join(EVENTS_FILE);
        let bytes = match fs::read(&log_path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(&log_path)(e)),
        };
        let mut valid_len = 0usize;
        let mut since_snapshot = 0;
        let mut offset = 0usize;
        for (i, raw) in bytes.split_inclusive(|&b| b == b'\n').enumerate() {
            let line = i + 1;
            let complete = raw.ends_with(b"\n");
            let parsed = std::str::from_utf8(raw)
                .map_err(|e| e.to_string())
                .and_then(|s| serde_json::from_str::<StoredEvent>(s).map_err(|e| e.to_string()));
            let stored = match parsed {
                Ok(ev) if complete => ev,
                // An unterminated last line is a write the crash cut short; it was never acknowledged.
                _ if !complete => {
                    tracing::warn!(line, "discarding torn final record in event log");
                    break;
                }
                Err(message) => {
                    return Err(StoreError::Corrupt {
                        path: log_path,
                        line,
                        message,
                    })
                }
                Ok(_) => unreachable!(),
            };
            offset += raw.len();
            valid_len = offset;
            if stored.seq <= seq {
                if stored.seq == 0 || since_snapshot > 0 {
                    return Err(StoreError::Corrupt {
                        path: log_path,
                        line,
                        message: format!("sequence {} does not increase", stored.seq),
                    });
                }
                // Already folded into the snapshot.
                continue;
            }
            seq = stored.seq;
            since_snapshot += 1;
            if let Some(key) = &stored.request_id {
                requests.insert(key.clone(), stored.event.clone());
            }
            diary.apply(stored.event)?;
        }

        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(io_err(&log_path))?;
        if valid_len < bytes.len() {
            file.set_len(valid_len as u64).map_err(io_err(&log_path))?;
            file.sync_all().map_err(io_err(&log_path))?;
        }
        Ok(Self {
            dir: dir.to_owned(),
            snapshot_every: snapshot_every.max(1),
            diary: RwLock::new(diary),
            writer: Mutex::new(Writer {
                file,
                len: valid_len as u64,
                seq,
                since_snapshot,
                requests,
            }),
        })
    }

    /// Runs `f` against a consistent view of the diary. Writers never hold
    /// this lock while waiting on disk.
    pub fn read<T>(&self, f: impl FnOnce(&Diary) -> T) -> T {
        f(&self.diary.read().unwrap_or_else(|e| e.into_inner()))
    }

    /// Last sequence number written.
    pub fn seq(&self) -> u64 {
        self.lock_writer().seq
    }

    fn lock_writer(&self) -> std::sync::MutexGuard<'_, Writer> {
        self.writer.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Validates, persists and applies one event.
    ///
    /// Writes are serialized, so `prepare` sees every earlier write. With a
    /// `request_id` that was seen before, the original event is returned and
    /// nothing is written, provided it has the same kind and user.
    pub fn commit(
        &self,
        request_id: Option<&str>,
        kind: &str,
        user_id: Option<&str>,
        prepare: impl FnOnce(&Diary) -> Result<DiaryEvent, NutritionError>,
    ) -> Result<Committed, StoreError> {
        let mut w = self.lock_writer();
        if let Some(key) = request_id {
            if let Some(prev) = w.requests.get(key) {
                if prev.kind() != kind || user_id.is_some_and(|u| u != prev.user_id()) {
                    return Err(StoreError::KeyReused(key.to_owned()));
                }
                return Ok(Committed {
                    event: prev.clone(),
                    replayed: true,
                });
            }
        }
        let event = self.read(prepare)?;
        let stored = StoredEvent {
            seq: w.seq + 1,
            at: Utc::now(),
            request_id: request_id.map(str::to_owned),
            event,
        };
        let mut line = serde_json::to_string(&stored).expect("events serialize");
        line.push('\n');
        let path = self.dir.join(EVENTS_FILE);
        let written = w
            .file
            .write_all(line.as_bytes())
            .and_then(|()| w.file.sync_data());
        if let Err(e) = written {
            // Drop any partial record so the log stays parseable.
            let len = w.len;
            let _ = w.file.set_len(len);
            return Err(io_err(&path)(e));
        }
        w.len += line.len() as u64;
        w.seq = stored.seq;
        self.diary
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .apply(stored.event.clone())?;
        if let Some(key) = request_id {
            w.requests.insert(key.to_owned(), stored.event.clone());
        }
        w.since_snapshot += 1;
        if w.since_snapshot >= self.snapshot_every {
            match self.write_snapshot(&w) {
                Ok(()) => w.since_snapshot = 0,
                Err(e) => {
                    tracing::warn!(error = %e, "snapshot failed; the event log remains authoritative")
                }
            }
        }
        Ok(Committed {
            event: stored.event,
            replayed: false,
        })
    }

    fn write_snapshot(&self, w: &Writer) -> Result<(), StoreError> {
        let snap = Snapshot {
            seq: w.seq,
            diary: self.read(Diary::snapshot),
            requests: w.requests.clone(),
        };
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let target = self.dir.join(SNAPSHOT_FILE);
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        serde_json::to_writer(&mut f, &snap)
            .map_err(io::Error::from)
            .and_then(|()| f.sync_all())
            .map_err(io_err(&tmp))?;
        fs::rename(&tmp, &target).map_err(io_err(&target))?;
        if let Ok(d) = File::open(&self.dir) {
            let _ = d.sync_all();
        }
        Ok(())
    }
}
