use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use teachnet_core::harness::{parse_log, LogEntry, SessionEvent, StudySession};

use crate::error::{ApiError, ServiceError};

/// One session with its log file. Guarded by a per-session lock so each
/// session's events are applied in order.
#[derive(Debug)]
pub(crate) struct Slot {
    pub session: StudySession,
    path: PathBuf,
}

impl Slot {
    /// Validates `event` against the session, appends it to the log and
    /// then applies it.
    pub fn record(&mut self, event: &SessionEvent) -> Result<(), ApiError> {
        let ts = now_ms();
        let mut next = self.session.clone();
        next.apply(event, ts)?;
        let entry = LogEntry::new(ts, &next.id, event)?;
        append(&self.path, &entry)?;
        self.session = next;
        Ok(())
    }
}

/// Sessions on disk (`<dir>/<session id>.jsonl`) and in memory.
#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    sessions: Mutex<HashMap<String, Arc<tokio::sync::Mutex<Slot>>>>,
}

pub(crate) fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn append(path: &Path, entry: &LogEntry) -> Result<(), ServiceError> {
    let line = serde_json::to_string(entry).map_err(teachnet_core::Error::from)? + "\n";
    let mut f = OpenOptions::new()
        .append(true)
        .create(true)
        .open(path)
        .map_err(|e| ServiceError::io(path, e))?;
    f.write_all(line.as_bytes())
        .and_then(|_| f.sync_data())
        .map_err(|e| ServiceError::io(path, e))
}

impl SessionStore {
    /// Opens `dir` (created if missing) and replays every session log in it.
    pub fn open(dir: &Path) -> Result<Self, ServiceError> {
        fs::create_dir_all(dir).map_err(|e| ServiceError::io(dir, e))?;
        let mut sessions = HashMap::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| ServiceError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let text = fs::read_to_string(&path).map_err(|e| ServiceError::io(&path, e))?;
            let corrupt = |message: String| ServiceError::CorruptLog {
                path: path.clone(),
                message,
            };
            let entries = parse_log(&text).map_err(|e| corrupt(e.to_string()))?;
            let session = StudySession::replay(&entries).map_err(|e| corrupt(e.to_string()))?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            if stem != session.id {
                return Err(corrupt(format!("log holds session `{}`", session.id)));
            }
            let id = session.id.clone();
            let slot = Slot { session, path };
            sessions.insert(id, Arc::new(tokio::sync::Mutex::new(slot)));
        }
        Ok(SessionStore {
            dir: dir.to_path_buf(),
            sessions: Mutex::new(sessions),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("session map lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Ids of all known sessions, sorted.
    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.lock().expect("session map lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Starts a session from its `created` event and logs it.
    pub(crate) fn create(&self, id: &str, event: &SessionEvent) -> Result<(), ApiError> {
        let session = StudySession::create(id, event)?;
        let path = self.dir.join(format!("{id}.jsonl"));
        if path.exists() {
            return Err(ApiError::conflict(format!("session `{id}` already exists")));
        }
        append(&path, &LogEntry::new(now_ms(), id, event)?)?;
        let slot = Slot { session, path };
        self.sessions
            .lock()
            .expect("session map lock")
            .insert(id.to_string(), Arc::new(tokio::sync::Mutex::new(slot)));
        Ok(())
    }

    pub(crate) fn get(&self, id: &str) -> Result<Arc<tokio::sync::Mutex<Slot>>, ApiError> {
        self.sessions
            .lock()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }
}
