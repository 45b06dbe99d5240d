use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, CompletionRequest};

/// One cassette line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub request_digest: String,
    pub response_text: String,
    pub timestamp: String,
}

/// Replays recorded exchanges from a JSONL cassette.
///
/// Built with [`ReplayBackend::replay`] it never leaves the process and a
/// miss is an error. Built with [`ReplayBackend::record`] a miss is forwarded
/// to the live backend and the exchange is appended to the cassette.
pub struct ReplayBackend {
    path: PathBuf,
    entries: RwLock<HashMap<String, String>>,
    live: Option<Arc<dyn ChatBackend>>,
    write_lock: Mutex<()>,
}

fn read_cassette(path: &Path) -> Result<HashMap<String, String>, BackendError> {
    let text = std::fs::read_to_string(path).map_err(|e| BackendError::Cassette(format!("{}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: CassetteEntry = serde_json::from_str(line)
            .map_err(|e| BackendError::Cassette(format!("{}:{}: {e}", path.display(), i + 1)))?;
        // First recording wins.
        map.entry(entry.fingerprint).or_insert(entry.response_text);
    }
    Ok(map)
}

impl ReplayBackend {
    pub fn replay(path: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let path = path.into();
        let entries = read_cassette(&path)?;
        Ok(ReplayBackend {
            path,
            entries: RwLock::new(entries),
            live: None,
            write_lock: Mutex::new(()),
        })
    }

    pub fn record(path: impl Into<PathBuf>, live: Arc<dyn ChatBackend>) -> Result<Self, BackendError> {
        let path = path.into();
        let entries = if path.exists() {
            read_cassette(&path)?
        } else {
            HashMap::new()
        };
        Ok(ReplayBackend {
            path,
            entries: RwLock::new(entries),
            live: Some(live),
            write_lock: Mutex::new(()),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn append(&self, request: &CompletionRequest, fingerprint: String, response: &str) -> Result<(), BackendError> {
        let _guard = self.write_lock.lock().unwrap();
        if self.entries.read().unwrap().contains_key(&fingerprint) {
            return Ok(());
        }
        let entry = CassetteEntry {
            fingerprint: fingerprint.clone(),
            request_digest: request.request_digest(),
            response_text: response.to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        };
        let mut line = serde_json::to_string(&entry).expect("cassette entry serializes");
        line.push('\n');
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| BackendError::Cassette(format!("{}: {e}", self.path.display())))?;
        file.write_all(line.as_bytes())
            .map_err(|e| BackendError::Cassette(format!("{}: {e}", self.path.display())))?;
        self.entries.write().unwrap().insert(fingerprint, response.to_string());
        Ok(())
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        request.check()?;
        let fingerprint = request.fingerprint();
        if let Some(hit) = self.entries.read().unwrap().get(&fingerprint) {
            return Ok(hit.clone());
        }
        let Some(live) = &self.live else {
            return Err(BackendError::CassetteMiss { fingerprint });
        };
        let response = live.complete(request)?;
        self.append(request, fingerprint.clone(), &response)?;
        // Return what the cassette holds so concurrent recorders agree.
        Ok(self.entries.read().unwrap()[&fingerprint].clone())
    }
}
