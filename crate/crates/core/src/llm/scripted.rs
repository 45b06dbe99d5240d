use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, CompletionRequest};
use crate::error::{Error, Result};

/// Answers keyed by request fingerprint, plus ordered substring rules for
/// tests that would rather not spell out fingerprints.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptTable {
    #[serde(default)]
    pub by_fingerprint: BTreeMap<String, String>,
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
}

/// A rule fires when the request label matches (if given) and every
/// `contains` snippet appears in the request text. Successive hits walk
/// through `responses`; the last one repeats.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default)]
    pub contains: Vec<String>,
    pub responses: Vec<String>,
}

impl ScriptRule {
    pub fn any(responses: Vec<String>) -> Self {
        ScriptRule {
            label: None,
            contains: Vec::new(),
            responses,
        }
    }

    pub fn labeled(label: &str, contains: &[&str], response: impl Into<String>) -> Self {
        ScriptRule {
            label: Some(label.to_string()),
            contains: contains.iter().map(|s| s.to_string()).collect(),
            responses: vec![response.into()],
        }
    }

    fn matches(&self, request: &CompletionRequest, text: &str) -> bool {
        let label_ok = match &self.label {
            None => true,
            // "stage" also matches "stage:repair".
            Some(l) => request.label == *l || request.label.starts_with(&format!("{l}:")),
        };
        label_ok && self.contains.iter().all(|c| text.contains(c.as_str()))
    }
}

impl ScriptTable {
    pub fn load(path: &Path) -> Result<ScriptTable> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn with_answer(mut self, request: &CompletionRequest, answer: impl Into<String>) -> Self {
        self.by_fingerprint.insert(request.fingerprint(), answer.into());
        self
    }
}

pub struct ScriptedBackend {
    table: ScriptTable,
    hits: Vec<AtomicUsize>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(table: ScriptTable) -> Self {
        let hits = table.rules.iter().map(|_| AtomicUsize::new(0)).collect();
        ScriptedBackend {
            table,
            hits,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::new(ScriptTable::load(path)?))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        request.check()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let fingerprint = request.fingerprint();
        if let Some(answer) = self.table.by_fingerprint.get(&fingerprint) {
            return Ok(answer.clone());
        }
        let text = request.text();
        for (rule, hits) in self.table.rules.iter().zip(&self.hits) {
            if rule.responses.is_empty() || !rule.matches(request, &text) {
                continue;
            }
            let n = hits.fetch_add(1, Ordering::SeqCst);
            return Ok(rule.responses[n.min(rule.responses.len() - 1)].clone());
        }
        Err(BackendError::ScriptMiss { fingerprint })
    }
}
