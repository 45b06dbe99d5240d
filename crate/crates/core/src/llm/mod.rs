//! Chat-completion abstraction shared by every agent call.
//!
//! Three backends implement [`ChatBackend`]: an OpenAI-compatible HTTP client,
//! a record/replay cassette, and a scripted answer table. [`LoggedBackend`]
//! wraps any of them and keeps the requests it saw.

mod http;
mod json;
mod replay;
mod scripted;

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{HttpBackend, HttpConfig};
pub use json::{complete_json, extract_json, JsonExtractError};
pub use replay::{CassetteEntry, ReplayBackend};
pub use scripted::{ScriptRule, ScriptTable, ScriptedBackend};

pub const DEFAULT_TEMPERATURE: f64 = 0.0;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("authorization failed: {0}")]
    Auth(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("cassette miss for request fingerprint {fingerprint}")]
    CassetteMiss { fingerprint: String },
    #[error("scripted backend has no answer for fingerprint {fingerprint}")]
    ScriptMiss { fingerprint: String },
    #[error("schema error: {message}")]
    Schema { message: String, raw: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cassette io error: {0}")]
    Cassette(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text {
        text: String,
    },
    Image {
        media_type: String,
        #[serde(with = "base64_bytes")]
        data: Vec<u8>,
    },
}

impl ContentPart {
    pub fn text(text: impl Into<String>) -> Self {
        ContentPart::Text { text: text.into() }
    }

    pub fn image(media_type: impl Into<String>, data: Vec<u8>) -> Self {
        ContentPart::Image {
            media_type: media_type.into(),
            data,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            ContentPart::Text { text } => Some(text),
            ContentPart::Image { .. } => None,
        }
    }
}

mod base64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        STANDARD.decode(text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub parts: Vec<ContentPart>,
}

impl ChatMessage {
    pub fn new(role: Role, parts: Vec<ContentPart>) -> Result<Self, BackendError> {
        let msg = ChatMessage { role, parts };
        msg.check()?;
        Ok(msg)
    }

    pub fn system(text: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            parts: vec![ContentPart::text(text)],
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            parts: vec![ContentPart::text(text)],
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            parts: vec![ContentPart::text(text)],
        }
    }

    pub fn check(&self) -> Result<(), BackendError> {
        if self.parts.is_empty() {
            return Err(BackendError::InvalidRequest("message has no content parts".into()));
        }
        let has_image = self.parts.iter().any(|p| matches!(p, ContentPart::Image { .. }));
        if has_image && self.role != Role::User {
            return Err(BackendError::InvalidRequest(
                "image parts are only allowed in user messages".into(),
            ));
        }
        Ok(())
    }

    pub fn text(&self) -> String {
        self.parts
            .iter()
            .filter_map(ContentPart::as_text)
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn image_count(&self) -> usize {
        self.parts
            .iter()
            .filter(|p| matches!(p, ContentPart::Image { .. }))
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseHint {
    #[default]
    FreeText,
    JsonObject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    /// Caller-side tag naming the pipeline step ("extract", "knowledge", ...).
    /// Not part of the fingerprint.
    #[serde(default)]
    pub label: String,
    pub model_name: String,
    pub messages: Vec<ChatMessage>,
    pub max_tokens: u32,
    pub temperature: f64,
    #[serde(default)]
    pub response_hint: ResponseHint,
}

#[derive(Serialize)]
struct FingerprintPart<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    text: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    media_type: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sha256: Option<String>,
}

#[derive(Serialize)]
struct FingerprintMessage<'a> {
    role: Role,
    parts: Vec<FingerprintPart<'a>>,
}

#[derive(Serialize)]
struct FingerprintDoc<'a> {
    model_name: &'a str,
    messages: Vec<FingerprintMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    response_hint: Option<ResponseHint>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl CompletionRequest {
    pub fn new(label: impl Into<String>, model_name: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        CompletionRequest {
            label: label.into(),
            model_name: model_name.into(),
            messages,
            max_tokens: 1024,
            temperature: DEFAULT_TEMPERATURE,
            response_hint: ResponseHint::FreeText,
        }
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_hint(mut self, hint: ResponseHint) -> Self {
        self.response_hint = hint;
        self
    }

    pub fn check(&self) -> Result<(), BackendError> {
        if self.messages.is_empty() {
            return Err(BackendError::InvalidRequest("request has no messages".into()));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be positive".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest(
                "temperature must be a nonnegative number".into(),
            ));
        }
        self.messages.iter().try_for_each(ChatMessage::check)
    }

    fn canonical(&self, with_hint: bool) -> String {
        let doc = FingerprintDoc {
            model_name: &self.model_name,
            messages: self
                .messages
                .iter()
                .map(|m| FingerprintMessage {
                    role: m.role,
                    parts: m
                        .parts
                        .iter()
                        .map(|p| match p {
                            ContentPart::Text { text } => FingerprintPart {
                                kind: "text",
                                text: Some(text),
                                media_type: None,
                                sha256: None,
                            },
                            ContentPart::Image { media_type, data } => FingerprintPart {
                                kind: "image",
                                text: None,
                                media_type: Some(media_type),
                                sha256: Some(sha256_hex(data)),
                            },
                        })
                        .collect(),
                })
                .collect(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            response_hint: with_hint.then_some(self.response_hint),
        };
        serde_json::to_string(&doc).expect("fingerprint document serializes")
    }

    /// SHA-256 over model, messages (images by content digest), temperature
    /// and max_tokens. Stable across processes.
    pub fn fingerprint(&self) -> String {
        sha256_hex(self.canonical(false).as_bytes())
    }

    /// Like [`fingerprint`](Self::fingerprint) but also covers the response hint.
    pub fn request_digest(&self) -> String {
        sha256_hex(self.canonical(true).as_bytes())
    }

    /// All text content joined with newlines, used for scripted matching.
    pub fn text(&self) -> String {
        self.messages
            .iter()
            .map(ChatMessage::text)
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn image_count(&self) -> usize {
        self.messages.iter().map(ChatMessage::image_count).sum()
    }
}

/// Model name and decoding parameters for one kind of agent call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSettings {
    pub model: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl Default for AgentSettings {
    fn default() -> Self {
        AgentSettings {
            model: "default".to_string(),
            max_tokens: 1024,
            temperature: DEFAULT_TEMPERATURE,
        }
    }
}

impl AgentSettings {
    pub fn new(model: impl Into<String>) -> Self {
        AgentSettings {
            model: model.into(),
            ..Default::default()
        }
    }

    pub fn request(&self, label: &str, messages: Vec<ChatMessage>) -> CompletionRequest {
        CompletionRequest::new(label, self.model.clone(), messages)
            .with_max_tokens(self.max_tokens)
            .with_temperature(self.temperature)
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for Arc<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

/// Keeps a copy of every request passed to the wrapped backend.
pub struct LoggedBackend<B> {
    inner: B,
    log: Mutex<Vec<CompletionRequest>>,
}

impl<B: ChatBackend> LoggedBackend<B> {
    pub fn new(inner: B) -> Self {
        LoggedBackend {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.log.lock().unwrap().clone()
    }

    pub fn labels(&self) -> Vec<String> {
        self.log.lock().unwrap().iter().map(|r| r.label.clone()).collect()
    }

    pub fn clear(&self) {
        self.log.lock().unwrap().clear();
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: ChatBackend> ChatBackend for LoggedBackend<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        self.log.lock().unwrap().push(request.clone());
        self.inner.complete(request)
    }
}
