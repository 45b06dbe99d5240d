use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde_json::{json, Value};

use super::{BackendError, ChatBackend, CompletionRequest, ContentPart, ResponseHint, Role};

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Base URL such as `http://host:8000/v1`; `/chat/completions` is appended
    /// unless already present.
    pub base_url: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: Option<String>,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "http://127.0.0.1:8000/v1".to_string(),
            token_env: Some("T2V_ALIGN_API_TOKEN".to_string()),
            max_attempts: 4,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
            timeout: Duration::from_secs(300),
            max_in_flight: 4,
        }
    }
}

struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Gate {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Blocking client for OpenAI-compatible `/chat/completions` endpoints.
pub struct HttpBackend {
    agent: ureq::Agent,
    url: String,
    token: Option<String>,
    config: HttpConfig,
    gate: Gate,
}

enum Attempt {
    Done(String),
    Retry(String),
    Fatal(BackendError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        let base = config.base_url.trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        let token = config
            .token_env
            .as_deref()
            .and_then(|name| std::env::var(name).ok())
            .filter(|t| !t.is_empty());
        HttpBackend {
            agent,
            url,
            token,
            gate: Gate::new(config.max_in_flight),
            config,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Like `complete`, also reporting how many attempts were made.
    pub fn complete_counted(&self, request: &CompletionRequest) -> Result<(String, u32), BackendError> {
        request.check()?;
        let body = wire_body(request);
        let _permit = self.gate.acquire();
        let max = self.config.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=max {
            match self.attempt(&body) {
                Attempt::Done(text) => {
                    if attempt > 1 {
                        log::info!("{}: succeeded after {attempt} attempts", request.label);
                    }
                    return Ok((text, attempt));
                }
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(msg) => {
                    log::warn!("{}: attempt {attempt}/{max} failed: {msg}", request.label);
                    last = msg;
                    if attempt < max {
                        std::thread::sleep(self.backoff(attempt));
                    }
                }
            }
        }
        Err(BackendError::Transport {
            attempts: max,
            message: last,
        })
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt - 1).unwrap_or(u32::MAX);
        self.config
            .initial_backoff
            .saturating_mul(factor)
            .min(self.config.max_backoff)
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let mut req = self.agent.post(&self.url);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(format!("reading body: {e}")),
        };
        match status {
            200..=299 => match parse_reply(&text) {
                Ok(s) => Attempt::Done(s),
                Err(e) => Attempt::Fatal(e),
            },
            401 | 403 => Attempt::Fatal(BackendError::Auth(format!("status {status}: {}", truncate(&text)))),
            408 | 429 | 500..=599 => Attempt::Retry(format!("status {status}: {}", truncate(&text))),
            _ => Attempt::Fatal(BackendError::Status {
                status,
                body: truncate(&text).to_string(),
            }),
        }
    }
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(300) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

fn parse_reply(text: &str) -> Result<String, BackendError> {
    let v: Value = serde_json::from_str(text).map_err(|e| BackendError::Schema {
        message: format!("endpoint reply is not JSON: {e}"),
        raw: text.to_string(),
    })?;
    let content = &v["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        // Some servers echo content as a list of parts.
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join("")),
        _ => Err(BackendError::Schema {
            message: "reply has no choices[0].message.content".to_string(),
            raw: text.to_string(),
        }),
    }
}

/// Request body in the chat-completions wire format. Text-only messages use
/// plain string content; messages with images use content-part arrays with
/// data-URI image entries.
pub(crate) fn wire_body(request: &CompletionRequest) -> Value {
    let messages: Vec<Value> = request
        .messages
        .iter()
        .map(|m| {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            let content = if m.image_count() == 0 {
                Value::String(m.text())
            } else {
                Value::Array(
                    m.parts
                        .iter()
                        .map(|p| match p {
                            ContentPart::Text { text } => json!({"type": "text", "text": text}),
                            ContentPart::Image { media_type, data } => json!({
                                "type": "image_url",
                                "image_url": {"url": format!("data:{media_type};base64,{}", STANDARD.encode(data))}
                            }),
                        })
                        .collect(),
                )
            };
            json!({"role": role, "content": content})
        })
        .collect();
    let mut body = json!({
        "model": request.model_name,
        "messages": messages,
        "max_tokens": request.max_tokens,
        "temperature": request.temperature,
    });
    if request.response_hint == ResponseHint::JsonObject {
        body["response_format"] = json!({"type": "json_object"});
    }
    body
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        self.complete_counted(request).map(|(text, _)| text)
    }
}
