use serde_json::Value;

use super::{BackendError, ChatBackend, ChatMessage, CompletionRequest};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JsonExtractError {
    pub message: String,
    pub raw: String,
}

impl std::fmt::Display for JsonExtractError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for JsonExtractError {}

impl From<JsonExtractError> for BackendError {
    fn from(e: JsonExtractError) -> Self {
        BackendError::Schema {
            message: e.message,
            raw: e.raw,
        }
    }
}

/// Pulls the first complete JSON object or array out of a model reply,
/// tolerating code fences and surrounding prose.
pub fn extract_json(text: &str) -> Result<Value, JsonExtractError> {
    // Fenced blocks first: a ```json fence is the strongest signal.
    let mut rest = text;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
        let body = &after[body_start..];
        let Some(end) = body.find("```") else { break };
        if let Some(v) = first_value(&body[..end]) {
            return Ok(v);
        }
        rest = &body[end + 3..];
    }
    first_value(text).ok_or_else(|| JsonExtractError {
        message: "no parseable JSON object or array found".to_string(),
        raw: text.to_string(),
    })
}

fn first_value(text: &str) -> Option<Value> {
    for (i, ch) in text.char_indices() {
        if ch != '{' && ch != '[' {
            continue;
        }
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(v)) = stream.next() {
            return Some(v);
        }
    }
    None
}

/// Runs a request whose reply must parse as JSON and pass `accept`.
///
/// On failure the bad reply and the error are appended to the conversation
/// and the request is retried exactly once.
pub fn complete_json<B, T, F>(backend: &B, request: &CompletionRequest, mut accept: F) -> Result<T, BackendError>
where
    B: ChatBackend + ?Sized,
    F: FnMut(&Value) -> Result<T, String>,
{
    let first = backend.complete(request)?;
    let problem = match extract_json(&first) {
        Ok(v) => match accept(&v) {
            Ok(t) => return Ok(t),
            Err(msg) => msg,
        },
        Err(e) => e.message,
    };
    log::warn!(
        "{}: schema problem ({problem}); issuing one repair prompt",
        request.label
    );

    let mut repair = request.clone();
    repair.label = format!("{}:repair", request.label);
    repair.messages.push(ChatMessage::assistant(first));
    repair.messages.push(ChatMessage::user(format!(
        "Your previous reply could not be used: {problem}. Reply again with only the corrected JSON."
    )));
    let second = backend.complete(&repair)?;
    let value = extract_json(&second)?;
    accept(&value).map_err(|message| BackendError::Schema { message, raw: second })
}
