//! Knowledge-augmented staged answering.
//!
//! Each (question, video) item runs up to three sequential calls: a
//! frames-only description, a reflection that combines the description with
//! the question and common-sense knowledge, and a conclusion that must state
//! Yes or No. Ablation modes drop stages or inputs.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::FrameSet;
use crate::llm::{AgentSettings, ChatBackend, ChatMessage, ContentPart, Role};
use crate::qg::AtomicQuestion;
use crate::templates::{PromptTemplates, TemplateName};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    Yes,
    No,
}

impl Verdict {
    pub fn value(self) -> u32 {
        match self {
            Verdict::Yes => 1,
            Verdict::No => 0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Yes => "Yes",
            Verdict::No => "No",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" | "y" => Ok(Verdict::Yes),
            "no" | "n" => Ok(Verdict::No),
            other => Err(format!("not a yes/no value: '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaMode {
    #[default]
    Full,
    /// Knowledge omitted from reflection and conclusion.
    NoKa,
    /// No frames-only description; reflection sees the frames directly.
    NoVu,
    /// No reflection stage.
    NoCr,
    /// Knowledge, question and frames go straight to the conclusion.
    KaOnly,
    /// One call with frames and question.
    Direct,
}

impl QaMode {
    pub const ALL: [QaMode; 6] = [
        QaMode::Full,
        QaMode::NoKa,
        QaMode::NoVu,
        QaMode::NoCr,
        QaMode::KaOnly,
        QaMode::Direct,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QaMode::Full => "full",
            QaMode::NoKa => "no_ka",
            QaMode::NoVu => "no_vu",
            QaMode::NoCr => "no_cr",
            QaMode::KaOnly => "ka_only",
            QaMode::Direct => "direct",
        }
    }

    pub fn uses_knowledge(self) -> bool {
        matches!(self, QaMode::Full | QaMode::NoVu | QaMode::NoCr | QaMode::KaOnly)
    }

    /// Stage labels issued for one item, in order.
    pub fn stage_labels(self) -> &'static [&'static str] {
        match self {
            QaMode::Full | QaMode::NoKa => &["understanding", "reflection", "conclusion"],
            QaMode::NoVu => &["reflection", "conclusion"],
            QaMode::NoCr => &["understanding", "conclusion"],
            QaMode::KaOnly => &["conclusion"],
            QaMode::Direct => &["direct"],
        }
    }
}

impl fmt::Display for QaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QaMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        QaMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown qa mode '{s}' (expected full, no_ka, no_vu, no_cr, ka_only or direct)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeContext {
    pub prompt_id: String,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaStages {
    pub understanding: Option<String>,
    pub reflection: Option<String>,
    pub conclusion: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaTranscript {
    pub question_id: String,
    pub video_id: String,
    pub prompt_id: String,
    /// Name of the generator that produced the video.
    #[serde(default)]
    pub model: String,
    /// Mode actually executed; differs from the requested one after a downgrade.
    pub mode: QaMode,
    /// Absent when the item could not be answered.
    pub verdict: Option<Verdict>,
    pub stages: QaStages,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge: Option<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl QaTranscript {
    pub fn unanswered(question: &AtomicQuestion, video_id: &str, model: &str, mode: QaMode, error: String) -> Self {
        QaTranscript {
            question_id: question.question_id.clone(),
            video_id: video_id.to_string(),
            prompt_id: question.prompt_id.clone(),
            model: model.to_string(),
            mode,
            verdict: None,
            stages: QaStages::default(),
            knowledge: None,
            warnings: Vec::new(),
            error: Some(error),
        }
    }

    pub fn is_answered(&self) -> bool {
        self.verdict.is_some()
    }
}

/// Model settings for the two kinds of answering calls.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QaSettings {
    /// Auxiliary text model that writes the knowledge brief.
    pub knowledge: AgentSettings,
    /// Multimodal model that runs the answering stages.
    pub video: AgentSettings,
}

pub fn augment_knowledge(
    prompt_id: &str,
    prompt: &str,
    backend: &dyn ChatBackend,
    templates: &PromptTemplates,
    settings: &AgentSettings,
) -> Result<KnowledgeContext> {
    if prompt.trim().is_empty() {
        return Err(Error::InvalidArgument("prompt is empty".into()));
    }
    let text = templates.render(TemplateName::Knowledge, &[("prompt", prompt)]);
    let request = settings.request("knowledge", vec![ChatMessage::user(text)]);
    let reply = backend
        .complete(&request)
        .map_err(|e| Error::Knowledge(e.to_string()))?;
    let reply = reply.trim();
    if reply.is_empty() {
        return Err(Error::Knowledge("empty knowledge brief".into()));
    }
    Ok(KnowledgeContext {
        prompt_id: prompt_id.to_string(),
        text: reply.to_string(),
    })
}

type CachedKnowledge = std::result::Result<KnowledgeContext, String>;

/// Computes each prompt's knowledge brief at most once, even when many
/// workers ask for it at the same time.
#[derive(Default)]
pub struct KnowledgeCache {
    cells: Mutex<HashMap<String, Arc<OnceLock<CachedKnowledge>>>>,
}

impl KnowledgeCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_augment(
        &self,
        prompt_id: &str,
        prompt: &str,
        backend: &dyn ChatBackend,
        templates: &PromptTemplates,
        settings: &AgentSettings,
    ) -> Result<KnowledgeContext> {
        let cell = self
            .cells
            .lock()
            .unwrap()
            .entry(prompt_id.to_string())
            .or_default()
            .clone();
        cell.get_or_init(|| {
            augment_knowledge(prompt_id, prompt, backend, templates, settings).map_err(|e| e.to_string())
        })
        .clone()
        .map_err(Error::Knowledge)
    }

    pub fn len(&self) -> usize {
        self.cells.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Finds the verdict in a conclusion reply.
///
/// Scans for standalone `yes`/`no` tokens, case-insensitively. When an
/// `answer:` marker is present the first token after it wins, which keeps
/// "No doubt the cup is glass. Answer: yes" from reading as No.
pub fn parse_verdict(text: &str) -> std::result::Result<Verdict, String> {
    let lower = text.to_lowercase();
    if let Some(pos) = lower.rfind("answer:") {
        if let Some(v) = first_token(&lower[pos + "answer:".len()..]) {
            return Ok(v);
        }
    }
    first_token(&lower).ok_or_else(|| format!("no yes/no verdict in reply: {}", text.trim()))
}

fn first_token(text: &str) -> Option<Verdict> {
    text.split(|c: char| !c.is_alphanumeric() && c != '\'')
        .find_map(|tok| match tok {
            "yes" => Some(Verdict::Yes),
            "no" => Some(Verdict::No),
            _ => None,
        })
}

const VERDICT_REPAIR: &str =
    "Your reply did not contain a clear verdict. Reply with exactly \"Answer: Yes\" or \"Answer: No\".";

fn context_block(sections: &[(&str, Option<&str>)]) -> String {
    sections
        .iter()
        .filter_map(|(title, body)| body.map(|b| format!("{title}:\n{}", b.trim())))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn user_with_frames(frames: Option<&FrameSet>, text: String) -> ChatMessage {
    let mut parts: Vec<ContentPart> = frames.map(FrameSet::content_parts).unwrap_or_default();
    parts.push(ContentPart::text(text));
    ChatMessage {
        role: Role::User,
        parts,
    }
}

/// Runs the staged protocol for one question against one video.
///
/// `knowledge` must be present for modes that use it; in full mode a
/// missing brief downgrades the item to `no_ka` with a warning.
#[allow(clippy::too_many_arguments)]
pub fn answer(
    question: &AtomicQuestion,
    video_id: &str,
    frames: &FrameSet,
    knowledge: Option<&KnowledgeContext>,
    backend: &dyn ChatBackend,
    templates: &PromptTemplates,
    settings: &AgentSettings,
    mode: QaMode,
) -> Result<QaTranscript> {
    if frames.is_empty() {
        return Err(Error::EmptyVideo(frames.source.clone()));
    }
    let mut warnings = Vec::new();
    let mode = match (mode, knowledge) {
        (QaMode::Full, None) => {
            warnings.push("knowledge unavailable; ran without knowledge (no_ka)".to_string());
            QaMode::NoKa
        }
        (m, None) if m.uses_knowledge() => {
            return Err(Error::Knowledge(format!("mode {m} requires a knowledge brief")));
        }
        (m, _) => m,
    };
    let k_text = if mode.uses_knowledge() {
        knowledge.map(|k| k.text.as_str())
    } else {
        None
    };
    let q = question.text.as_str();
    let call = |label: &str, message: ChatMessage| -> Result<String> {
        let request = settings.request(label, vec![message]);
        Ok(backend.complete(&request)?)
    };

    let mut stages = QaStages::default();

    if matches!(mode, QaMode::Full | QaMode::NoKa | QaMode::NoCr) {
        let text = templates.render(TemplateName::Understanding, &[]);
        stages.understanding = Some(call("understanding", user_with_frames(Some(frames), text))?);
    }

    if matches!(mode, QaMode::Full | QaMode::NoKa | QaMode::NoVu) {
        let see_frames = mode == QaMode::NoVu;
        let context = context_block(&[
            ("Video description", stages.understanding.as_deref()),
            (
                "Video frames",
                see_frames.then_some("The sampled frames of the video are attached."),
            ),
            ("Common-sense knowledge", k_text),
        ]);
        let text = templates.render(TemplateName::Reflection, &[("context", &context), ("question", q)]);
        let frames_here = see_frames.then_some(frames);
        stages.reflection = Some(call("reflection", user_with_frames(frames_here, text))?);
    }

    let (label, first_message) = if mode == QaMode::Direct {
        let text = templates.render(TemplateName::Direct, &[("question", q)]);
        ("direct", user_with_frames(Some(frames), text))
    } else {
        // The conclusion sees the frames only when no earlier stage did.
        let see_frames = mode == QaMode::KaOnly;
        let context = context_block(&[
            ("Video description", stages.understanding.as_deref()),
            (
                "Video frames",
                see_frames.then_some("The sampled frames of the video are attached."),
            ),
            ("Common-sense knowledge", k_text),
            ("Reflection", stages.reflection.as_deref()),
        ]);
        let text = templates.render(TemplateName::Conclusion, &[("context", &context), ("question", q)]);
        ("conclusion", user_with_frames(see_frames.then_some(frames), text))
    };

    let mut request = settings.request(label, vec![first_message]);
    let mut reply = backend.complete(&request)?;
    let verdict = match parse_verdict(&reply) {
        Ok(v) => v,
        Err(problem) => {
            log::warn!("{}: {problem}; issuing one repair prompt", question.question_id);
            request.label = format!("{label}:repair");
            request.messages.push(ChatMessage::assistant(reply.clone()));
            request.messages.push(ChatMessage::user(VERDICT_REPAIR));
            reply = backend.complete(&request)?;
            parse_verdict(&reply).map_err(Error::Answer)?
        }
    };
    stages.conclusion = Some(reply);

    Ok(QaTranscript {
        question_id: question.question_id.clone(),
        video_id: video_id.to_string(),
        prompt_id: question.prompt_id.clone(),
        model: String::new(),
        mode,
        verdict: Some(verdict),
        stages,
        knowledge: k_text.map(str::to_string),
        warnings,
        error: None,
    })
}
