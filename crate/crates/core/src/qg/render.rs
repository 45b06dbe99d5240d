use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{AgentSettings, QuestionSeed};
use crate::category::Category;
use crate::error::{Error, Result};
use crate::llm::{extract_json, ChatBackend, ChatMessage, ResponseHint};
use crate::scene_graph::{NodeId, NodeKind, SceneGraph};
use crate::templates::{PromptTemplates, TemplateName};

/// One yes/no question about a single scene element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicQuestion {
    pub question_id: String,
    pub prompt_id: String,
    pub text: String,
    pub category: Category,
    /// Absent for questions produced by the single-call baseline.
    pub source_node_id: Option<NodeId>,
    #[serde(default)]
    pub source_prompt: String,
}

pub fn question_id(prompt_id: &str, index: usize) -> String {
    format!("{prompt_id}_q{:02}", index + 1)
}

const AUXILIARIES: &[&str] = &[
    "is", "are", "am", "was", "were", "does", "do", "did", "can", "could", "has", "have", "had", "will", "would",
    "should", "shall", "may", "might", "must",
];

/// Lexical yes/no check: starts with an auxiliary verb, ends with '?'.
pub fn is_yes_no_question(text: &str) -> bool {
    let t = text.trim();
    if !t.ends_with('?') || t.len() < 3 {
        return false;
    }
    let first = t
        .split(|c: char| !c.is_ascii_alphabetic())
        .next()
        .unwrap_or("")
        .to_ascii_lowercase();
    AUXILIARIES.contains(&first.as_str())
}

const MASS_NOUNS: &[&str] = &[
    "water", "milk", "sand", "smoke", "fire", "snow", "rain", "grass", "juice", "coffee", "tea", "wine", "oil", "fog",
    "mist", "lava", "ice", "steam", "dust", "mud", "honey", "paint", "air", "wind", "sunlight", "light", "traffic",
    "food", "hair", "foam", "soup", "blood", "ink",
];

const PREPOSITIONS: &[&str] = &[
    "in",
    "inside",
    "on",
    "under",
    "above",
    "below",
    "behind",
    "beside",
    "near",
    "next",
    "at",
    "over",
    "within",
    "between",
    "left",
    "right",
    "to",
    "into",
    "onto",
    "across",
    "along",
    "around",
    "through",
    "from",
    "beneath",
    "atop",
    "underneath",
    "against",
    "in_front",
];

fn is_mass(label: &str) -> bool {
    let head = label.trim().to_ascii_lowercase();
    let last = head.rsplit(' ').next().unwrap_or("");
    MASS_NOUNS.contains(&last)
}

fn indefinite(label: &str) -> String {
    let l = label.trim();
    if is_mass(l) {
        return l.to_string();
    }
    let lower = l.to_ascii_lowercase();
    let an = ["hour", "honest", "heir"].iter().any(|p| lower.starts_with(p))
        || (lower.starts_with(['a', 'e', 'i', 'o', 'u'])
            && !["uni", "use", "usu", "eu", "one"].iter().any(|p| lower.starts_with(p)));
    format!("{} {l}", if an { "an" } else { "a" })
}

fn definite(label: &str) -> String {
    let l = label.trim();
    if is_mass(l) {
        l.to_string()
    } else {
        format!("the {l}")
    }
}

fn plural(label: &str) -> String {
    let l = label.trim();
    let lower = l.to_ascii_lowercase();
    if lower.ends_with('s') || is_mass(l) {
        l.to_string()
    } else if lower.ends_with("ch") || lower.ends_with("sh") || lower.ends_with('x') {
        format!("{l}es")
    } else if lower.ends_with('y')
        && !lower.ends_with("ay")
        && !lower.ends_with("ey")
        && !lower.ends_with("oy")
        && !lower.ends_with("uy")
    {
        format!("{}ies", &l[..l.len() - 1])
    } else {
        format!("{l}s")
    }
}

/// "Is" for participles and prepositional phrases, "Does" for bare verbs.
fn auxiliary_for(label: &str) -> &'static str {
    let first = label.split_whitespace().next().unwrap_or("").to_ascii_lowercase();
    if first.ends_with("ing") || first.ends_with("ed") || PREPOSITIONS.contains(&first.as_str()) {
        "Is"
    } else {
        "Does"
    }
}

/// Rough test for adjective-like material words ("transparent", "wooden",
/// "metallic") that read better as a predicate than after "made of".
fn is_adjective_like(label: &str) -> bool {
    const SUFFIXES: &[&str] = &[
        "ent", "ant", "ous", "ic", "ive", "able", "ible", "en", "ful", "less", "y",
    ];
    let l = label.trim().to_ascii_lowercase();
    !l.contains(' ') && !l.ends_with("ay") && SUFFIXES.iter().any(|s| l.len() > s.len() + 2 && l.ends_with(s))
}

fn capitalize(s: String) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => s,
    }
}

/// Template surface form for one seed. Deterministic.
pub fn template_question(seed: &QuestionSeed, fine_label: Category) -> String {
    let label = seed.label.trim();
    let text = match seed.kind {
        NodeKind::Entity => format!("Is there {} in the video?", indefinite(label)),
        NodeKind::Attribute => {
            let owner = seed.anchors.first().map(String::as_str).unwrap_or("subject");
            match fine_label {
                Category::Material if is_adjective_like(label) => format!("Is {} {label}?", definite(owner)),
                Category::Material => format!("Is {} made of {label}?", definite(owner)),
                Category::Number => format!("Are there {label} {} in the video?", plural(owner)),
                Category::Camera => format!("{} the camera {label}?", auxiliary_for(label)),
                Category::Action => {
                    format!("{} {} {label}?", auxiliary_for(label), definite(owner))
                }
                _ => format!("Is {} {label}?", definite(owner)),
            }
        }
        NodeKind::Relation => {
            let subject = seed.anchors.first().map(String::as_str).unwrap_or("subject");
            let object = seed.anchors.get(1).map(String::as_str).unwrap_or("object");
            format!(
                "{} {} {label} {}?",
                auxiliary_for(label),
                definite(subject),
                definite(object)
            )
        }
    };
    capitalize(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    #[default]
    Template,
    Agent,
}

/// Turns traversal seeds into questions, numbered in seed order.
///
/// In agent mode one batched call phrases every seed; seeds the agent misses
/// or phrases as something other than a yes/no question (after one repair)
/// fall back to the template form.
pub fn render_questions(
    prompt_id: &str,
    seeds: &[QuestionSeed],
    graph: &SceneGraph,
    mode: RenderMode,
    agent: Option<(&dyn ChatBackend, &PromptTemplates, &AgentSettings)>,
) -> Result<Vec<AtomicQuestion>> {
    let mut phrased: HashMap<NodeId, String> = HashMap::new();
    if mode == RenderMode::Agent {
        let (backend, templates, settings) =
            agent.ok_or_else(|| Error::InvalidArgument("agent rendering needs a backend".into()))?;
        phrased = agent_phrasings(seeds, graph.source_prompt(), backend, templates, settings);
    }
    seeds
        .iter()
        .enumerate()
        .map(|(i, seed)| {
            let node = graph
                .node(&seed.node_id)
                .ok_or_else(|| Error::Contract(format!("seed '{}' is not in the graph", seed.node_id)))?;
            let text = phrased
                .remove(&seed.node_id)
                .unwrap_or_else(|| template_question(seed, node.fine_label));
            Ok(AtomicQuestion {
                question_id: question_id(prompt_id, i),
                prompt_id: prompt_id.to_string(),
                text,
                category: node.fine_label,
                source_node_id: Some(seed.node_id.clone()),
                source_prompt: graph.source_prompt().to_string(),
            })
        })
        .collect()
}

fn parse_phrasings(value: &Value, seeds: &[QuestionSeed]) -> (HashMap<NodeId, String>, Vec<String>) {
    let mut got = HashMap::new();
    let mut problems = Vec::new();
    let items = value
        .get("questions")
        .and_then(Value::as_array)
        .cloned()
        .unwrap_or_default();
    for item in items {
        let id = item.get("node_id").and_then(Value::as_str).and_then(NodeId::normalize);
        let text = item.get("question").and_then(Value::as_str).map(str::trim);
        match (id, text) {
            (Some(id), Some(text)) if seeds.iter().any(|s| s.node_id == id) => {
                if is_yes_no_question(text) {
                    got.insert(id, text.to_string());
                } else {
                    problems.push(format!("'{text}' is not a yes/no question"));
                }
            }
            _ => problems.push(format!("unusable item {item}")),
        }
    }
    for s in seeds {
        if !got.contains_key(&s.node_id) {
            problems.push(format!("no question for node '{}'", s.node_id));
        }
    }
    (got, problems)
}

fn agent_phrasings(
    seeds: &[QuestionSeed],
    prompt: &str,
    backend: &dyn ChatBackend,
    templates: &PromptTemplates,
    settings: &AgentSettings,
) -> HashMap<NodeId, String> {
    let seeds_json = serde_json::to_string(
        &seeds
            .iter()
            .map(|s| json!({"node_id": s.node_id, "kind": s.kind, "label": s.label, "anchors": s.anchors}))
            .collect::<Vec<_>>(),
    )
    .expect("seeds serialize");
    let text = templates.render(TemplateName::Traverse, &[("prompt", prompt), ("seeds", &seeds_json)]);
    let request = settings
        .request("traverse", vec![ChatMessage::user(text)])
        .with_hint(ResponseHint::JsonObject);

    let first = match backend.complete(&request) {
        Ok(t) => t,
        Err(e) => {
            log::warn!("traverse agent failed ({e}); using template questions");
            return HashMap::new();
        }
    };
    let (mut got, problems) = match extract_json(&first) {
        Ok(v) => parse_phrasings(&v, seeds),
        Err(e) => (HashMap::new(), vec![e.message]),
    };
    if problems.is_empty() {
        return got;
    }
    let mut repair = request.clone();
    repair.label = "traverse:repair".into();
    repair.messages.push(ChatMessage::assistant(first));
    repair.messages.push(ChatMessage::user(format!(
        "Your previous reply could not be used: {}. Reply again with only the corrected JSON.",
        problems.join("; ")
    )));
    match backend.complete(&repair).ok().and_then(|t| extract_json(&t).ok()) {
        Some(v) => {
            let (second, _) = parse_phrasings(&v, seeds);
            got.extend(second);
        }
        None => log::warn!("traverse repair failed; falling back to templates for missing seeds"),
    }
    got
}

/// Baseline: one in-context call producing questions straight from the
/// prompt, with no graph behind them.
pub fn vanilla_questions(
    prompt_id: &str,
    prompt: &str,
    backend: &dyn ChatBackend,
    templates: &PromptTemplates,
    settings: &AgentSettings,
) -> Result<Vec<AtomicQuestion>> {
    if prompt.trim().is_empty() {
        return Err(Error::InvalidArgument("prompt is empty".into()));
    }
    let text = templates.render(TemplateName::VanillaQg, &[("prompt", prompt)]);
    let request = settings
        .request("vanilla_qg", vec![ChatMessage::user(text)])
        .with_hint(ResponseHint::JsonObject);
    let parsed: BTreeMap<usize, (String, Category)> = crate::llm::complete_json(backend, &request, |v| {
        let items = v
            .get("questions")
            .and_then(Value::as_array)
            .ok_or_else(|| "expected {\"questions\": [...]}".to_string())?;
        let good: BTreeMap<usize, (String, Category)> = items
            .iter()
            .filter_map(|item| {
                let q = item.get("question")?.as_str()?.trim().to_string();
                let c = item
                    .get("category")
                    .and_then(Value::as_str)
                    .map(Category::from_label_lenient)
                    .unwrap_or(Category::Other);
                is_yes_no_question(&q).then_some((q, c))
            })
            .enumerate()
            .collect();
        if good.is_empty() {
            Err("no valid yes/no questions".to_string())
        } else {
            Ok(good)
        }
    })
    .map_err(|e| Error::Extraction(e.to_string()))?;
    Ok(parsed
        .into_values()
        .enumerate()
        .map(|(i, (text, category))| AtomicQuestion {
            question_id: question_id(prompt_id, i),
            prompt_id: prompt_id.to_string(),
            text,
            category,
            source_node_id: None,
            source_prompt: prompt.to_string(),
        })
        .collect())
}
