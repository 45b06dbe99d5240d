use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::AgentSettings;
use crate::category::Category;
use crate::error::{Error, Result};
use crate::llm::{complete_json, ChatBackend, ChatMessage, ResponseHint};
use crate::scene_graph::NodeId;
use crate::templates::{PromptTemplates, TemplateName};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityElement {
    pub id: NodeId,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeElement {
    pub id: NodeId,
    pub label: String,
    pub fine_label: Category,
    pub owner: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationElement {
    pub id: NodeId,
    pub label: String,
    pub fine_label: Category,
    pub subject: NodeId,
    pub object: NodeId,
}

/// A prompt decomposed into entities, attributes and binary relations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementSet {
    pub source_prompt: String,
    pub entities: Vec<EntityElement>,
    #[serde(default)]
    pub attributes: Vec<AttributeElement>,
    #[serde(default)]
    pub relations: Vec<RelationElement>,
}

impl ElementSet {
    /// Lists every consistency problem: duplicate ids, empty labels,
    /// dangling or degenerate references, misplaced existence labels.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut ids = HashSet::new();
        let entity_ids: HashSet<&NodeId> = self.entities.iter().map(|e| &e.id).collect();
        let all_ids = self
            .entities
            .iter()
            .map(|e| (&e.id, &e.label))
            .chain(self.attributes.iter().map(|a| (&a.id, &a.label)))
            .chain(self.relations.iter().map(|r| (&r.id, &r.label)));
        for (id, label) in all_ids {
            if !ids.insert(id) {
                out.push(format!("duplicate element id '{id}'"));
            }
            if label.trim().is_empty() {
                out.push(format!("element '{id}' has an empty label"));
            }
        }
        for a in &self.attributes {
            if !entity_ids.contains(&a.owner) {
                out.push(format!("attribute '{}' references unknown entity '{}'", a.id, a.owner));
            }
            if a.fine_label == Category::Existence {
                out.push(format!("attribute '{}' cannot be labeled existence", a.id));
            }
        }
        for r in &self.relations {
            for end in [&r.subject, &r.object] {
                if !entity_ids.contains(end) {
                    out.push(format!("relation '{}' references unknown entity '{end}'", r.id));
                }
            }
            if r.subject == r.object {
                out.push(format!("relation '{}' links '{}' to itself", r.id, r.subject));
            }
            if r.fine_label == Category::Existence {
                out.push(format!("relation '{}' cannot be labeled existence", r.id));
            }
        }
        if self.entities.is_empty() {
            out.push("no entities".to_string());
        }
        out
    }

    /// Parses an extractor reply. Ids are normalized (falling back to the
    /// label when an id is missing) and off-taxonomy labels become `other`.
    pub fn from_agent_value(source_prompt: &str, value: &Value) -> std::result::Result<ElementSet, String> {
        let obj = value
            .as_object()
            .ok_or_else(|| "expected a JSON object with entities/attributes/relations".to_string())?;
        let list = |key: &str| -> std::result::Result<Vec<Value>, String> {
            match obj.get(key) {
                None | Some(Value::Null) => Ok(Vec::new()),
                Some(Value::Array(a)) => Ok(a.clone()),
                Some(_) => Err(format!("'{key}' must be an array")),
            }
        };
        let text = |item: &Value, key: &str| -> Option<String> {
            item.get(key).and_then(Value::as_str).map(|s| s.trim().to_string())
        };
        let id_of = |item: &Value, what: &str| -> std::result::Result<NodeId, String> {
            text(item, "id")
                .and_then(|s| NodeId::normalize(&s))
                .or_else(|| text(item, "label").and_then(|s| NodeId::normalize(&s)))
                .ok_or_else(|| format!("{what} without a usable id: {item}"))
        };
        let reference = |item: &Value, key: &str, what: &str| -> std::result::Result<NodeId, String> {
            text(item, key)
                .and_then(|s| NodeId::normalize(&s))
                .ok_or_else(|| format!("{what} is missing '{key}': {item}"))
        };
        let fine = |item: &Value| -> Category {
            match text(item, "fine_label").or_else(|| text(item, "category")) {
                Some(l) => match Category::from_label_lenient(&l) {
                    Category::Existence => Category::Other,
                    c => c,
                },
                None => Category::Other,
            }
        };
        let label_of = |item: &Value, id: &NodeId| -> String {
            text(item, "label").unwrap_or_else(|| id.as_str().replace('_', " "))
        };

        let mut set = ElementSet {
            source_prompt: source_prompt.to_string(),
            entities: Vec::new(),
            attributes: Vec::new(),
            relations: Vec::new(),
        };
        for item in list("entities")? {
            let id = id_of(&item, "entity")?;
            set.entities.push(EntityElement {
                label: label_of(&item, &id),
                id,
            });
        }
        for item in list("attributes")? {
            let id = id_of(&item, "attribute")?;
            set.attributes.push(AttributeElement {
                label: label_of(&item, &id),
                fine_label: fine(&item),
                owner: reference(&item, "owner", "attribute")?,
                id,
            });
        }
        for item in list("relations")? {
            let id = id_of(&item, "relation")?;
            set.relations.push(RelationElement {
                label: label_of(&item, &id),
                fine_label: fine(&item),
                subject: reference(&item, "subject", "relation")?,
                object: reference(&item, "object", "relation")?,
                id,
            });
        }
        let problems = set.problems();
        if problems.is_empty() {
            Ok(set)
        } else {
            Err(problems.join("; "))
        }
    }

    pub fn to_agent_json(&self) -> String {
        let v = serde_json::json!({
            "entities": self.entities,
            "attributes": self.attributes,
            "relations": self.relations,
        });
        serde_json::to_string(&v).expect("element set serializes")
    }
}

/// Element Extractor: one structured call, one repair on schema failure.
pub fn extract_elements(
    prompt: &str,
    backend: &dyn ChatBackend,
    templates: &PromptTemplates,
    settings: &AgentSettings,
) -> Result<ElementSet> {
    if prompt.trim().is_empty() {
        return Err(Error::InvalidArgument("prompt is empty".into()));
    }
    let text = templates.render(TemplateName::Extract, &[("prompt", prompt)]);
    let request = settings
        .request("extract", vec![ChatMessage::user(text)])
        .with_hint(ResponseHint::JsonObject);
    complete_json(backend, &request, |v| ElementSet::from_agent_value(prompt, v))
        .map_err(|e| Error::Extraction(e.to_string()))
}
