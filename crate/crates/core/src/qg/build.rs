use serde_json::Value;

use super::{AgentSettings, ElementSet};
use crate::category::Category;
use crate::error::{Error, Result};
use crate::llm::{complete_json, ChatBackend, ChatMessage, ResponseHint};
use crate::scene_graph::{NodeKind, SceneGraph};
use crate::templates::{PromptTemplates, TemplateName};

/// Deterministic graph assembly: entities, then attributes with an edge to
/// their owner, then relations with edges to subject and object.
pub fn build_graph(elements: &ElementSet) -> Result<SceneGraph> {
    let problems = elements.problems();
    if !problems.is_empty() {
        return Err(Error::GraphConstruction(problems));
    }
    let mut graph = SceneGraph::new(elements.source_prompt.clone());
    let construction = |e: Error| Error::GraphConstruction(vec![e.to_string()]);
    for e in &elements.entities {
        graph
            .add_node(e.id.as_str(), NodeKind::Entity, e.label.clone(), Category::Existence)
            .map_err(construction)?;
    }
    for a in &elements.attributes {
        let id = graph
            .add_node(a.id.as_str(), NodeKind::Attribute, a.label.clone(), a.fine_label)
            .map_err(construction)?;
        graph.add_edge(&id, &a.owner);
    }
    for r in &elements.relations {
        let id = graph
            .add_node(r.id.as_str(), NodeKind::Relation, r.label.clone(), r.fine_label)
            .map_err(construction)?;
        graph.add_edge(&id, &r.subject);
        graph.add_edge(&id, &r.object);
    }
    let report = graph.validate();
    if !report.ok {
        return Err(Error::GraphConstruction(report.messages()));
    }
    Ok(graph)
}

/// Graph Builder as an agent call. Kept for fidelity experiments; the reply
/// must validate, with one repair round listing the violations.
pub fn build_graph_agent(
    elements: &ElementSet,
    backend: &dyn ChatBackend,
    templates: &PromptTemplates,
    settings: &AgentSettings,
) -> Result<SceneGraph> {
    let text = templates.render(
        TemplateName::BuildGraph,
        &[
            ("prompt", elements.source_prompt.as_str()),
            ("elements", elements.to_agent_json().as_str()),
        ],
    );
    let request = settings
        .request("build_graph", vec![ChatMessage::user(text)])
        .with_hint(ResponseHint::JsonObject);
    complete_json(backend, &request, |v| graph_from_agent(&elements.source_prompt, v))
        .map_err(|e| Error::GraphConstruction(vec![e.to_string()]))
}

fn graph_from_agent(prompt: &str, value: &Value) -> std::result::Result<SceneGraph, String> {
    let mut doc = value.clone();
    let obj = doc
        .as_object_mut()
        .ok_or_else(|| "expected an object with nodes and edges".to_string())?;
    obj.insert("source_prompt".into(), Value::String(prompt.to_string()));
    if let Some(Value::Array(nodes)) = obj.get_mut("nodes") {
        for n in nodes {
            if let Some(label) = n.get("fine_label").and_then(Value::as_str) {
                let c = Category::from_label_lenient(label);
                n["fine_label"] = Value::String(c.as_str().into());
            }
        }
    }
    let graph = SceneGraph::from_json_value(doc).map_err(|e| e.to_string())?;
    let report = graph.validate();
    if report.ok {
        Ok(graph)
    } else {
        Err(format!("graph violates constraints: {}", report.messages().join("; ")))
    }
}
