//! Question generation: element extraction, graph assembly, ordered
//! traversal and question rendering.

mod build;
mod elements;
mod render;
mod traverse;

use serde::{Deserialize, Serialize};

pub use crate::llm::AgentSettings;
pub use build::{build_graph, build_graph_agent};
pub use elements::{extract_elements, AttributeElement, ElementSet, EntityElement, RelationElement};
pub use render::{
    is_yes_no_question, question_id, render_questions, template_question, vanilla_questions, AtomicQuestion, RenderMode,
};
pub use traverse::{check_order, traverse, QuestionSeed};

use crate::error::Result;
use crate::llm::ChatBackend;
use crate::scene_graph::SceneGraph;
use crate::templates::PromptTemplates;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QgMode {
    #[default]
    MultiAgent,
    /// Single in-context call, no scene graph.
    Vanilla,
}

impl std::str::FromStr for QgMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "multi_agent" => Ok(QgMode::MultiAgent),
            "vanilla" => Ok(QgMode::Vanilla),
            other => Err(format!("unknown qg mode '{other}' (expected multi_agent or vanilla)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphBuilderMode {
    #[default]
    Deterministic,
    Agent,
}

#[derive(Debug, Clone, Default)]
pub struct QgOptions {
    pub mode: QgMode,
    pub builder: GraphBuilderMode,
    pub renderer: RenderMode,
    pub settings: AgentSettings,
}

#[derive(Debug, Clone)]
pub struct QgOutput {
    pub elements: Option<ElementSet>,
    pub graph: Option<SceneGraph>,
    pub questions: Vec<AtomicQuestion>,
}

/// Runs the whole generation flow for one prompt, strictly in sequence.
pub fn generate_questions(
    prompt_id: &str,
    prompt: &str,
    options: &QgOptions,
    backend: &dyn ChatBackend,
    templates: &PromptTemplates,
) -> Result<QgOutput> {
    if options.mode == QgMode::Vanilla {
        let questions = vanilla_questions(prompt_id, prompt, backend, templates, &options.settings)?;
        return Ok(QgOutput {
            elements: None,
            graph: None,
            questions,
        });
    }
    let elements = extract_elements(prompt, backend, templates, &options.settings)?;
    let graph = match options.builder {
        GraphBuilderMode::Deterministic => build_graph(&elements)?,
        GraphBuilderMode::Agent => build_graph_agent(&elements, backend, templates, &options.settings)?,
    };
    let seeds = traverse(&graph)?;
    let questions = render_questions(
        prompt_id,
        &seeds,
        &graph,
        options.renderer,
        Some((backend, templates, &options.settings)),
    )?;
    Ok(QgOutput {
        elements: Some(elements),
        graph: Some(graph),
        questions,
    })
}
