//! Typed scene graphs: entity anchors with attached attribute nodes and binary
//! relation nodes.
//!
//! Edges are directed away from non-entity nodes: an attribute emits exactly
//! one edge to its owner entity, and a relation emits one edge to each of its
//! two entities. Graphs are built by appending nodes, and the append order is
//! the canonical node order used by every query and by traversal.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::category::Category;
use crate::error::{Error, Result};

/// Lowercase snake-case node identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    /// Normalizes arbitrary text into an id: lowercase, runs of anything
    /// other than ASCII alphanumerics collapse into one underscore.
    pub fn normalize(raw: &str) -> Option<NodeId> {
        let mut out = String::with_capacity(raw.len());
        let mut pending_sep = false;
        for ch in raw.trim().chars() {
            if ch.is_ascii_alphanumeric() {
                if pending_sep && !out.is_empty() {
                    out.push('_');
                }
                pending_sep = false;
                out.push(ch.to_ascii_lowercase());
            } else {
                pending_sep = true;
            }
        }
        if out.is_empty() {
            None
        } else {
            Some(NodeId(out))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    /// Panics on input that normalizes to nothing; intended for literals.
    fn from(s: &str) -> Self {
        NodeId::normalize(s).unwrap_or_else(|| panic!("invalid node id literal {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Entity,
    Attribute,
    Relation,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::Entity => "entity",
            NodeKind::Attribute => "attribute",
            NodeKind::Relation => "relation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub label: String,
    pub fine_label: Category,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
}

impl Edge {
    pub fn new(from: impl Into<NodeId>, to: impl Into<NodeId>) -> Self {
        Edge {
            from: from.into(),
            to: to.into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SceneGraph {
    source_prompt: String,
    nodes: Vec<Node>,
    index: HashMap<NodeId, usize>,
    edges: Vec<Edge>,
}

/// On-disk shape of a graph; field names are part of the file format.
#[derive(Serialize, Deserialize)]
struct GraphDocument {
    source_prompt: String,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl PartialEq for SceneGraph {
    fn eq(&self, other: &Self) -> bool {
        self.source_prompt == other.source_prompt && self.nodes == other.nodes && self.edges == other.edges
    }
}

impl SceneGraph {
    pub fn new(source_prompt: impl Into<String>) -> Self {
        SceneGraph {
            source_prompt: source_prompt.into(),
            ..Default::default()
        }
    }

    pub fn source_prompt(&self) -> &str {
        &self.source_prompt
    }

    /// Appends a node. The id is normalized first; duplicates are rejected.
    pub fn add_node(
        &mut self,
        id: &str,
        kind: NodeKind,
        label: impl Into<String>,
        fine_label: Category,
    ) -> Result<NodeId> {
        let id = NodeId::normalize(id).ok_or_else(|| Error::InvalidArgument(format!("node id {id:?} is empty")))?;
        if self.index.contains_key(&id) {
            return Err(Error::InvalidArgument(format!("duplicate node id '{id}'")));
        }
        self.index.insert(id.clone(), self.nodes.len());
        self.nodes.push(Node {
            id: id.clone(),
            kind,
            label: label.into(),
            fine_label,
        });
        Ok(id)
    }

    /// Appends an edge without checking it; `validate` reports problems.
    pub fn add_edge(&mut self, from: &NodeId, to: &NodeId) {
        self.edges.push(Edge {
            from: from.clone(),
            to: to.clone(),
        });
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    /// Position of a node in insertion order.
    pub fn position(&self, id: &NodeId) -> Option<usize> {
        self.index.get(id).copied()
    }

    fn require(&self, id: &NodeId) -> Result<&Node> {
        self.node(id).ok_or_else(|| Error::NotFound(format!("node '{id}'")))
    }

    pub fn entities(&self) -> Vec<&Node> {
        self.nodes_of_kind(NodeKind::Entity)
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> Vec<&Node> {
        self.nodes.iter().filter(|n| n.kind == kind).collect()
    }

    /// Attribute nodes attached to `entity`, in node order.
    pub fn attributes_of(&self, entity: &NodeId) -> Result<Vec<&Node>> {
        self.require(entity)?;
        Ok(self.sources_into(entity, NodeKind::Attribute))
    }

    /// Relation nodes touching `entity`, in node order.
    pub fn relations_of(&self, entity: &NodeId) -> Result<Vec<&Node>> {
        self.require(entity)?;
        Ok(self.sources_into(entity, NodeKind::Relation))
    }

    fn sources_into(&self, target: &NodeId, kind: NodeKind) -> Vec<&Node> {
        let mut hits: Vec<usize> = self
            .edges
            .iter()
            .filter(|e| &e.to == target)
            .filter_map(|e| self.position(&e.from))
            .filter(|&i| self.nodes[i].kind == kind)
            .collect();
        hits.sort_unstable();
        hits.dedup();
        hits.into_iter().map(|i| &self.nodes[i]).collect()
    }

    /// Entity targets of an attribute or relation node, in edge order.
    pub fn targets_of(&self, id: &NodeId) -> Vec<&Node> {
        self.edges
            .iter()
            .filter(|e| &e.from == id)
            .filter_map(|e| self.node(&e.to))
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(GraphDocument {
            source_prompt: self.source_prompt.clone(),
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
        })
        .expect("graph document is always serializable")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("graph document is always serializable")
    }

    pub fn from_json_str(text: &str) -> Result<SceneGraph> {
        let doc: GraphDocument = serde_json::from_str(text)?;
        Self::from_document(doc)
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<SceneGraph> {
        let doc: GraphDocument = serde_json::from_value(value)?;
        Self::from_document(doc)
    }

    fn from_document(doc: GraphDocument) -> Result<SceneGraph> {
        let mut graph = SceneGraph::new(doc.source_prompt);
        for node in doc.nodes {
            graph.add_node(node.id.as_str(), node.kind, node.label, node.fine_label)?;
        }
        graph.edges = doc.edges;
        Ok(graph)
    }

    pub fn load(path: &Path) -> Result<SceneGraph> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    EmptyLabel,
    FineLabelMismatch,
    SelfLoop,
    DanglingEdge,
    DuplicateEdge,
    AdjacentSameKind,
    IncomingToAttribute,
    AttributeOutDegree,
    AttributeTargetNotEntity,
    IncomingToRelation,
    RelationTargetNotEntity,
    RelationArity,
    Unanchored,
    NoEntity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
    pub nodes: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<Edge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(|v| v.message.clone()).collect()
    }
}

/// Checks every topology constraint and collects all breaches.
pub fn validate(graph: &SceneGraph) -> ValidationReport {
    let mut out = Vec::new();
    let mut push = |code, message: String, nodes: Vec<NodeId>, edge: Option<Edge>| {
        out.push(Violation {
            code,
            message,
            nodes,
            edge,
        })
    };

    for node in &graph.nodes {
        if node.label.trim().is_empty() {
            push(
                ViolationCode::EmptyLabel,
                format!("node '{}' has an empty label", node.id),
                vec![node.id.clone()],
                None,
            );
        }
        let label_ok = match node.kind {
            NodeKind::Entity => node.fine_label == Category::Existence,
            _ => node.fine_label != Category::Existence,
        };
        if !label_ok {
            push(
                ViolationCode::FineLabelMismatch,
                format!(
                    "{} node '{}' carries fine label '{}'",
                    node.kind, node.id, node.fine_label
                ),
                vec![node.id.clone()],
                None,
            );
        }
    }

    let mut seen = BTreeSet::new();
    let mut incoming: HashMap<&NodeId, usize> = HashMap::new();
    let mut outgoing: HashMap<&NodeId, Vec<&NodeId>> = HashMap::new();
    for edge in &graph.edges {
        if edge.from == edge.to {
            push(
                ViolationCode::SelfLoop,
                format!("self-loop on '{}'", edge.from),
                vec![edge.from.clone()],
                Some(edge.clone()),
            );
            continue;
        }
        let (from, to) = match (graph.node(&edge.from), graph.node(&edge.to)) {
            (Some(f), Some(t)) => (f, t),
            _ => {
                push(
                    ViolationCode::DanglingEdge,
                    format!("edge {} -> {} references a missing node", edge.from, edge.to),
                    vec![edge.from.clone(), edge.to.clone()],
                    Some(edge.clone()),
                );
                continue;
            }
        };
        if !seen.insert((&edge.from, &edge.to)) {
            push(
                ViolationCode::DuplicateEdge,
                format!("duplicate edge {} -> {}", edge.from, edge.to),
                vec![edge.from.clone(), edge.to.clone()],
                Some(edge.clone()),
            );
            continue;
        }
        if from.kind == to.kind {
            push(
                ViolationCode::AdjacentSameKind,
                format!(
                    "adjacent nodes share kind: {} -> {} are both {}",
                    edge.from, edge.to, from.kind
                ),
                vec![edge.from.clone(), edge.to.clone()],
                Some(edge.clone()),
            );
        }
        *incoming.entry(&edge.to).or_default() += 1;
        outgoing.entry(&edge.from).or_default().push(&edge.to);
    }

    let mut entity_count = 0;
    for node in &graph.nodes {
        let inc = incoming.get(&node.id).copied().unwrap_or(0);
        let outs = outgoing.get(&node.id).cloned().unwrap_or_default();
        let entity_targets: BTreeSet<&NodeId> = outs
            .iter()
            .copied()
            .filter(|t| graph.node(t).map(|n| n.kind) == Some(NodeKind::Entity))
            .collect();
        match node.kind {
            NodeKind::Entity => entity_count += 1,
            NodeKind::Attribute => {
                if inc > 0 {
                    push(
                        ViolationCode::IncomingToAttribute,
                        format!("attribute '{}' has {inc} incoming edge(s)", node.id),
                        vec![node.id.clone()],
                        None,
                    );
                }
                if outs.len() != 1 {
                    push(
                        ViolationCode::AttributeOutDegree,
                        format!(
                            "attribute '{}' has {} outgoing edges, expected exactly 1",
                            node.id,
                            outs.len()
                        ),
                        vec![node.id.clone()],
                        None,
                    );
                }
                for t in outs.iter().filter(|t| !entity_targets.contains(*t)) {
                    push(
                        ViolationCode::AttributeTargetNotEntity,
                        format!("attribute '{}' points at non-entity '{t}'", node.id),
                        vec![node.id.clone(), (*t).clone()],
                        None,
                    );
                }
            }
            NodeKind::Relation => {
                if inc > 0 {
                    push(
                        ViolationCode::IncomingToRelation,
                        format!("relation '{}' has {inc} incoming edge(s)", node.id),
                        vec![node.id.clone()],
                        None,
                    );
                }
                for t in outs.iter().filter(|t| !entity_targets.contains(*t)) {
                    push(
                        ViolationCode::RelationTargetNotEntity,
                        format!("relation '{}' points at non-entity '{t}'", node.id),
                        vec![node.id.clone(), (*t).clone()],
                        None,
                    );
                }
                if !entity_targets.is_empty() && entity_targets.len() != 2 {
                    push(
                        ViolationCode::RelationArity,
                        format!(
                            "relation '{}' connects {} entities, expected exactly 2",
                            node.id,
                            entity_targets.len()
                        ),
                        vec![node.id.clone()],
                        None,
                    );
                }
            }
        }
        if node.kind != NodeKind::Entity && entity_targets.is_empty() {
            push(
                ViolationCode::Unanchored,
                format!("{} '{}' is not connected to any entity", node.kind, node.id),
                vec![node.id.clone()],
                None,
            );
        }
    }

    if !graph.nodes.is_empty() && entity_count == 0 {
        push(
            ViolationCode::NoEntity,
            "graph has nodes but no entity".to_string(),
            Vec::new(),
            None,
        );
    }

    ValidationReport {
        ok: out.is_empty(),
        violations: out,
    }
}
