use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene_graph::{NodeId, NodeKind, SceneGraph};

/// One node scheduled for questioning, with the labels needed to phrase it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSeed {
    pub node_id: NodeId,
    pub kind: NodeKind,
    pub label: String,
    /// Owner label for attributes, `[subject, object]` for relations.
    pub anchors: Vec<String>,
}

/// Orders graph nodes for questioning.
///
/// Entities come first in node order, then attributes grouped by owner in
/// entity order. A relation becomes ready once both endpoints and all of
/// their attributes have been emitted; ready relations are emitted by the
/// position at which they became ready, then by node order.
pub fn traverse(graph: &SceneGraph) -> Result<Vec<QuestionSeed>> {
    let report = graph.validate();
    if !report.ok {
        return Err(Error::Contract(format!(
            "traverse needs a valid graph: {}",
            report.messages().join("; ")
        )));
    }

    let mut order: Vec<&NodeId> = Vec::with_capacity(graph.len());
    let entities = graph.entities();
    order.extend(entities.iter().map(|e| &e.id));
    let mut last_attr_of: HashMap<&NodeId, usize> = HashMap::new();
    for e in &entities {
        for a in graph.attributes_of(&e.id)? {
            order.push(&a.id);
            last_attr_of.insert(&e.id, order.len() - 1);
        }
    }
    let emitted_at: HashMap<&NodeId, usize> = order.iter().enumerate().map(|(i, id)| (*id, i)).collect();

    let mut ready: Vec<(usize, usize, &NodeId)> = graph
        .nodes_of_kind(NodeKind::Relation)
        .into_iter()
        .map(|r| {
            let ready_at = graph
                .targets_of(&r.id)
                .iter()
                .map(|end| {
                    let own = emitted_at[&end.id];
                    last_attr_of.get(&end.id).copied().unwrap_or(own).max(own)
                })
                .max()
                .expect("valid relation has endpoints");
            (ready_at, graph.position(&r.id).unwrap(), &r.id)
        })
        .collect();
    ready.sort();
    for (_, _, id) in ready {
        order.push(id);
    }

    Ok(order.into_iter().map(|id| seed_for(graph, id)).collect())
}

fn seed_for(graph: &SceneGraph, id: &NodeId) -> QuestionSeed {
    let node = graph.node(id).expect("traversed node exists");
    let anchors = match node.kind {
        NodeKind::Entity => Vec::new(),
        _ => graph.targets_of(id).iter().map(|n| n.label.clone()).collect(),
    };
    QuestionSeed {
        node_id: node.id.clone(),
        kind: node.kind,
        label: node.label.clone(),
        anchors,
    }
}

/// Independent check of the ordering rules, by brute force over positions.
pub fn check_order(graph: &SceneGraph, order: &[NodeId]) -> std::result::Result<(), String> {
    if order.len() != graph.len() {
        return Err(format!("{} nodes emitted, graph has {}", order.len(), graph.len()));
    }
    let mut pos = HashMap::new();
    for (i, id) in order.iter().enumerate() {
        if graph.node(id).is_none() {
            return Err(format!("unknown node '{id}' emitted"));
        }
        if pos.insert(id, i).is_some() {
            return Err(format!("node '{id}' emitted twice"));
        }
    }
    let entity_count = graph.entities().len();
    for (i, id) in order.iter().enumerate() {
        let node = graph.node(id).unwrap();
        if (node.kind == NodeKind::Entity) != (i < entity_count) {
            return Err(format!("entities do not form a prefix (at '{id}')"));
        }
        match node.kind {
            NodeKind::Entity => {}
            NodeKind::Attribute => {
                for owner in graph.targets_of(id) {
                    if pos[&owner.id] >= i {
                        return Err(format!("attribute '{id}' before its owner '{}'", owner.id));
                    }
                }
            }
            NodeKind::Relation => {
                for end in graph.targets_of(id) {
                    if pos[&end.id] >= i {
                        return Err(format!("relation '{id}' before endpoint '{}'", end.id));
                    }
                    for attr in graph.attributes_of(&end.id).unwrap() {
                        if pos[&attr.id] >= i {
                            return Err(format!(
                                "relation '{id}' before attribute '{}' of '{}'",
                                attr.id, end.id
                            ));
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::category::Category;

    fn running_example() -> SceneGraph {
        let mut g = SceneGraph::new("Water is slowly pouring out of a glass cup in the space station");
        for id in ["water", "cup", "space_station"] {
            g.add_node(id, NodeKind::Entity, id.replace('_', " "), Category::Existence)
                .unwrap();
        }
        let glass = g
            .add_node("glass", NodeKind::Attribute, "glass", Category::Material)
            .unwrap();
        let transparent = g
            .add_node("transparent", NodeKind::Attribute, "transparent", Category::Material)
            .unwrap();
        let pouring = g
            .add_node("pouring_out_of", NodeKind::Relation, "pouring from", Category::Physics)
            .unwrap();
        let contained = g
            .add_node("contained_within", NodeKind::Relation, "inside", Category::Spatial)
            .unwrap();
        g.add_edge(&glass, &"cup".into());
        g.add_edge(&transparent, &"water".into());
        g.add_edge(&pouring, &"water".into());
        g.add_edge(&pouring, &"cup".into());
        g.add_edge(&contained, &"cup".into());
        g.add_edge(&contained, &"space_station".into());
        g
    }

    fn ids(seeds: &[QuestionSeed]) -> Vec<&str> {
        seeds.iter().map(|s| s.node_id.as_str()).collect()
    }

    #[test]
    fn running_example_order() {
        // Hand simulation: entities in order; transparent (owner water) then
        // glass (owner cup); both relations become ready at position 4 and
        // keep node order.
        let g = running_example();
        let seeds = traverse(&g).unwrap();
        assert_eq!(
            ids(&seeds),
            [
                "water",
                "cup",
                "space_station",
                "transparent",
                "glass",
                "pouring_out_of",
                "contained_within"
            ]
        );
        assert_eq!(seeds[5].anchors, ["water", "cup"]);
        let order: Vec<NodeId> = seeds.iter().map(|s| s.node_id.clone()).collect();
        check_order(&g, &order).unwrap();
    }

    #[test]
    fn isolated_entity() {
        let mut g = SceneGraph::new("a cat");
        g.add_node("cat", NodeKind::Entity, "cat", Category::Existence).unwrap();
        assert_eq!(ids(&traverse(&g).unwrap()), ["cat"]);
    }

    #[test]
    fn star_graph_keeps_node_order() {
        let mut g = SceneGraph::new("a big red round ball");
        let ball = g
            .add_node("ball", NodeKind::Entity, "ball", Category::Existence)
            .unwrap();
        for (id, c) in [
            ("big", Category::Other),
            ("red", Category::Color),
            ("round", Category::Shape),
        ] {
            let a = g.add_node(id, NodeKind::Attribute, id, c).unwrap();
            g.add_edge(&a, &ball);
        }
        assert_eq!(ids(&traverse(&g).unwrap()), ["ball", "big", "red", "round"]);
    }

    #[test]
    fn relation_waits_for_later_attributes() {
        // r links a and b; c's attribute comes later but does not block r.
        let mut g = SceneGraph::new("x");
        for id in ["a", "b", "c"] {
            g.add_node(id, NodeKind::Entity, id, Category::Existence).unwrap();
        }
        let r2 = g.add_node("r2", NodeKind::Relation, "near", Category::Spatial).unwrap();
        let r1 = g.add_node("r1", NodeKind::Relation, "near", Category::Spatial).unwrap();
        let ca = g.add_node("ca", NodeKind::Attribute, "red", Category::Color).unwrap();
        g.add_edge(&ca, &"c".into());
        g.add_edge(&r2, &"b".into());
        g.add_edge(&r2, &"c".into());
        g.add_edge(&r1, &"a".into());
        g.add_edge(&r1, &"b".into());
        // r1 is ready right after the entities, r2 only after ca.
        assert_eq!(ids(&traverse(&g).unwrap()), ["a", "b", "c", "ca", "r1", "r2"]);
    }

    #[test]
    fn invalid_graph_is_a_contract_violation() {
        let mut g = running_example();
        g.add_edge(&"glass".into(), &"transparent".into());
        assert!(matches!(traverse(&g), Err(Error::Contract(_))));
    }

    #[test]
    fn checker_rejects_bad_orders() {
        let g = running_example();
        let bad: Vec<NodeId> = [
            "water",
            "cup",
            "space_station",
            "transparent",
            "pouring_out_of",
            "glass",
            "contained_within",
        ]
        .into_iter()
        .map(NodeId::from)
        .collect();
        assert!(check_order(&g, &bad).is_err());
    }
}
