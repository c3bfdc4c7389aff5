//! Graphviz DOT export.

use std::fmt::Write;

use crate::graph::{GraphError, NodeId, ReasoningGraph};

/// Rendering class of a node in exported DOT.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    /// Out-degree of two or more.
    Branch,
    /// The unique sink, when there is exactly one.
    Decision,
    Ordinary,
}

impl NodeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeClass::Branch => "branch",
            NodeClass::Decision => "decision",
            NodeClass::Ordinary => "ordinary",
        }
    }

    fn fill(self) -> &'static str {
        match self {
            NodeClass::Branch => "lightblue",
            NodeClass::Decision => "palegreen",
            NodeClass::Ordinary => "white",
        }
    }
}

pub fn classify(graph: &ReasoningGraph, node: &NodeId, sinks: &[NodeId]) -> NodeClass {
    if graph.out_degree(node) >= 2 {
        NodeClass::Branch
    } else if sinks.len() == 1 && &sinks[0] == node {
        NodeClass::Decision
    } else {
        NodeClass::Ordinary
    }
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => {}
            c => out.push(c),
        }
    }
    out
}

/// Emits a DOT digraph. Nodes are named `n0..nN` in insertion order and
/// edges follow edge insertion order, so output is byte-deterministic.
pub fn export_dot(graph: &ReasoningGraph, answer: Option<&str>) -> Result<String, GraphError> {
    let sinks = graph.sinks()?;
    let names: std::collections::HashMap<&NodeId, usize> = graph
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, n)| (&n.id, i))
        .collect();

    let mut out = String::new();
    out.push_str("digraph reasoning {\n");
    out.push_str("  rankdir=TB;\n");
    out.push_str("  node [shape=box, style=\"rounded,filled\", fontname=\"Helvetica\"];\n");
    for (i, node) in graph.nodes().iter().enumerate() {
        let class = classify(graph, &node.id, &sinks);
        let mut label = escape(&node.text);
        if class == NodeClass::Decision {
            if let Some(answer) = answer {
                label.push_str("\\nanswer: ");
                label.push_str(&escape(answer.trim()));
            }
        }
        let _ = writeln!(
            out,
            "  n{i} [label=\"{label}\", class=\"{}\", fillcolor=\"{}\"];",
            class.as_str(),
            class.fill()
        );
    }
    for edge in graph.edges() {
        let _ = writeln!(out, "  n{} -> n{};", names[&edge.parent], names[&edge.child]);
    }
    out.push_str("}\n");
    Ok(out)
}
