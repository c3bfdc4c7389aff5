//! Reasoning graph data model.
//!
//! A reasoning graph is a set of textual reasoning steps (nodes) connected by
//! logical dependencies (edges, parent to child). Node identity is the
//! normalized form of the node text, so two steps that differ only in case,
//! spacing or surrounding punctuation are the same node.
//!
//! Graphs are immutable once built. [`GraphBuilder`] rejects duplicate edges
//! but otherwise accepts any structure; [`ReasoningGraph::validate`] reports
//! cycles, dangling edges and other violations as data.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("node text {0:?} is empty after normalization")]
    EmptyNode(String),
    #[error("duplicate edge {parent} -> {child}")]
    DuplicateEdge { parent: NodeId, child: NodeId },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("invalid graph: {0}")]
    Invalid(GraphDiagnostics),
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}'..='\u{201F}' | '\u{2026}' | '\u{3001}' | '\u{3002}' | '\u{FF0C}' | '\u{FF0E}'
        )
}

/// Lowercases, collapses internal whitespace and strips surrounding
/// punctuation.
pub fn normalize_text(text: &str) -> String {
    let collapsed = text
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    collapsed
        .trim_matches(|c: char| is_punct(c) || c.is_whitespace())
        .to_string()
}

/// Normalized node key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(text: &str) -> Result<Self, GraphError> {
        let key = normalize_text(text);
        if key.is_empty() {
            return Err(GraphError::EmptyNode(text.to_string()));
        }
        Ok(NodeId(key))
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

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningNode {
    pub id: NodeId,
    /// Original display text (first spelling seen).
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReasoningEdge {
    pub parent: NodeId,
    pub child: NodeId,
}

impl ReasoningEdge {
    pub fn new(parent: NodeId, child: NodeId) -> Self {
        Self { parent, child }
    }
}

/// A hard-invariant violation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    /// Nodes of one strongly connected component, in insertion order.
    Cycle { nodes: Vec<NodeId> },
    SelfLoop { node: NodeId },
    DanglingEdge { parent: NodeId, child: NodeId, missing: NodeId },
    EmptyGraph,
    DuplicateEdge { parent: NodeId, child: NodeId },
}

/// A soft structural observation that does not make a graph invalid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Warning {
    MultipleSinks { sinks: Vec<NodeId> },
    Disconnected { components: usize },
    IsolatedNode { node: NodeId },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDiagnostics {
    pub errors: Vec<Violation>,
    pub warnings: Vec<Warning>,
}

impl GraphDiagnostics {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Cycle { nodes } => {
                let names: Vec<&str> = nodes.iter().map(NodeId::as_str).collect();
                write!(f, "cycle({})", names.join(", "))
            }
            Violation::SelfLoop { node } => write!(f, "self-loop({node})"),
            Violation::DanglingEdge { parent, child, missing } => {
                write!(f, "dangling-edge({parent} -> {child}, missing {missing})")
            }
            Violation::EmptyGraph => f.write_str("empty-graph"),
            Violation::DuplicateEdge { parent, child } => {
                write!(f, "duplicate-edge({parent} -> {child})")
            }
        }
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::MultipleSinks { sinks } => {
                let names: Vec<&str> = sinks.iter().map(NodeId::as_str).collect();
                write!(f, "multiple-sinks({})", names.join(", "))
            }
            Warning::Disconnected { components } => {
                write!(f, "disconnected({components} components)")
            }
            Warning::IsolatedNode { node } => write!(f, "isolated-node({node})"),
        }
    }
}

impl fmt::Display for GraphDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let errors: Vec<String> = self.errors.iter().map(ToString::to_string).collect();
        write!(f, "{} error(s)", errors.len())?;
        if !errors.is_empty() {
            write!(f, ": {}", errors.join("; "))?;
        }
        Ok(())
    }
}

/// Directed graph of reasoning steps.
///
/// Node order and edge order are both insertion order; they are part of the
/// graph state and drive rendering. Equality compares the node key set and
/// the edge sequence, ignoring display text.
#[derive(Debug, Clone, Default)]
pub struct ReasoningGraph {
    nodes: Vec<ReasoningNode>,
    index: HashMap<NodeId, usize>,
    edges: Vec<ReasoningEdge>,
}

impl PartialEq for ReasoningGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes.len() == other.nodes.len()
            && self.nodes.iter().all(|n| other.index.contains_key(&n.id))
            && self.edges == other.edges
    }
}

impl Eq for ReasoningGraph {}

impl ReasoningGraph {
    pub fn builder() -> GraphBuilder {
        GraphBuilder::default()
    }

    /// Assembles a graph without structural checks. Nodes are deduplicated by
    /// key; edges are kept verbatim, so dangling or duplicate edges surface in
    /// [`validate`](Self::validate).
    pub fn from_parts(nodes: Vec<ReasoningNode>, edges: Vec<ReasoningEdge>) -> Self {
        let mut graph = ReasoningGraph::default();
        for node in nodes {
            if !graph.index.contains_key(&node.id) {
                graph.index.insert(node.id.clone(), graph.nodes.len());
                graph.nodes.push(node);
            }
        }
        graph.edges = edges;
        graph
    }

    pub fn nodes(&self) -> &[ReasoningNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[ReasoningEdge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.index.contains_key(id)
    }

    pub fn node(&self, id: &NodeId) -> Option<&ReasoningNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    /// Display text of a node, falling back to its key.
    pub fn text_of<'a>(&'a self, id: &'a NodeId) -> &'a str {
        self.node(id).map(|n| n.text.as_str()).unwrap_or(id.as_str())
    }

    pub fn validate(&self) -> GraphDiagnostics {
        let mut diag = GraphDiagnostics::default();
        if self.nodes.is_empty() {
            diag.errors.push(Violation::EmptyGraph);
        }

        let mut seen = HashSet::new();
        for edge in &self.edges {
            if !seen.insert((&edge.parent, &edge.child)) {
                diag.errors.push(Violation::DuplicateEdge {
                    parent: edge.parent.clone(),
                    child: edge.child.clone(),
                });
            }
            for end in [&edge.parent, &edge.child] {
                if !self.contains(end) {
                    diag.errors.push(Violation::DanglingEdge {
                        parent: edge.parent.clone(),
                        child: edge.child.clone(),
                        missing: end.clone(),
                    });
                    break;
                }
            }
            if edge.parent == edge.child && self.contains(&edge.parent) {
                diag.errors.push(Violation::SelfLoop {
                    node: edge.parent.clone(),
                });
            }
        }

        let adjacency = self.adjacency();
        for component in strongly_connected(self.nodes.len(), &adjacency) {
            if component.len() > 1 {
                diag.errors.push(Violation::Cycle {
                    nodes: component
                        .into_iter()
                        .map(|i| self.nodes[i].id.clone())
                        .collect(),
                });
            }
        }

        if self.nodes.is_empty() {
            return diag;
        }

        let sinks = self.sink_indices(&adjacency);
        if sinks.len() > 1 {
            diag.warnings.push(Warning::MultipleSinks {
                sinks: sinks.iter().map(|&i| self.nodes[i].id.clone()).collect(),
            });
        }
        let components = self.weak_component_count(&adjacency);
        if components > 1 {
            diag.warnings.push(Warning::Disconnected { components });
        }
        let mut touched = vec![false; self.nodes.len()];
        for (p, c) in self.resolved_edges() {
            touched[p] = true;
            touched[c] = true;
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if !touched[i] {
                diag.warnings.push(Warning::IsolatedNode {
                    node: node.id.clone(),
                });
            }
        }
        diag
    }

    /// Returns `Ok(())` when [`validate`](Self::validate) reports no errors.
    pub fn ensure_valid(&self) -> Result<(), GraphError> {
        let diag = self.validate();
        if diag.is_valid() {
            Ok(())
        } else {
            Err(GraphError::Invalid(diag))
        }
    }

    pub fn parents(&self, node: &NodeId) -> Result<Vec<NodeId>, GraphError> {
        if !self.contains(node) {
            return Err(GraphError::UnknownNode(node.clone()));
        }
        Ok(self
            .edges
            .iter()
            .filter(|e| &e.child == node)
            .map(|e| e.parent.clone())
            .collect())
    }

    pub fn children(&self, node: &NodeId) -> Result<Vec<NodeId>, GraphError> {
        if !self.contains(node) {
            return Err(GraphError::UnknownNode(node.clone()));
        }
        Ok(self
            .edges
            .iter()
            .filter(|e| &e.parent == node)
            .map(|e| e.child.clone())
            .collect())
    }

    pub fn out_degree(&self, node: &NodeId) -> usize {
        self.edges.iter().filter(|e| &e.parent == node).count()
    }

    /// Nodes with out-degree zero, in insertion order.
    pub fn sinks(&self) -> Result<Vec<NodeId>, GraphError> {
        self.ensure_valid()?;
        let adjacency = self.adjacency();
        Ok(self
            .sink_indices(&adjacency)
            .into_iter()
            .map(|i| self.nodes[i].id.clone())
            .collect())
    }

    /// Kahn's algorithm; ties resolved by insertion order. `None` on a cycle.
    pub fn topological_order(&self) -> Option<Vec<NodeId>> {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        let adjacency = self.adjacency();
        for (_, c) in self.resolved_edges() {
            indegree[c] += 1;
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = queue.pop_front() {
            order.push(self.nodes[i].id.clone());
            for &c in &adjacency[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// All nodes with a directed path to `target`, including `target`.
    pub fn ancestry(&self, target: &NodeId) -> Result<HashSet<NodeId>, GraphError> {
        if !self.contains(target) {
            return Err(GraphError::UnknownNode(target.clone()));
        }
        let mut reverse: HashMap<&NodeId, Vec<&NodeId>> = HashMap::new();
        for e in &self.edges {
            reverse.entry(&e.child).or_default().push(&e.parent);
        }
        let mut seen = HashSet::from([target.clone()]);
        let mut stack = vec![target];
        while let Some(n) = stack.pop() {
            for p in reverse.get(n).into_iter().flatten() {
                if seen.insert((*p).clone()) {
                    stack.push(p);
                }
            }
        }
        Ok(seen)
    }

    /// Keeps only the listed nodes and the edges between them, preserving
    /// order.
    pub fn retain_nodes(&self, keep: &HashSet<NodeId>) -> ReasoningGraph {
        let nodes = self
            .nodes
            .iter()
            .filter(|n| keep.contains(&n.id))
            .cloned()
            .collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| keep.contains(&e.parent) && keep.contains(&e.child))
            .cloned()
            .collect();
        ReasoningGraph::from_parts(nodes, edges)
    }

    fn resolved_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().filter_map(|e| {
            Some((*self.index.get(&e.parent)?, *self.index.get(&e.child)?))
        })
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adjacency = vec![Vec::new(); self.nodes.len()];
        for (p, c) in self.resolved_edges() {
            adjacency[p].push(c);
        }
        adjacency
    }

    fn sink_indices(&self, adjacency: &[Vec<usize>]) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| adjacency[i].is_empty())
            .collect()
    }

    fn weak_component_count(&self, adjacency: &[Vec<usize>]) -> usize {
        let n = self.nodes.len();
        let mut undirected = vec![Vec::new(); n];
        for (p, children) in adjacency.iter().enumerate() {
            for &c in children {
                undirected[p].push(c);
                undirected[c].push(p);
            }
        }
        let mut seen = vec![false; n];
        let mut count = 0;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut stack = vec![start];
            while let Some(i) = stack.pop() {
                for &j in &undirected[i] {
                    if !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        count
    }
}

/// Tarjan's SCC, iterative. Each component is returned sorted by index;
/// components are ordered by their smallest index.
pub(crate) fn strongly_connected(n: usize, adjacency: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNVISITED: usize = usize::MAX;
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next = 0;
    let mut components = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        let mut work: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut child)) = work.last_mut() {
            if let Some(&w) = adjacency[v].get(*child) {
                *child += 1;
                if index[w] == UNVISITED {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            work.pop();
            if let Some(&(parent, _)) = work.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut component = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    component.push(w);
                    if w == v {
                        break;
                    }
                }
                component.sort_unstable();
                components.push(component);
            }
        }
    }
    components.sort_by_key(|c| c[0]);
    components
}

/// Incremental graph construction. Nodes are deduplicated by normalized key
/// (the first spelling wins for display); duplicate edges are rejected.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    graph: ReasoningGraph,
    edge_keys: HashSet<(NodeId, NodeId)>,
}

impl GraphBuilder {
    pub fn add_node(&mut self, text: &str) -> Result<NodeId, GraphError> {
        let id = NodeId::new(text)?;
        if !self.graph.index.contains_key(&id) {
            self.graph.index.insert(id.clone(), self.graph.nodes.len());
            self.graph.nodes.push(ReasoningNode {
                id: id.clone(),
                text: text.trim().to_string(),
            });
        }
        Ok(id)
    }

    /// Adds both endpoints (if new) and the edge between them.
    pub fn add_edge(&mut self, parent: &str, child: &str) -> Result<(), GraphError> {
        let parent_id = NodeId::new(parent)?;
        let child_id = NodeId::new(child)?;
        if self.has_edge(&parent_id, &child_id) {
            return Err(GraphError::DuplicateEdge {
                parent: parent_id,
                child: child_id,
            });
        }
        self.add_node(parent)?;
        self.add_node(child)?;
        self.edge_keys.insert((parent_id.clone(), child_id.clone()));
        self.graph.edges.push(ReasoningEdge::new(parent_id, child_id));
        Ok(())
    }

    pub fn has_edge(&self, parent: &NodeId, child: &NodeId) -> bool {
        self.edge_keys.contains(&(parent.clone(), child.clone()))
    }

    pub fn build(self) -> ReasoningGraph {
        self.graph
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> NodeId {
        NodeId::new(s).unwrap()
    }

    fn graph(edges: &[(&str, &str)]) -> ReasoningGraph {
        let mut b = ReasoningGraph::builder();
        for (p, c) in edges {
            b.add_edge(p, c).unwrap();
        }
        b.build()
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_text("  Compare   Release\tYears. "), "compare release years");
        assert_eq!(normalize_text("\"(A)\""), "a");
        assert_eq!(normalize_text("3 + 1 = 4!"), "3 + 1 = 4");
        assert!(NodeId::new(" ... ").is_err());
    }

    #[test]
    fn nodes_dedupe_by_key() {
        let mut b = ReasoningGraph::builder();
        b.add_node("Alice has 3 sisters").unwrap();
        b.add_node("alice  has 3 SISTERS.").unwrap();
        b.add_node("Alice has 4 brothers").unwrap();
        let g = b.build();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.nodes()[0].text, "Alice has 3 sisters");
    }

    #[test]
    fn single_node_is_isolated_but_valid() {
        let mut b = ReasoningGraph::builder();
        b.add_node("only").unwrap();
        let g = b.build();
        let d = g.validate();
        assert!(d.errors.is_empty());
        assert_eq!(d.warnings, vec![Warning::IsolatedNode { node: id("only") }]);
        assert_eq!(g.sinks().unwrap(), vec![id("only")]);
    }

    #[test]
    fn two_cycle_is_reported() {
        let g = graph(&[("A", "B"), ("B", "A")]);
        let d = g.validate();
        assert_eq!(
            d.errors,
            vec![Violation::Cycle {
                nodes: vec![id("a"), id("b")]
            }]
        );
        assert!(matches!(g.sinks(), Err(GraphError::Invalid(_))));
        assert!(g.topological_order().is_none());
    }

    #[test]
    fn self_loop_and_empty() {
        let g = graph(&[("A", "A")]);
        assert_eq!(g.validate().errors, vec![Violation::SelfLoop { node: id("a") }]);
        assert_eq!(
            ReasoningGraph::default().validate().errors,
            vec![Violation::EmptyGraph]
        );
    }

    #[test]
    fn dangling_and_duplicate_from_parts() {
        let nodes = vec![ReasoningNode {
            id: id("a"),
            text: "a".into(),
        }];
        let edges = vec![
            ReasoningEdge::new(id("a"), id("b")),
            ReasoningEdge::new(id("a"), id("b")),
        ];
        let errors = ReasoningGraph::from_parts(nodes, edges).validate().errors;
        assert!(errors.contains(&Violation::DuplicateEdge {
            parent: id("a"),
            child: id("b")
        }));
        assert!(errors.contains(&Violation::DanglingEdge {
            parent: id("a"),
            child: id("b"),
            missing: id("b")
        }));
    }

    #[test]
    fn builder_rejects_duplicate_edge() {
        let mut b = ReasoningGraph::builder();
        b.add_edge("A", "B").unwrap();
        assert!(matches!(
            b.add_edge("a", "b."),
            Err(GraphError::DuplicateEdge { .. })
        ));
    }

    #[test]
    fn diamond_parents() {
        let g = graph(&[("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")]);
        assert_eq!(g.parents(&id("D")).unwrap(), vec![id("B"), id("C")]);
        assert!(g.parents(&id("A")).unwrap().is_empty());
        assert!(matches!(g.parents(&id("Z")), Err(GraphError::UnknownNode(_))));
        assert_eq!(g.validate(), GraphDiagnostics::default());
    }

    #[test]
    fn disconnected_chain_sinks() {
        let g = graph(&[("a1", "a2"), ("b1", "b2"), ("a2", "a3")]);
        assert_eq!(g.sinks().unwrap(), vec![id("b2"), id("a3")]);
        let w = g.validate().warnings;
        assert!(w.contains(&Warning::Disconnected { components: 2 }));
        assert!(w.contains(&Warning::MultipleSinks {
            sinks: vec![id("b2"), id("a3")]
        }));
    }

    #[test]
    fn ancestry_and_retain() {
        let g = graph(&[("A", "B"), ("X", "Y"), ("B", "C")]);
        let anc = g.ancestry(&id("C")).unwrap();
        assert_eq!(anc.len(), 3);
        let pruned = g.retain_nodes(&anc);
        assert_eq!(pruned.edge_count(), 2);
        assert_eq!(pruned.sinks().unwrap(), vec![id("C")]);
    }
}
