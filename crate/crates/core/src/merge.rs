//! Integration of sampled candidate graphs into one reasoning graph.
//!
//! The deterministic merge works in five steps:
//!
//! 1. Group candidates by canonical answer and keep the largest group (ties go
//!    to the group holding the lowest source index).
//! 2. Union the group's graphs: nodes by key, edges by `(parent, child)`,
//!    counting how many candidates contributed each edge.
//! 3. While the union has a cycle, delete the cycle edge with the lowest
//!    multiplicity; ties delete the lexicographically greatest key.
//! 4. The conclusion is the sink of the group's lowest-index candidate.
//! 5. Drop every node without a path to the conclusion.
//!
//! The LLM merge asks a model to integrate the candidates instead, retries
//! once with a repair hint when the reply does not parse, and can fall back
//! to the deterministic merge.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{ClientError, CompletionRequest, ModelClient, SamplingConfig};
use crate::graph::{NodeId, ReasoningEdge, ReasoningGraph};
use crate::pipeline::answers::{normalize_freeform, option_letter, parse_number};
use crate::prompts;
use crate::template::{self, ParseError, Strictness, StructuredOutput};

#[derive(Debug, Error)]
pub enum MergeError {
    #[error("no valid candidate to merge")]
    NoValidCandidate,
    #[error("candidate source indices must be unique and ascending")]
    UnorderedIndices,
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("integration reply did not parse after repair: {0}")]
    Unparseable(ParseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MergeMode {
    Deterministic,
    Llm,
    #[default]
    LlmWithFallback,
}

impl MergeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MergeMode::Deterministic => "deterministic",
            MergeMode::Llm => "llm",
            MergeMode::LlmWithFallback => "llm-with-fallback",
        }
    }
}

impl std::str::FromStr for MergeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deterministic" => Ok(MergeMode::Deterministic),
            "llm" => Ok(MergeMode::Llm),
            "llm-with-fallback" => Ok(MergeMode::LlmWithFallback),
            other => Err(format!(
                "unknown merge mode {other:?} (expected deterministic, llm or llm-with-fallback)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub output: StructuredOutput,
    pub source_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    candidates: Vec<Candidate>,
    question: String,
}

impl CandidateSet {
    pub fn new(question: impl Into<String>, candidates: Vec<Candidate>) -> Result<Self, MergeError> {
        if candidates.is_empty() {
            return Err(MergeError::NoValidCandidate);
        }
        if candidates
            .windows(2)
            .any(|w| w[0].source_index >= w[1].source_index)
        {
            return Err(MergeError::UnorderedIndices);
        }
        Ok(Self {
            candidates,
            question: question.into(),
        })
    }

    /// Numbers outputs 0, 1, 2, … in order.
    pub fn from_outputs(question: impl Into<String>, outputs: Vec<StructuredOutput>) -> Result<Self, MergeError> {
        let candidates = outputs
            .into_iter()
            .enumerate()
            .map(|(source_index, output)| Candidate {
                output,
                source_index,
            })
            .collect();
        Self::new(question, candidates)
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn question(&self) -> &str {
        &self.question
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    CycleBreak,
    Pruned,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedEdge {
    pub parent: NodeId,
    pub child: NodeId,
    /// Number of candidates that contributed the edge.
    pub multiplicity: usize,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergedResult {
    pub graph: ReasoningGraph,
    pub answer: String,
    pub conclusion: NodeId,
    /// Sorted source indices of the candidates the graph was built from.
    pub contributing_indices: Vec<usize>,
    pub dropped_edges: Vec<DroppedEdge>,
    pub pruned_nodes: Vec<NodeId>,
    /// How the result was actually produced.
    pub mode: MergeMode,
    /// Set when an LLM merge fell back to the deterministic algorithm.
    pub fallback: bool,
}

impl MergedResult {
    pub fn to_output(&self) -> StructuredOutput {
        StructuredOutput::new(self.graph.clone(), self.answer.clone())
    }
}

/// Canonical grouping key for an answer: option letter, then number, then
/// normalized text.
pub fn answer_key(answer: &str) -> String {
    if let Some(letter) = option_letter(answer) {
        format!("option:{letter}")
    } else if let Some(value) = parse_number(answer) {
        format!("number:{value}")
    } else {
        format!("text:{}", normalize_freeform(answer))
    }
}

/// Conclusion node of a single candidate: its only sink, or when there are
/// several, the sink written last.
pub fn conclusion_of(graph: &ReasoningGraph) -> Option<NodeId> {
    let sinks = graph.sinks().ok()?;
    if sinks.len() <= 1 {
        return sinks.into_iter().next();
    }
    graph
        .edges()
        .iter()
        .rev()
        .map(|e| &e.child)
        .find(|c| sinks.contains(c))
        .cloned()
        .or_else(|| sinks.into_iter().next())
}

pub fn merge_deterministic(set: &CandidateSet) -> Result<MergedResult, MergeError> {
    let valid: Vec<&Candidate> = set
        .candidates
        .iter()
        .filter(|c| c.output.graph.ensure_valid().is_ok() && c.output.graph.node_count() > 0)
        .collect();
    if valid.is_empty() {
        return Err(MergeError::NoValidCandidate);
    }

    // 1. majority answer group, groups kept in order of first appearance
    let mut groups: Vec<(String, Vec<&Candidate>)> = Vec::new();
    for candidate in &valid {
        let key = answer_key(&candidate.output.answer);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(candidate),
            None => groups.push((key, vec![candidate])),
        }
    }
    let (_, group) = groups
        .iter()
        .max_by(|(_, a), (_, b)| {
            a.len()
                .cmp(&b.len())
                .then(b[0].source_index.cmp(&a[0].source_index))
        })
        .expect("at least one group");
    let leader = group[0];

    // 2. union with edge multiplicity
    let mut builder = ReasoningGraph::builder();
    let mut multiplicity: HashMap<ReasoningEdge, usize> = HashMap::new();
    for member in group {
        let graph = &member.output.graph;
        for node in graph.nodes() {
            builder.add_node(&node.text).expect("validated node text");
        }
        for edge in graph.edges() {
            let count = multiplicity.entry(edge.clone()).or_insert(0);
            if *count == 0 {
                builder
                    .add_edge(graph.text_of(&edge.parent), graph.text_of(&edge.child))
                    .expect("edge keys are unique in the union");
            }
            *count += 1;
        }
    }
    let union = builder.build();

    // 3. cycle breaking
    let mut nodes = union.nodes().to_vec();
    let mut edges = union.edges().to_vec();
    let mut dropped_edges = Vec::new();
    while let Some(cycle) = find_cycle(&nodes_index(&nodes), &edges) {
        let victim = cycle
            .into_iter()
            .min_by(|&a, &b| {
                let (ea, eb) = (&edges[a], &edges[b]);
                multiplicity[ea]
                    .cmp(&multiplicity[eb])
                    .then_with(|| (&eb.parent, &eb.child).cmp(&(&ea.parent, &ea.child)))
            })
            .expect("cycles have edges");
        let edge = edges.remove(victim);
        dropped_edges.push(DroppedEdge {
            multiplicity: multiplicity[&edge],
            parent: edge.parent,
            child: edge.child,
            reason: DropReason::CycleBreak,
        });
    }

    // 4. conclusion
    let conclusion = conclusion_of(&leader.output.graph).ok_or(MergeError::NoValidCandidate)?;

    // 5. prune to the conclusion's ancestry
    let acyclic = ReasoningGraph::from_parts(std::mem::take(&mut nodes), std::mem::take(&mut edges));
    let (graph, pruned_nodes, pruned_edges) = prune_to(&acyclic, &conclusion);
    dropped_edges.extend(pruned_edges.into_iter().map(|e| DroppedEdge {
        multiplicity: multiplicity[&e],
        parent: e.parent,
        child: e.child,
        reason: DropReason::Pruned,
    }));

    let mut contributing_indices: Vec<usize> = group.iter().map(|c| c.source_index).collect();
    contributing_indices.sort_unstable();

    Ok(MergedResult {
        graph,
        answer: leader.output.answer.clone(),
        conclusion,
        contributing_indices,
        dropped_edges,
        pruned_nodes,
        mode: MergeMode::Deterministic,
        fallback: false,
    })
}

fn nodes_index(nodes: &[crate::graph::ReasoningNode]) -> HashMap<NodeId, usize> {
    nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.clone(), i))
        .collect()
}

/// Edge positions forming some directed cycle, found by DFS from nodes in
/// insertion order following edges in insertion order.
fn find_cycle(index: &HashMap<NodeId, usize>, edges: &[ReasoningEdge]) -> Option<Vec<usize>> {
    let n = index.len();
    let mut out: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (pos, e) in edges.iter().enumerate() {
        out[index[&e.parent]].push((index[&e.child], pos));
    }
    #[derive(Clone, Copy, PartialEq)]
    enum State {
        New,
        Active,
        Done,
    }
    let mut state = vec![State::New; n];
    for root in 0..n {
        if state[root] != State::New {
            continue;
        }
        // (node, next child slot, edge used to enter)
        let mut stack: Vec<(usize, usize, Option<usize>)> = vec![(root, 0, None)];
        state[root] = State::Active;
        while let Some(top) = stack.last_mut() {
            let (v, slot) = (top.0, top.1);
            if let Some(&(w, pos)) = out[v].get(slot) {
                top.1 += 1;
                match state[w] {
                    State::New => {
                        state[w] = State::Active;
                        stack.push((w, 0, Some(pos)));
                    }
                    State::Active => {
                        let start = stack.iter().position(|f| f.0 == w).expect("active node on stack");
                        let mut cycle: Vec<usize> =
                            stack[start + 1..].iter().filter_map(|f| f.2).collect();
                        cycle.push(pos);
                        return Some(cycle);
                    }
                    State::Done => {}
                }
            } else {
                state[v] = State::Done;
                stack.pop();
            }
        }
    }
    None
}

/// Restricts `graph` to the ancestry of `target`, returning the pruned graph,
/// removed nodes and removed edges.
fn prune_to(graph: &ReasoningGraph, target: &NodeId) -> (ReasoningGraph, Vec<NodeId>, Vec<ReasoningEdge>) {
    let keep = graph.ancestry(target).unwrap_or_default();
    let pruned_nodes = graph
        .nodes()
        .iter()
        .filter(|n| !keep.contains(&n.id))
        .map(|n| n.id.clone())
        .collect();
    let pruned_edges = graph
        .edges()
        .iter()
        .filter(|e| !(keep.contains(&e.parent) && keep.contains(&e.child)))
        .cloned()
        .collect();
    (graph.retain_nodes(&keep), pruned_nodes, pruned_edges)
}

fn render_candidates(set: &CandidateSet) -> String {
    let mut out = String::new();
    for c in &set.candidates {
        if let Ok(text) = template::render(&c.output) {
            out.push_str(&format!("Candidate {}:\n{}\n\n", c.source_index + 1, text));
        }
    }
    out.trim_end().to_string()
}

fn from_llm_output(set: &CandidateSet, output: StructuredOutput) -> Result<MergedResult, MergeError> {
    let conclusion = conclusion_of(&output.graph).ok_or(MergeError::NoValidCandidate)?;
    let (graph, pruned_nodes, pruned_edges) = prune_to(&output.graph, &conclusion);
    Ok(MergedResult {
        graph,
        answer: output.answer,
        conclusion,
        contributing_indices: set.candidates.iter().map(|c| c.source_index).collect(),
        dropped_edges: pruned_edges
            .into_iter()
            .map(|e| DroppedEdge {
                parent: e.parent,
                child: e.child,
                multiplicity: 1,
                reason: DropReason::Pruned,
            })
            .collect(),
        pruned_nodes,
        mode: MergeMode::Llm,
        fallback: false,
    })
}

/// Asks the model to integrate the candidates. The integration request runs
/// at temperature zero. A reply that fails strict parsing gets one repair
/// retry; after a second failure the deterministic merge is used when
/// `allow_fallback` is set.
pub async fn merge_llm(
    set: &CandidateSet,
    client: &ModelClient,
    config: &SamplingConfig,
    allow_fallback: bool,
) -> Result<MergedResult, MergeError> {
    let candidates = render_candidates(set);
    let vars = [
        ("question", set.question.as_str()),
        ("candidates", candidates.as_str()),
        ("format", prompts::format_rules()),
    ];
    let mut request = CompletionRequest::from_template(&prompts::INTEGRATION, &vars, config.greedy());

    let first = client.complete(&request).await?;
    let error = match template::parse(&first.text, Strictness::Strict) {
        Ok(output) => return from_llm_output(set, output),
        Err(e) => e,
    };
    tracing::debug!(%error, "integration reply failed to parse; requesting repair");

    request.user_prompt.push_str(&prompts::REPAIR_SUFFIX.replace("{error}", &error.to_string()));
    let second = client.complete(&request).await?;
    match template::parse(&second.text, Strictness::Strict) {
        Ok(output) => from_llm_output(set, output),
        Err(e) if allow_fallback => {
            tracing::warn!(error = %e, "integration failed twice; using deterministic merge");
            let mut merged = merge_deterministic(set)?;
            merged.fallback = true;
            Ok(merged)
        }
        Err(e) => Err(MergeError::Unparseable(e)),
    }
}

/// Dispatches on `mode`. In `LlmWithFallback` mode transport failures also
/// fall back to the deterministic merge.
pub async fn merge(
    set: &CandidateSet,
    mode: MergeMode,
    client: &ModelClient,
    config: &SamplingConfig,
) -> Result<MergedResult, MergeError> {
    match mode {
        MergeMode::Deterministic => merge_deterministic(set),
        MergeMode::Llm => merge_llm(set, client, config, false).await,
        MergeMode::LlmWithFallback => match merge_llm(set, client, config, true).await {
            Err(MergeError::Client(e)) => {
                tracing::warn!(error = %e, "integration request failed; using deterministic merge");
                let mut merged = merge_deterministic(set)?;
                merged.fallback = true;
                Ok(merged)
            }
            other => other,
        },
    }
}

/// Convenience for tests and tools: distinct keys of the merged graph.
pub fn node_keys(graph: &ReasoningGraph) -> HashSet<NodeId> {
    graph.nodes().iter().map(|n| n.id.clone()).collect()
}
