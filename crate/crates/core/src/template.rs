//! Structured reasoning template codec.
//!
//! The wire format is:
//!
//! ```text
//! <reasoning>
//! <step> parent → child </step>
//! ...
//! </reasoning>
//! <answer> final answer </answer>
//! ```
//!
//! Each `<step>` holds exactly one edge. The arrow may be written as `→`
//! (U+2192) or `->`. Node text may not contain an arrow or angle brackets.
//!
//! Strict mode accepts only whitespace around and between the two blocks and
//! rejects duplicate steps. Lenient mode also tolerates prose before
//! `<reasoning>` and after `</answer>`, matches tags case-insensitively and
//! drops duplicate steps with a warning.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, NodeId, ReasoningGraph, Violation};

pub const ARROW: &str = "\u{2192}";
const ASCII_ARROW: &str = "->";

const REASONING_OPEN: &str = "<reasoning>";
const REASONING_CLOSE: &str = "</reasoning>";
const STEP_OPEN: &str = "<step>";
const STEP_CLOSE: &str = "</step>";
const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";

/// Default cues for [`extract_answer_lenient`].
pub const DEFAULT_ANSWER_CUES: &[&str] = &["answer is", "answer:"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strictness {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParseErrorKind {
    MissingReasoningBlock,
    MissingAnswerBlock,
    MalformedStep,
    EmptyEndpoint,
    DuplicateStep,
    CycleInSteps,
    TrailingGarbage,
}

impl ParseErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParseErrorKind::MissingReasoningBlock => "missing-reasoning-block",
            ParseErrorKind::MissingAnswerBlock => "missing-answer-block",
            ParseErrorKind::MalformedStep => "malformed-step",
            ParseErrorKind::EmptyEndpoint => "empty-endpoint",
            ParseErrorKind::DuplicateStep => "duplicate-step",
            ParseErrorKind::CycleInSteps => "cycle-in-steps",
            ParseErrorKind::TrailingGarbage => "trailing-garbage",
        }
    }
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A failed parse. `location` is a character (not byte) offset.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{kind} at offset {location}: {detail}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub location: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error(transparent)]
    InvalidGraph(#[from] GraphError),
    #[error("graph has no edges to render")]
    NoSteps,
    #[error("node {0} has no edges and cannot be expressed as a step")]
    IsolatedNode(NodeId),
    #[error("node text {0:?} contains an arrow or angle bracket")]
    UnrenderableText(String),
    #[error("answer is empty or contains a closing answer tag")]
    BadAnswer,
}

/// A parsed (graph, answer) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuredOutput {
    pub graph: ReasoningGraph,
    pub answer: String,
    /// Number of `<step>` elements in the source text.
    pub step_count: usize,
}

impl StructuredOutput {
    /// Wraps a graph and answer, taking one step per edge.
    pub fn new(graph: ReasoningGraph, answer: impl Into<String>) -> Self {
        let step_count = graph.edge_count();
        Self {
            graph,
            answer: answer.into().trim().to_string(),
            step_count,
        }
    }
}

/// A successful parse plus any lenient-mode warnings.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub output: StructuredOutput,
    pub warnings: Vec<String>,
}

pub fn parse(text: &str, strictness: Strictness) -> Result<StructuredOutput, ParseError> {
    parse_detailed(text, strictness).map(|p| p.output)
}

pub fn parse_detailed(text: &str, strictness: Strictness) -> Result<Parsed, ParseError> {
    Scanner::new(text, strictness).run()
}

struct Scanner<'a> {
    text: &'a str,
    /// Search copy: ASCII-lowercased in lenient mode. Byte offsets match `text`.
    hay: String,
    strictness: Strictness,
}

impl<'a> Scanner<'a> {
    fn new(text: &'a str, strictness: Strictness) -> Self {
        let hay = match strictness {
            Strictness::Strict => text.to_string(),
            Strictness::Lenient => text.to_ascii_lowercase(),
        };
        Self {
            text,
            hay,
            strictness,
        }
    }

    fn error(&self, kind: ParseErrorKind, byte: usize, detail: impl Into<String>) -> ParseError {
        let byte = byte.min(self.text.len());
        ParseError {
            kind,
            location: self.text[..byte].chars().count(),
            detail: detail.into(),
        }
    }

    fn find(&self, tag: &str, from: usize) -> Option<usize> {
        self.hay[from..].find(tag).map(|i| i + from)
    }

    fn skip_ws(&self, mut pos: usize, end: usize) -> usize {
        for c in self.text[pos..end].chars() {
            if !c.is_whitespace() {
                break;
            }
            pos += c.len_utf8();
        }
        pos
    }

    fn run(self) -> Result<Parsed, ParseError> {
        use ParseErrorKind::*;
        let text = self.text;
        let strict = self.strictness == Strictness::Strict;

        let start = self.skip_ws(0, text.len());
        let open = match self.find(REASONING_OPEN, 0) {
            None => return Err(self.error(MissingReasoningBlock, start, "no <reasoning> block")),
            Some(open) => open,
        };
        if strict && open != start {
            return Err(self.error(TrailingGarbage, start, "text before <reasoning>"));
        }
        let body_start = open + REASONING_OPEN.len();
        let close = self.find(REASONING_CLOSE, body_start).ok_or_else(|| {
            self.error(MissingReasoningBlock, open, "unterminated <reasoning> block")
        })?;

        let mut warnings = Vec::new();
        let mut builder = ReasoningGraph::builder();
        let mut step_count = 0;
        let mut pos = body_start;
        loop {
            pos = self.skip_ws(pos, close);
            if pos == close {
                break;
            }
            if !self.hay[pos..close].starts_with(STEP_OPEN) {
                return Err(self.error(MalformedStep, pos, "expected <step> inside <reasoning>"));
            }
            let content_start = pos + STEP_OPEN.len();
            let content_end = self
                .hay
                .get(content_start..close)
                .and_then(|s| s.find(STEP_CLOSE))
                .map(|i| i + content_start)
                .ok_or_else(|| self.error(MalformedStep, pos, "unterminated <step>"))?;
            step_count += 1;
            let (parent, child) = self.split_step(&text[content_start..content_end], pos)?;
            let parent_id = NodeId::new(parent)
                .map_err(|_| self.error(EmptyEndpoint, pos, "step has an empty parent"))?;
            let child_id = NodeId::new(child)
                .map_err(|_| self.error(EmptyEndpoint, pos, "step has an empty child"))?;
            if builder.has_edge(&parent_id, &child_id) {
                let detail = format!("duplicate step {parent_id} -> {child_id}");
                if strict {
                    return Err(self.error(DuplicateStep, pos, detail));
                }
                warnings.push(detail);
            } else {
                builder
                    .add_edge(parent, child)
                    .map_err(|e| self.error(MalformedStep, pos, e.to_string()))?;
            }
            pos = content_end + STEP_CLOSE.len();
        }
        if step_count == 0 {
            return Err(self.error(MalformedStep, body_start, "<reasoning> holds no steps"));
        }

        let after = close + REASONING_CLOSE.len();
        let answer_open = self.skip_ws(after, text.len());
        if !self.hay[answer_open..].starts_with(ANSWER_OPEN) {
            return Err(match self.find(ANSWER_OPEN, after) {
                Some(_) => self.error(
                    TrailingGarbage,
                    answer_open,
                    "text between </reasoning> and <answer>",
                ),
                None => self.error(MissingAnswerBlock, answer_open, "no <answer> block"),
            });
        }
        let answer_start = answer_open + ANSWER_OPEN.len();
        let answer_close = self.find(ANSWER_CLOSE, answer_start).ok_or_else(|| {
            self.error(MissingAnswerBlock, answer_open, "unterminated <answer> block")
        })?;
        let answer = text[answer_start..answer_close].trim();
        if answer.is_empty() {
            return Err(self.error(MissingAnswerBlock, answer_open, "empty answer"));
        }
        let tail = answer_close + ANSWER_CLOSE.len();
        let rest = self.skip_ws(tail, text.len());
        if strict && rest != text.len() {
            return Err(self.error(TrailingGarbage, rest, "text after </answer>"));
        }

        let graph = builder.build();
        let diag = graph.validate();
        if let Some(violation) = diag.errors.first() {
            let kind = match violation {
                Violation::Cycle { .. } | Violation::SelfLoop { .. } => CycleInSteps,
                _ => MalformedStep,
            };
            return Err(self.error(kind, open, violation.to_string()));
        }

        Ok(Parsed {
            output: StructuredOutput {
                graph,
                answer: answer.to_string(),
                step_count,
            },
            warnings,
        })
    }

    fn split_step<'s>(&self, content: &'s str, at: usize) -> Result<(&'s str, &'s str), ParseError> {
        let arrows = content.matches(ARROW).count() + content.matches(ASCII_ARROW).count();
        if arrows != 1 {
            return Err(self.error(
                ParseErrorKind::MalformedStep,
                at,
                format!("step must contain exactly one arrow, found {arrows}"),
            ));
        }
        let (idx, len) = match content.find(ARROW) {
            Some(i) => (i, ARROW.len()),
            None => (content.find(ASCII_ARROW).expect("counted"), ASCII_ARROW.len()),
        };
        let (parent, child) = (&content[..idx], &content[idx + len..]);
        if [parent, child].iter().any(|s| s.contains(['<', '>'])) {
            return Err(self.error(
                ParseErrorKind::MalformedStep,
                at,
                "node text contains an angle bracket",
            ));
        }
        Ok((parent.trim(), child.trim()))
    }
}

fn renderable(text: &str) -> bool {
    !text.contains(ARROW) && !text.contains(ASCII_ARROW) && !text.contains(['<', '>'])
}

/// Renders the canonical template: one step per edge in insertion order.
pub fn render(output: &StructuredOutput) -> Result<String, RenderError> {
    let graph = &output.graph;
    graph.ensure_valid()?;
    if graph.edge_count() == 0 {
        return Err(RenderError::NoSteps);
    }
    for node in graph.nodes() {
        if !graph.edges().iter().any(|e| e.parent == node.id || e.child == node.id) {
            return Err(RenderError::IsolatedNode(node.id.clone()));
        }
        if !renderable(&node.text) {
            return Err(RenderError::UnrenderableText(node.text.clone()));
        }
    }
    let answer = output.answer.trim();
    if answer.is_empty() || answer.to_ascii_lowercase().contains(ANSWER_CLOSE) {
        return Err(RenderError::BadAnswer);
    }

    let mut out = String::from(REASONING_OPEN);
    out.push('\n');
    for edge in graph.edges() {
        out.push_str(STEP_OPEN);
        out.push(' ');
        out.push_str(graph.text_of(&edge.parent).trim());
        out.push(' ');
        out.push_str(ARROW);
        out.push(' ');
        out.push_str(graph.text_of(&edge.child).trim());
        out.push(' ');
        out.push_str(STEP_CLOSE);
        out.push('\n');
    }
    out.push_str(REASONING_CLOSE);
    out.push('\n');
    out.push_str(ANSWER_OPEN);
    out.push(' ');
    out.push_str(answer);
    out.push(' ');
    out.push_str(ANSWER_CLOSE);
    Ok(out)
}

/// Content of the first `<answer>…</answer>` pair, matched
/// case-insensitively anywhere in the text. `None` when absent or blank.
pub fn answer_tag_content(text: &str) -> Option<String> {
    let hay = text.to_ascii_lowercase();
    let open = hay.find(ANSWER_OPEN)? + ANSWER_OPEN.len();
    let close = hay[open..].find(ANSWER_CLOSE)? + open;
    let content = text[open..close].trim();
    (!content.is_empty()).then(|| content.to_string())
}

/// Best-effort answer extraction from untemplated model output, using the
/// default cue list.
pub fn extract_answer_lenient(text: &str) -> Option<String> {
    extract_answer_with_cues(text, DEFAULT_ANSWER_CUES)
}

/// Tries, in order: the `<answer>` tag; the first line after the last
/// occurrence of any cue (case-insensitive); the final non-empty line.
pub fn extract_answer_with_cues(text: &str, cues: &[&str]) -> Option<String> {
    if text.trim().is_empty() {
        return None;
    }
    if let Some(tagged) = answer_tag_content(text) {
        return Some(tagged);
    }
    let hay = text.to_ascii_lowercase();
    let last_cue = cues
        .iter()
        .filter(|c| !c.is_empty())
        .filter_map(|cue| {
            let cue = cue.to_ascii_lowercase();
            hay.rfind(&cue).map(|i| i + cue.len())
        })
        .max();
    if let Some(after) = last_cue {
        if let Some(line) = text[after..].lines().map(str::trim).find(|l| !l.is_empty()) {
            return Some(line.to_string());
        }
    }
    text.lines()
        .map(str::trim)
        .rfind(|l| !l.is_empty())
        .map(str::to_string)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ParseErrorKind::*;

    const MINIMAL: &str = "<reasoning><step> A → B </step></reasoning><answer> X </answer>";

    fn kind(text: &str, strictness: Strictness) -> ParseErrorKind {
        parse(text, strictness).unwrap_err().kind
    }

    #[test]
    fn minimal_document() {
        let out = parse(MINIMAL, Strictness::Strict).unwrap();
        assert_eq!(out.graph.node_count(), 2);
        assert_eq!(out.graph.edge_count(), 1);
        assert_eq!(out.answer, "X");
        assert_eq!(out.step_count, 1);
    }

    #[test]
    fn iphone_harry_potter_template() {
        let text = "<reasoning>\n\
            <step> first iPhone released in 2007 → compare release years </step>\n\
            <step> first Harry Potter movie released in 2001 → compare release years </step>\n\
            <step> compare release years → 2001 is earlier than 2007 </step>\n\
            </reasoning>\n<answer> Harry Potter movie </answer>";
        let out = parse(text, Strictness::Strict).unwrap();
        assert_eq!(out.graph.node_count(), 4);
        assert_eq!(out.graph.edge_count(), 3);
        assert_eq!(out.answer, "Harry Potter movie");
    }

    #[test]
    fn ascii_arrow_accepted() {
        let out = parse(
            "<reasoning><step>A -> B</step></reasoning><answer>X</answer>",
            Strictness::Strict,
        )
        .unwrap();
        assert_eq!(out.graph.edge_count(), 1);
    }

    #[test]
    fn zero_steps_is_malformed() {
        assert_eq!(
            kind("<reasoning></reasoning><answer>X</answer>", Strictness::Strict),
            MalformedStep
        );
    }

    #[test]
    fn error_kinds() {
        let s = Strictness::Strict;
        assert_eq!(kind("<answer>X</answer>", s), MissingReasoningBlock);
        assert_eq!(kind("<reasoning><step>A → B</step>", s), MissingReasoningBlock);
        assert_eq!(kind("<reasoning><step>A → B</step></reasoning>", s), MissingAnswerBlock);
        assert_eq!(
            kind("<reasoning><step>A → B</step></reasoning><answer>  </answer>", s),
            MissingAnswerBlock
        );
        assert_eq!(
            kind("<reasoning><step>A → B → C</step></reasoning><answer>X</answer>", s),
            MalformedStep
        );
        assert_eq!(
            kind("<reasoning><step>A B</step></reasoning><answer>X</answer>", s),
            MalformedStep
        );
        assert_eq!(
            kind("<reasoning><step> → B</step></reasoning><answer>X</answer>", s),
            EmptyEndpoint
        );
        assert_eq!(
            kind("<reasoning><step>A → ..</step></reasoning><answer>X</answer>", s),
            EmptyEndpoint
        );
        assert_eq!(
            kind(
                "<reasoning><step>A → B</step><step>a → b.</step></reasoning><answer>X</answer>",
                s
            ),
            DuplicateStep
        );
        assert_eq!(
            kind(
                "<reasoning><step>A → B</step><step>B → A</step></reasoning><answer>X</answer>",
                s
            ),
            CycleInSteps
        );
        assert_eq!(
            kind("<reasoning><step>A → A</step></reasoning><answer>X</answer>", s),
            CycleInSteps
        );
        assert_eq!(kind(&format!("{MINIMAL} thanks"), s), TrailingGarbage);
        assert_eq!(kind(&format!("Sure! {MINIMAL}"), s), TrailingGarbage);
        assert_eq!(
            kind("<reasoning><step>A → B</step>junk</reasoning><answer>X</answer>", s),
            MalformedStep
        );
        assert_eq!(
            kind("<reasoning><step>A <b> → B</step></reasoning><answer>X</answer>", s),
            MalformedStep
        );
        assert_eq!(
            kind("<reasoning><step>A → B</step></reasoning>so<answer>X</answer>", s),
            TrailingGarbage
        );
    }

    #[test]
    fn location_is_char_offset() {
        let err = parse("éé <reasoning>", Strictness::Strict).unwrap_err();
        assert_eq!(err.kind, TrailingGarbage);
        assert_eq!(err.location, 0);
        let err = parse(
            "<reasoning><step>é → B</step>x</reasoning><answer>X</answer>",
            Strictness::Strict,
        )
        .unwrap_err();
        assert_eq!(err.location, "<reasoning><step>é → B</step>".chars().count());
    }

    #[test]
    fn lenient_tolerances() {
        let wrapped = format!("Here is my reasoning:\n{}\nHope this helps.", MINIMAL.to_uppercase());
        let out = parse(&wrapped, Strictness::Lenient).unwrap();
        assert_eq!(out.answer, "X");
        assert_eq!(out.graph.edge_count(), 1);

        let dup = "<reasoning><step>A → B</step><step>a → b</step></reasoning><answer>X</answer>";
        let parsed = parse_detailed(dup, Strictness::Lenient).unwrap();
        assert_eq!(parsed.output.step_count, 2);
        assert_eq!(parsed.output.graph.edge_count(), 1);
        assert_eq!(parsed.warnings.len(), 1);
    }

    #[test]
    fn lenient_agrees_on_strict_input() {
        assert_eq!(
            parse(MINIMAL, Strictness::Strict).unwrap(),
            parse(MINIMAL, Strictness::Lenient).unwrap()
        );
    }

    #[test]
    fn render_minimal() {
        let out = parse(MINIMAL, Strictness::Strict).unwrap();
        assert_eq!(
            render(&out).unwrap(),
            "<reasoning>\n<step> A → B </step>\n</reasoning>\n<answer> X </answer>"
        );
    }

    #[test]
    fn render_rejects_unrepresentable() {
        let mut b = ReasoningGraph::builder();
        b.add_node("lonely").unwrap();
        assert_eq!(
            render(&StructuredOutput::new(b.build(), "x")),
            Err(RenderError::NoSteps)
        );
        let mut b = ReasoningGraph::builder();
        b.add_edge("a <b>", "c").unwrap();
        assert!(matches!(
            render(&StructuredOutput::new(b.build(), "x")),
            Err(RenderError::UnrenderableText(_))
        ));
    }

    #[test]
    fn answer_extraction() {
        assert_eq!(extract_answer_lenient(MINIMAL).as_deref(), Some("X"));
        assert_eq!(
            extract_answer_lenient("Let me think.\nSo therefore the answer is B.").as_deref(),
            Some("B.")
        );
        assert_eq!(
            extract_answer_lenient("Answer: 42\nBecause reasons.").as_deref(),
            Some("42")
        );
        assert_eq!(extract_answer_lenient("blah\n\nC\n\n").as_deref(), Some("C"));
        assert_eq!(extract_answer_lenient(""), None);
        assert_eq!(extract_answer_lenient("   \n"), None);
        assert_eq!(
            extract_answer_with_cues("final verdict => yes", &["verdict =>"]).as_deref(),
            Some("yes")
        );
    }
}
