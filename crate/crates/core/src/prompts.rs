//! Prompt templates for candidate generation, integration and evaluation.
//!
//! Templates use `{name}` placeholders filled by [`PromptTemplate::render`].

/// A system prompt plus a user prompt with placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    /// Short identifier; mock fixtures can match on it.
    pub name: &'static str,
    pub system: &'static str,
    pub user: &'static str,
}

impl PromptTemplate {
    /// Returns `(system, user)` with every `{key}` replaced.
    pub fn render(&self, vars: &[(&str, &str)]) -> (String, String) {
        let fill = |template: &str| {
            let mut out = template.to_string();
            for (key, value) in vars {
                out = out.replace(&format!("{{{key}}}"), value);
            }
            out
        };
        (fill(self.system), fill(self.user))
    }
}

const FORMAT_RULES: &str = "Write your answer in exactly this format and nothing else:\n\
<reasoning>\n\
<step> premise or intermediate step → step that depends on it </step>\n\
...\n\
</reasoning>\n\
<answer> final answer </answer>\n\
\n\
Rules:\n\
- Each <step> holds exactly one dependency written as `parent → child`.\n\
- A node is one short atomic reasoning step. Reuse the exact same wording when a node appears in several steps.\n\
- Every node must be justified by its parent nodes. Several parents may feed one child.\n\
- The graph must be acyclic and should converge on a single conclusion node.\n\
- Node text must not contain arrows or angle brackets.\n\
- For multiple-choice questions the answer is the option letter only.";

/// Samples one candidate reasoning graph for a question.
pub const CANDIDATE_GRAPH: PromptTemplate = PromptTemplate {
    name: "candidate-graph",
    system: "You are an expert reasoner. You solve questions by building an explicit reasoning graph whose nodes are atomic reasoning steps and whose edges are logical dependencies.",
    user: "Question:\n{question}\n\nBuild a reasoning graph that leads to the answer. Explore your own line of reasoning; independent sub-problems may form parallel branches that later converge.\n\n{format}",
};

/// Integrates several candidate graphs into one.
pub const INTEGRATION: PromptTemplate = PromptTemplate {
    name: "integration",
    system: "You are an expert reasoner who consolidates several candidate reasoning graphs for the same question into a single, logically consistent reasoning graph.",
    user: "Question:\n{question}\n\nCandidate reasoning graphs:\n{candidates}\n\nIntegrate the candidates into one reasoning graph. Keep steps that are correct and supported, merge steps that say the same thing, drop fragmented or unsupported paths, and make the graph converge on the conclusion that answers the question.\n\n{format}",
};

/// Appended to the integration prompt when the first reply failed to parse.
pub const REPAIR_SUFFIX: &str = "\n\nYour previous reply could not be parsed ({error}). Reply again using only the required format: one `parent → child` dependency per <step>, no cycles, no text outside the two blocks.";

/// Baseline: answer directly.
pub const DIRECT: PromptTemplate = PromptTemplate {
    name: "direct",
    system: "You are a helpful assistant that answers questions accurately.",
    user: "{question}\n\nGive only the final answer. For multiple-choice questions reply with the option letter. End with a line of the form `The answer is X.`",
};

/// Baseline: linear chain-of-thought.
pub const LINEAR: PromptTemplate = PromptTemplate {
    name: "linear",
    system: "You are a helpful assistant that answers questions accurately.",
    user: "{question}\n\nThink step by step, then give the final answer. For multiple-choice questions the final answer is the option letter. End with a line of the form `The answer is X.`",
};

/// Graph-first answering: externalize the reasoning graph, then answer.
pub const SELF_GRAPH: PromptTemplate = PromptTemplate {
    name: "self-graph",
    system: "You are an expert reasoner. Before answering, you externalize your reasoning as an explicit graph of atomic reasoning steps connected by logical dependencies.",
    user: "Question:\n{question}\n\n{format}",
};

pub fn format_rules() -> &'static str {
    FORMAT_RULES
}
