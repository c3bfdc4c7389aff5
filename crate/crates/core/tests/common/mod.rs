//! Seeded generators shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use sgr_core::client::{MockReply, MockRule, MockScript};
use sgr_core::graph::ReasoningGraph;
use sgr_core::merge::{Candidate, CandidateSet};
use sgr_core::pipeline::dataset::SourceQA;
use sgr_core::pipeline::{answers_match, MatchMode};
use sgr_core::StructuredOutput;

/// Fixtures live with the core crate; this module is also compiled into the
/// cli's acceptance target.
pub fn fixture(name: &str) -> PathBuf {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let own = manifest.join("tests/fixtures");
    let dir = if own.is_dir() { own } else { manifest.join("../core/tests/fixtures") };
    dir.join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

const WORDS: &[&str] = &[
    "alice", "Brothers", "sisters", "each", "shares", "the", "same", "count", "3", "4", "+", "=", "&", "premise",
    "therefore", "(given)", "if", "then", "not", "all", "some", "rule", "x", "y", "ratio", "1/2", "50%", "é", "naïve",
    "case:", "option", "B", "'quoted'", "\"dq\"", "a,b", "-", "*", "..."
];

const ANSWERS: &[&str] = &["A", "B", "(C)", "d", "4", "3.5", "-2", "1/3", "yes", "no", "Paris", "twelve apples"];

/// Node text: a few words with irregular spacing and case, plus a unique token.
fn node_text(rng: &mut impl Rng, i: usize) -> String {
    let n = rng.random_range(0..6);
    let mut words: Vec<String> = (0..n).map(|_| WORDS.choose(rng).unwrap().to_string()).collect();
    let token = if rng.random_bool(0.5) { format!("s{i}") } else { format!("STEP{i}") };
    words.insert(rng.random_range(0..=words.len()), token);
    let sep = if rng.random_bool(0.2) { "  " } else { " " };
    let mut text = words.join(sep);
    if rng.random_bool(0.1) {
        text = format!("({text})");
    }
    if rng.random_bool(0.1) {
        text.push('.');
    }
    text
}

/// A valid DAG with `2..=max_nodes` nodes in which every node has an edge.
/// Edges point forward in a random node order, so the graph is acyclic.
/// With `single_sink`, every node but the last in that order gets a child.
pub fn random_graph(rng: &mut impl Rng, max_nodes: usize, single_sink: bool) -> ReasoningGraph {
    let n = rng.random_range(2..=max_nodes.max(2));
    let texts: Vec<String> = (0..n).map(|i| node_text(rng, i)).collect();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for j in 1..n {
        edges.push((rng.random_range(0..j), j));
    }
    for _ in 0..rng.random_range(0..=n / 2) {
        let a = rng.random_range(0..n - 1);
        let b = rng.random_range(a + 1..n);
        edges.push((a, b));
    }
    if single_sink {
        for i in 0..n - 1 {
            if !edges.iter().any(|e| e.0 == i) {
                edges.push((i, rng.random_range(i + 1..n)));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    edges.shuffle(rng);
    let mut b = ReasoningGraph::builder();
    for (p, c) in edges {
        b.add_edge(&texts[p], &texts[c]).unwrap();
    }
    b.build()
}

pub fn random_answer(rng: &mut impl Rng) -> String {
    ANSWERS.choose(rng).unwrap().to_string()
}

pub fn random_output(rng: &mut impl Rng, max_nodes: usize) -> StructuredOutput {
    StructuredOutput::new(random_graph(rng, max_nodes, false), random_answer(rng))
}

const SHARED: &[&str] = &[
    "read the premises", "identify the unknown", "apply rule one", "apply rule two", "compare the options",
    "eliminate option a", "eliminate option c", "compute the total", "check the constraint", "the answer follows",
    "recall the definition", "count the cases",
];

/// Answers drawn from a few equivalence classes under answer matching.
const MERGE_ANSWERS: &[&str] = &["B", "(B)", "b.", "C", "4", "4.0", "four", "Four!"];

/// Up to `max_k` candidates over a shared step vocabulary, so the union
/// overlaps and frequently contains cycles.
pub fn random_candidate_set(rng: &mut impl Rng, max_k: usize) -> CandidateSet {
    let k = rng.random_range(1..=max_k);
    let mut candidates = Vec::new();
    let mut index = 0;
    for _ in 0..k {
        index += rng.random_range(1..=2);
        let size = rng.random_range(2..=8);
        let mut steps: Vec<&str> = SHARED.choose_multiple(rng, size).copied().collect();
        steps.shuffle(rng);
        let mut b = ReasoningGraph::builder();
        for j in 1..steps.len() {
            let p = rng.random_range(0..j);
            b.add_edge(steps[p], steps[j]).unwrap();
            if j >= 2 && rng.random_bool(0.3) {
                let q = rng.random_range(0..j);
                if q != p {
                    b.add_edge(steps[q], steps[j]).unwrap();
                }
            }
        }
        let answer = MERGE_ANSWERS.choose(rng).unwrap();
        candidates.push(Candidate {
            output: StructuredOutput::new(b.build(), *answer),
            source_index: index,
        });
    }
    CandidateSet::new("which option holds?", candidates).unwrap()
}

/// Equivalence classes under answer matching, used to script candidates.
pub const ANSWER_CLASSES: &[&[&str]] = &[
    &["B", "(B)", "b", "Option B"],
    &["C", "c.", "**C**"],
    &["4", "4.0", "4.00"],
    &["7", "7.0"],
    &["Paris", "paris", "PARIS!"],
    &["London"],
];

/// A mock build corpus: questions, a script answering each candidate-graph
/// request by question tag and seed, and per item the scripted candidate
/// answers in sample order (`None` for an unparseable reply).
pub struct ScriptedCorpus {
    pub sources: Vec<SourceQA>,
    pub script: MockScript,
    pub candidate_answers: Vec<Vec<Option<String>>>,
}

pub fn candidate_text(item: usize, sample: usize, answer: &str) -> String {
    let mut steps = vec![
        format!("<step> read item {item} → weigh the evidence for item {item} </step>"),
        format!("<step> weigh the evidence for item {item} → settle item {item} </step>"),
    ];
    if sample % 2 == 1 {
        steps.insert(0, format!("<step> recall the rule for item {item} → weigh the evidence for item {item} </step>"));
    }
    format!("<reasoning>\n{}\n</reasoning>\n<answer> {answer} </answer>", steps.join("\n"))
}

pub fn scripted_corpus(rng: &mut impl Rng, n: usize, k: usize, base_seed: u64) -> ScriptedCorpus {
    let mut sources = Vec::new();
    let mut rules = Vec::new();
    let mut candidate_answers = Vec::new();
    for i in 0..n {
        let tag = format!("[item-{i:04}]");
        let label_class = ANSWER_CLASSES.choose(rng).unwrap();
        sources.push(SourceQA {
            question: format!("{tag} Which option is supported by the passage?"),
            label: label_class.choose(rng).unwrap().to_string(),
            source_id: format!("item-{i:04}"),
        });
        let mut answers = Vec::new();
        for s in 0..k {
            let roll: f64 = rng.random();
            let (reply, answer) = if roll < 0.08 {
                ("no idea, sorry".to_string(), None)
            } else {
                // bias towards the label so both outcomes are common
                let class = if rng.random_bool(0.5) { label_class } else { ANSWER_CLASSES.choose(rng).unwrap() };
                let a = class.choose(rng).unwrap().to_string();
                (candidate_text(i, s, &a), Some(a))
            };
            rules.push(
                MockRule::contains(tag.clone(), vec![MockReply::Text(reply)])
                    .with_prompt("candidate-graph")
                    .with_seed(base_seed + s as u64),
            );
            answers.push(answer);
        }
        candidate_answers.push(answers);
    }
    ScriptedCorpus {
        sources,
        script: MockScript {
            rules,
            ..MockScript::default()
        },
        candidate_answers,
    }
}

/// Majority answer by pairwise support; ties go to the earliest candidate.
pub fn brute_force_majority(answers: &[Option<String>]) -> Option<String> {
    let present: Vec<&String> = answers.iter().flatten().collect();
    let support = |a: &str| present.iter().filter(|b| answers_match(b, a, MatchMode::Auto)).count();
    let best = present.iter().map(|a| support(a)).max()?;
    present.iter().find(|a| support(a) == best).map(|a| a.to_string())
}

/// Items `[name-i]` whose labels alternate between "A" and "4"; the first
/// `correct` get a reply with the right answer, the rest a wrong one.
pub fn eval_fixture(
    benchmark: &str,
    n: usize,
    correct: usize,
    reply: impl Fn(&str) -> String,
) -> (Vec<sgr_core::bench::BenchmarkItem>, Vec<MockRule>) {
    let mut items = Vec::new();
    let mut rules = Vec::new();
    for i in 0..n {
        let tag = format!("[{benchmark}-{i}]");
        let label = if i % 2 == 0 { "A" } else { "4" };
        let wrong = if i % 2 == 0 { "C" } else { "5" };
        let answer = if i < correct { label } else { wrong };
        items.push(sgr_core::bench::BenchmarkItem {
            question: format!("{tag} question text"),
            label: label.to_string(),
            benchmark: benchmark.to_string(),
            item_id: format!("{benchmark}-{i}"),
        });
        rules.push(MockRule::contains(tag, vec![MockReply::Text(reply(answer))]));
    }
    (items, rules)
}

/// Broken variants of a valid completion, each with whether its `<answer>`
/// tag still carries the original answer (the answer reward is independent
/// of the template).
pub fn template_mutations(valid: &str) -> Vec<(&'static str, String, bool)> {
    let first_step = valid.find("<step>").unwrap();
    let first_step_end = valid.find("</step>").unwrap() + "</step>".len();
    let step = &valid[first_step..first_step_end];
    vec![
        ("drop-reasoning-open", valid.replacen("<reasoning>", "", 1), true),
        ("drop-reasoning-close", valid.replacen("</reasoning>", "", 1), true),
        ("drop-answer-close", valid.replacen("</answer>", "", 1), false),
        ("drop-answer-block", valid[..valid.find("<answer>").unwrap()].to_string(), false),
        ("empty-answer", format!("{}<answer>  </answer>", &valid[..valid.find("<answer>").unwrap()]), false),
        ("arrow-removed", valid.replacen(" → ", " then ", 1), true),
        ("two-arrows", valid.replacen(" → ", " → x → ", 1), true),
        ("empty-parent", valid.replacen(step, "<step> → orphan </step>", 1), true),
        ("empty-child", valid.replacen(step, "<step> orphan → </step>", 1), true),
        ("unterminated-step", valid.replacen("</step>", "", 1), true),
        ("prose-inside-reasoning", valid.replacen("<reasoning>", "<reasoning>\nLet me think.", 1), true),
        ("leading-prose", format!("Here is my reasoning.\n{valid}"), true),
        ("trailing-prose", format!("{valid}\nHope this helps!"), true),
        ("prose-before-answer", valid.replacen("</reasoning>", "</reasoning>\nSo:", 1), true),
        ("duplicate-step", valid.replacen(step, &format!("{step}\n{step}"), 1), true),
        ("self-loop", valid.replacen(step, "<step> loop → loop </step>", 1), true),
        ("cycle", valid.replacen("</reasoning>", "<step> Conclusion that each brother sees 4 sisters → Read the question: Alice has 4 brothers and 3 sisters </step>\n</reasoning>", 1), true),
        ("no-steps", format!("<reasoning>\n</reasoning>\n{}", &valid[valid.find("<answer>").unwrap()..]), true),
        ("uppercase-tags", valid.replace("<step>", "<STEP>").replace("</step>", "</STEP>"), true),
        ("answer-first", format!("{}\n{}", &valid[valid.find("<answer>").unwrap()..], &valid[..valid.find("<answer>").unwrap()]), true),
    ]
}
