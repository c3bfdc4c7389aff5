mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sgr_core::template::{self, ParseErrorKind, Strictness};
use sgr_core::{parse, render};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn strict_round_trip(seed in any::<u64>()) {
        let x = common::random_output(&mut ChaCha8Rng::seed_from_u64(seed), 50);
        let text = render(&x).unwrap();
        let back = parse(&text, Strictness::Strict).unwrap();
        prop_assert_eq!(&back, &x);
        for node in x.graph.nodes() {
            prop_assert_eq!(back.graph.text_of(&node.id), node.text.trim());
        }
        // rendering is canonical: a second trip yields the same bytes
        prop_assert_eq!(render(&back).unwrap(), text);
    }

    #[test]
    fn lenient_accepts_what_strict_accepts(seed in any::<u64>(), prose in "[a-zA-Z ,.!]{0,40}") {
        let x = common::random_output(&mut ChaCha8Rng::seed_from_u64(seed), 12);
        let text = render(&x).unwrap();
        prop_assert_eq!(&parse(&text, Strictness::Lenient).unwrap(), &x);
        let wrapped = format!("{prose}\n{text}\n{prose}");
        prop_assert_eq!(&parse(&wrapped, Strictness::Lenient).unwrap(), &x);
    }

    #[test]
    fn parser_never_panics(text in "(<reasoning>|</reasoning>|<step>|</step>|<answer>|</answer>|→|->|[a-c ]|\n){0,30}") {
        for s in [Strictness::Strict, Strictness::Lenient] {
            if let Err(e) = parse(&text, s) {
                prop_assert!(e.location <= text.chars().count());
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Step {
    Ab,
    Ba,
    Bc,
    SelfLoop,
    NoArrow,
    EmptyParent,
}

impl Step {
    const ALL: [Step; 6] = [Step::Ab, Step::Ba, Step::Bc, Step::SelfLoop, Step::NoArrow, Step::EmptyParent];

    fn text(self) -> &'static str {
        match self {
            Step::Ab => "<step> a → b </step>",
            Step::Ba => "<step> B -> A </step>",
            Step::Bc => "<step> b → c </step>",
            Step::SelfLoop => "<step> a → a </step>",
            Step::NoArrow => "<step> a then b </step>",
            Step::EmptyParent => "<step> → b </step>",
        }
    }

    fn edge(self) -> Option<(char, char)> {
        match self {
            Step::Ab => Some(('a', 'b')),
            Step::Ba => Some(('b', 'a')),
            Step::Bc => Some(('b', 'c')),
            Step::SelfLoop => Some(('a', 'a')),
            _ => None,
        }
    }
}

/// Outcome predicted from how a document was assembled.
fn expected(
    prose: bool,
    reasoning: bool,
    steps: &[Step],
    answer: Option<&str>,
    tail: bool,
    strict: bool,
) -> Result<(usize, usize), ParseErrorKind> {
    use ParseErrorKind::*;
    if !reasoning {
        return Err(MissingReasoningBlock);
    }
    if prose && strict {
        return Err(TrailingGarbage);
    }
    let mut edges: Vec<(char, char)> = Vec::new();
    for step in steps {
        match step {
            Step::NoArrow => return Err(MalformedStep),
            Step::EmptyParent => return Err(EmptyEndpoint),
            s => {
                let e = s.edge().unwrap();
                if edges.contains(&e) {
                    if strict {
                        return Err(DuplicateStep);
                    }
                } else {
                    edges.push(e);
                }
            }
        }
    }
    if steps.is_empty() {
        return Err(MalformedStep);
    }
    match answer {
        None => return Err(MissingAnswerBlock),
        Some(a) if a.trim().is_empty() => return Err(MissingAnswerBlock),
        _ => {}
    }
    if tail && strict {
        return Err(TrailingGarbage);
    }
    let cyclic = edges.iter().any(|(p, c)| p == c) || (edges.contains(&('a', 'b')) && edges.contains(&('b', 'a')));
    if cyclic {
        return Err(CycleInSteps);
    }
    let nodes: HashSet<char> = edges.iter().flat_map(|(p, c)| [*p, *c]).collect();
    Ok((nodes.len(), edges.len()))
}

#[test]
fn grammar_oracle_small_documents() {
    let mut step_lists: Vec<Vec<Step>> = vec![vec![]];
    for a in Step::ALL {
        step_lists.push(vec![a]);
        for b in Step::ALL {
            step_lists.push(vec![a, b]);
        }
    }
    let mut checked = 0;
    for prose in [false, true] {
        for reasoning in [false, true] {
            for steps in &step_lists {
                if !reasoning && !steps.is_empty() {
                    continue;
                }
                for answer in [None, Some("  "), Some(" 4 ")] {
                    for tail in [false, true] {
                        let mut doc = String::new();
                        if prose {
                            doc.push_str("Here is my reasoning.\n");
                        }
                        if reasoning {
                            doc.push_str("<reasoning>\n");
                            for s in steps {
                                doc.push_str(s.text());
                                doc.push('\n');
                            }
                            doc.push_str("</reasoning>\n");
                        }
                        if let Some(a) = answer {
                            doc.push_str(&format!("<answer>{a}</answer>"));
                        }
                        if tail {
                            doc.push_str("\nHope this helps");
                        }
                        for strict in [true, false] {
                            let mode = if strict { Strictness::Strict } else { Strictness::Lenient };
                            let want = expected(prose, reasoning, steps, answer, tail, strict);
                            let got = parse(&doc, mode)
                                .map(|o| (o.graph.node_count(), o.graph.edge_count()))
                                .map_err(|e| e.kind);
                            assert_eq!(got, want, "mode {mode:?} on {doc:?}");
                            checked += 1;
                        }
                    }
                }
            }
        }
    }
    assert!(checked > 1000, "{checked}");
}

#[test]
fn error_locations_are_char_offsets() {
    let doc = "<reasoning>\n<step> é → ü </step>\n<step> ü ⇒ x </step>\n</reasoning>\n<answer> 1 </answer>";
    let err = parse(doc, Strictness::Strict).unwrap_err();
    assert_eq!(err.kind, ParseErrorKind::MalformedStep);
    let expected = doc.find("<step> ü ⇒").map(|b| doc[..b].chars().count()).unwrap();
    assert_eq!(err.location, expected);
}

#[test]
fn step_count_counts_duplicates_in_lenient_mode() {
    let doc = "<reasoning><step> a → b </step><step> A -> B </step></reasoning><answer> x </answer>";
    let parsed = template::parse_detailed(doc, Strictness::Lenient).unwrap();
    assert_eq!(parsed.output.graph.edge_count(), 1);
    assert_eq!(parsed.output.step_count, 2);
    assert_eq!(parsed.warnings.len(), 1);
}
