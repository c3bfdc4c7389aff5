mod common;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use sgr_core::bench::{self, Benchmark, EvalConfig, EvalError, EvalReport, Paradigm};
use sgr_core::client::{ClientOptions, MockBackend, MockReply, MockRule, MockScript, ModelClient, RetryPolicy};

fn client(rules: Vec<MockRule>) -> ModelClient {
    ModelClient::new(
        Arc::new(MockBackend::new(MockScript {
            rules,
            ..MockScript::default()
        })),
        ClientOptions {
            retry: RetryPolicy {
                max_attempts: 2,
                base_delay: Duration::from_millis(1),
                jitter: 0.0,
            },
            ..ClientOptions::default()
        },
    )
}

fn prose(answer: &str) -> String {
    format!("Let me think about it.\nThe answer is {answer}.")
}

async fn run(items: &[bench::BenchmarkItem], rules: Vec<MockRule>, paradigm: Paradigm) -> EvalReport {
    bench::evaluate(items, paradigm, &client(rules), &EvalConfig::default()).await.unwrap()
}

#[tokio::test]
async fn accuracy_is_correct_over_n() {
    let (items, rules) = common::eval_fixture("aiw", 4, 3, prose);
    let report = run(&items, rules, Paradigm::Direct).await;
    assert_eq!(report.benchmarks[0].accuracy, 0.75);
    assert_eq!(report.records.iter().filter(|r| r.correct).count(), 3);

    let (items, rules) = common::eval_fixture("aiw", 6, 6, prose);
    assert_eq!(run(&items, rules, Paradigm::Linear).await.overall, 1.0);
}

#[tokio::test]
async fn reports_are_reproducible_byte_for_byte() {
    let (items, rules) = common::eval_fixture("logiqa", 20, 13, prose);
    let a = bench::report_render(&run(&items, rules.clone(), Paradigm::Direct).await);
    let b = bench::report_render(&run(&items, rules, Paradigm::Direct).await);
    assert_eq!(a, b);
    assert!(a.0.lines().any(|l| l.starts_with("logiqa") && l.ends_with("65.00")), "{}", a.0);
}

#[tokio::test]
async fn self_graph_records_carry_graph_size() {
    let case = common::read_fixture("case_study.txt");
    let (items, rules) = common::eval_fixture("aiw", 2, 2, |answer| {
        if answer == "4" {
            case.clone()
        } else {
            format!("<reasoning>\n<step> read → decide {answer} </step>\n</reasoning>\n<answer> {answer} </answer>")
        }
    });
    let report = run(&items, rules, Paradigm::SelfGraph).await;
    let r = &report.records[1];
    assert_eq!((r.graph_nodes, r.graph_edges), (Some(9), Some(8)));
    assert_eq!(r.extracted_answer.as_deref(), Some("4"));
    assert!(report.records.iter().all(|r| r.correct));
    // the lenient extractor agrees on templated replies
    for r in &report.records {
        assert_eq!(sgr_core::template::extract_answer_lenient(&r.prediction), r.extracted_answer);
    }
}

#[tokio::test]
async fn transport_failures_count_as_flagged_errors() {
    let (items, mut rules) = common::eval_fixture("medqa", 3, 3, prose);
    rules[1] = MockRule::contains("[medqa-1]", vec![MockReply::Status(503)]);
    let report = run(&items, rules, Paradigm::Direct).await;
    let b = &report.benchmarks[0];
    assert_eq!((b.n, b.correct, b.errors), (3, 2, 1));
    assert!(report.records[1].error.as_deref().unwrap().contains("503"));
    assert!(!report.records[1].correct);
}

#[tokio::test]
async fn overall_is_the_unweighted_mean() {
    let (mut items, mut rules) = common::eval_fixture("aiw", 4, 4, prose);
    let (more, more_rules) = common::eval_fixture("mathqa", 10, 5, prose);
    items.extend(more);
    rules.extend(more_rules);
    let report = run(&items, rules, Paradigm::Direct).await;
    assert_eq!(report.benchmarks.len(), 2);
    assert_eq!(report.overall, 0.75);
    let (table, json) = bench::report_render(&report);
    assert!(table.lines().last().unwrap().ends_with("75.00"));
    let back: EvalReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
}

#[tokio::test]
async fn empty_input_is_refused() {
    let err = bench::evaluate(&[], Paradigm::Direct, &client(vec![]), &EvalConfig::default()).await.unwrap_err();
    assert!(matches!(err, EvalError::Empty));
}

#[test]
fn reingestion_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("test.txt");
    let lines: Vec<String> = (0..5)
        .map(|i| format!(r#"{{"id": {i}, "answer": {}, "text": "ctx {i}", "question": "q {i}", "options": ["w", "x", "y", "z"]}}"#, i % 4))
        .collect();
    std::fs::write(&path, lines.join("\n")).unwrap();
    let a = bench::ingest(Benchmark::LogiQa, std::slice::from_ref(&path)).unwrap();
    let b = bench::ingest(Benchmark::LogiQa, &[path]).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.iter().map(|i| i.label.as_str()).collect::<Vec<_>>(), ["A", "B", "C", "D", "A"]);
}

/// Upstream files live under `$SGR_BENCH_DATA/<benchmark>/`. Benchmarks
/// without a directory are skipped.
#[test]
fn published_counts_when_data_is_present() {
    let Some(root) = std::env::var_os("SGR_BENCH_DATA").map(PathBuf::from) else {
        eprintln!("SGR_BENCH_DATA not set; skipping");
        return;
    };
    for b in Benchmark::ALL {
        let Some(expected) = b.expected_count() else { continue };
        let dir = root.join(b.name());
        let Ok(entries) = std::fs::read_dir(&dir) else {
            eprintln!("{}: no data; skipping", b.name());
            continue;
        };
        let mut files: Vec<PathBuf> = entries.map(|e| e.unwrap().path()).filter(|p| p.is_file()).collect();
        files.sort();
        assert_eq!(bench::ingest(b, &files).unwrap().len(), expected, "{}", b.name());
    }
}
