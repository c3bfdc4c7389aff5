use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sgr_core::bench::{self, Benchmark, BenchmarkItem, EvalConfig};
use sgr_core::client::{
    Backend, ClientOptions, HttpBackend, MockBackend, MockScript, ModelClient, ResponseCache, RetryPolicy,
};
use sgr_core::merge::{self, Candidate, CandidateSet};
use sgr_core::pipeline::dataset::{self, BuildConfig, SourceQA};
use sgr_core::template::{self, Strictness};
use sgr_core::{dot, io, prompts, reward};

use crate::config::{ConfigError, RunConfig};

/// Scripted backends need no real back-off.
const MOCK_RETRY_DELAY: Duration = Duration::from_millis(5);

pub fn client(config: &RunConfig) -> anyhow::Result<ModelClient> {
    let mut retry = RetryPolicy {
        max_attempts: config.retry_cap,
        ..RetryPolicy::default()
    };
    let backend: Arc<dyn Backend> = match (&config.mock, &config.endpoint) {
        (Some(script), _) => {
            let script = MockScript::load(script).map_err(|e| ConfigError {
                field: "mock",
                message: e.to_string(),
            })?;
            retry.base_delay = MOCK_RETRY_DELAY;
            Arc::new(MockBackend::new(script))
        }
        (None, Some(endpoint)) => Arc::new(HttpBackend::from_env(
            endpoint.clone(),
            &config.credential_env,
            config.timeout,
        )?),
        (None, None) => {
            return Err(ConfigError {
                field: "endpoint",
                message: "required unless --mock is given".into(),
            }
            .into())
        }
    };
    let cache = match &config.cache_dir {
        Some(dir) => Some(ResponseCache::open(dir).map_err(|e| ConfigError {
            field: "cache_dir",
            message: format!("{}: {e}", dir.display()),
        })?),
        None => None,
    };
    Ok(ModelClient::new(
        backend,
        ClientOptions {
            retry,
            concurrency: config.concurrency,
            cache,
        },
    ))
}

/// `(name, text)` documents in a file: JSONL records or one bare template.
fn documents(path: &Path) -> anyhow::Result<Vec<(String, String)>> {
    let is_jsonl = path.extension().is_some_and(|e| e == "jsonl");
    if !is_jsonl {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let name = path.file_stem().map_or("document".into(), |s| s.to_string_lossy().into_owned());
        return Ok(vec![(name, text)]);
    }
    let records: Vec<Value> = io::read_jsonl(path)?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, record)| {
            let text = ["graph_reasoning", "completion", "text"]
                .iter()
                .find_map(|k| record.get(*k).and_then(Value::as_str))
                .with_context(|| {
                    format!("{}: record {} has no graph_reasoning/completion/text field", path.display(), i + 1)
                })?;
            Ok((format!("record-{:04}", i + 1), text.to_string()))
        })
        .collect()
}

pub fn validate(path: &Path) -> anyhow::Result<ExitCode> {
    let mut failures = 0;
    for (name, text) in documents(path)? {
        match template::parse_detailed(&text, Strictness::Strict) {
            Ok(parsed) => {
                let graph = &parsed.output.graph;
                let diagnostics = graph.validate();
                println!(
                    "{name}: {} nodes, {} edges, {} errors",
                    graph.node_count(),
                    graph.edge_count(),
                    diagnostics.errors.len()
                );
                for w in diagnostics.warnings.iter().map(ToString::to_string).chain(parsed.warnings) {
                    println!("  warning: {w}");
                }
                if !diagnostics.is_valid() {
                    failures += 1;
                    for e in &diagnostics.errors {
                        println!("  error: {e}");
                    }
                }
            }
            Err(e) => {
                failures += 1;
                println!("{name}: invalid: {e}");
            }
        }
    }
    Ok(if failures == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

pub fn viz(path: &Path, out: &Path) -> anyhow::Result<ExitCode> {
    let mut failures = 0;
    for (name, text) in documents(path)? {
        let parsed = match template::parse(&text, Strictness::Lenient) {
            Ok(p) => p,
            Err(e) => {
                failures += 1;
                eprintln!("{name}: skipped: {e}");
                continue;
            }
        };
        let dot = dot::export_dot(&parsed.graph, Some(&parsed.answer))?;
        let target = out.join(format!("{name}.dot"));
        io::write_atomic(&target, dot.as_bytes())?;
        println!("{}", target.display());
    }
    Ok(if failures == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

/// One sampled candidate, as written by `sample` and read by `merge`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub source_id: String,
    pub question: String,
    pub label: String,
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn read_sources(path: &Path) -> anyhow::Result<Vec<SourceQA>> {
    let mut sources = dataset::read_sources(path)?;
    for (i, s) in sources.iter_mut().enumerate() {
        if s.source_id.is_empty() {
            s.source_id = format!("item-{i}");
        }
    }
    Ok(sources)
}

pub async fn sample(config: &RunConfig, input: &Path, out: &Path) -> anyhow::Result<ExitCode> {
    let client = client(config)?;
    let sources = read_sources(input)?;
    let sampling = config.sampling();
    let mut records = Vec::new();
    for source in &sources {
        let result = client
            .sample_trajectories(&source.question, &sampling, &prompts::CANDIDATE_GRAPH)
            .await;
        let record = |index, completion, error| CandidateRecord {
            source_id: source.source_id.clone(),
            question: source.question.clone(),
            label: source.label.clone(),
            index,
            completion,
            error,
        };
        let mut batch: Vec<CandidateRecord> = match result {
            Ok(t) => t
                .texts
                .into_iter()
                .map(|(i, text)| record(i, Some(text), None))
                .chain(t.errors.into_iter().map(|e| record(e.index, None, Some(e.error))))
                .collect(),
            Err(sgr_core::client::ClientError::AllFailed(errors)) => {
                errors.into_iter().map(|e| record(e.index, None, Some(e.error))).collect()
            }
            Err(e) => return Err(e.into()),
        };
        batch.sort_by_key(|r| r.index);
        records.extend(batch);
    }
    io::write_jsonl(out, &records)?;
    println!(
        "{} questions, {} candidates, {} failed samples",
        sources.len(),
        records.iter().filter(|r| r.completion.is_some()).count(),
        records.iter().filter(|r| r.error.is_some()).count()
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct MergeRecord {
    source_id: String,
    question: String,
    label: String,
    graph_reasoning: String,
    answer: String,
    contributing_indices: Vec<usize>,
    merge_mode: String,
    fallback: bool,
    dropped_edges: usize,
    pruned_nodes: usize,
}

pub async fn merge(config: &RunConfig, input: &Path, out: &Path) -> anyhow::Result<ExitCode> {
    let records: Vec<CandidateRecord> = io::read_jsonl(input)?;
    // group by source, keeping first-appearance order
    let mut groups: Vec<(String, Vec<CandidateRecord>)> = Vec::new();
    for r in records {
        match groups.iter_mut().find(|(id, _)| *id == r.source_id) {
            Some((_, g)) => g.push(r),
            None => groups.push((r.source_id.clone(), vec![r])),
        }
    }
    let client = client(config)?;
    let sampling = config.sampling();
    let mut merged_records = Vec::new();
    let mut failures = 0;
    for (source_id, mut group) in groups {
        group.sort_by_key(|r| r.index);
        let candidates: Vec<Candidate> = group
            .iter()
            .filter_map(|r| {
                let text = r.completion.as_deref()?;
                let output = template::parse(text, Strictness::Strict)
                    .or_else(|_| template::parse(text, Strictness::Lenient))
                    .ok()?;
                Some(Candidate {
                    output,
                    source_index: r.index,
                })
            })
            .collect();
        let first = &group[0];
        let result = match CandidateSet::new(first.question.clone(), candidates) {
            Ok(set) => merge::merge(&set, config.merge_mode, &client, &sampling).await,
            Err(e) => Err(e),
        };
        let merged = match result {
            Ok(m) => m,
            Err(e) => {
                failures += 1;
                eprintln!("{source_id}: merge failed: {e}");
                continue;
            }
        };
        let graph_reasoning = match template::render(&merged.to_output()) {
            Ok(text) => text,
            Err(e) => {
                failures += 1;
                eprintln!("{source_id}: merged graph not renderable: {e}");
                continue;
            }
        };
        merged_records.push(MergeRecord {
            source_id,
            question: first.question.clone(),
            label: first.label.clone(),
            graph_reasoning,
            answer: merged.answer,
            contributing_indices: merged.contributing_indices,
            merge_mode: merged.mode.as_str().to_string(),
            fallback: merged.fallback,
            dropped_edges: merged.dropped_edges.len(),
            pruned_nodes: merged.pruned_nodes.len(),
        });
    }
    io::write_jsonl(out, &merged_records)?;
    println!("{} merged, {failures} failed", merged_records.len());
    Ok(if failures == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

pub async fn build(config: &RunConfig, input: &Path, out: &Path) -> anyhow::Result<ExitCode> {
    let client = client(config)?;
    let sources = dataset::read_sources(input)?;
    let build_config = BuildConfig {
        sampling: config.sampling(),
        merge_mode: config.merge_mode,
        split_seed: config.split_seed,
        concurrency: config.concurrency,
    };
    let output = dataset::build_dataset(sources, &build_config, &client).await?;
    dataset::write_outputs(out, &output)?;
    let r = &output.report;
    println!(
        "{} in, {} retained, {} discarded; train {}, valid {}",
        r.total_in,
        r.retained,
        r.discarded(),
        r.split_sizes.train,
        r.split_sizes.valid
    );
    for (reason, n) in r.discarded_by_reason.iter().filter(|(_, n)| **n > 0) {
        println!("  {reason}: {n}");
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_bench(name: &str) -> Result<Benchmark, ConfigError> {
    name.parse().map_err(|message| ConfigError { field: "bench", message })
}

pub fn ingest(bench_name: &str, files: &[PathBuf], out: &Path) -> anyhow::Result<ExitCode> {
    let benchmark = parse_bench(bench_name)?;
    let items = bench::ingest(benchmark, files)?;
    io::write_jsonl(out, &items)?;
    match benchmark.expected_count() {
        Some(expected) if expected != items.len() => {
            println!("{benchmark}: {} items (published evaluation split has {expected})", items.len())
        }
        _ => println!("{benchmark}: {} items", items.len()),
    }
    Ok(ExitCode::SUCCESS)
}

pub async fn eval(
    config: &RunConfig,
    bench_name: Option<&str>,
    data: &[PathBuf],
    items_path: Option<&Path>,
    out: &Path,
) -> anyhow::Result<ExitCode> {
    let items: Vec<BenchmarkItem> = match (items_path, bench_name) {
        (Some(path), name) => {
            let items: Vec<BenchmarkItem> = io::read_jsonl(path)?;
            match name {
                Some(n) => {
                    let b = parse_bench(n)?;
                    items.into_iter().filter(|i| i.benchmark == b.name()).collect()
                }
                None => items,
            }
        }
        (None, Some(name)) if !data.is_empty() => bench::ingest(parse_bench(name)?, data)?,
        _ => {
            return Err(ConfigError {
                field: "bench",
                message: "give --items FILE, or --bench NAME with --data FILE...".into(),
            }
            .into())
        }
    };
    if items.is_empty() {
        bail!("no items to evaluate");
    }
    let client = client(config)?;
    let eval_config = EvalConfig {
        sampling: config.sampling(),
        concurrency: config.concurrency,
    };
    let report = bench::evaluate(&items, config.paradigm, &client, &eval_config).await?;
    let (table, json) = bench::report_render(&report);
    io::write_atomic(&out.join("report.txt"), table.as_bytes())?;
    io::write_atomic(&out.join("report.json"), json.as_bytes())?;
    io::write_jsonl(&out.join("records.jsonl"), &report.records)?;
    print!("{table}");
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Deserialize)]
struct CompletionLine {
    completion: String,
    #[serde(default)]
    label: Option<String>,
}

fn read_labels(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let line = line.trim();
            if line.starts_with('{') {
                let v: Value = serde_json::from_str(line)?;
                v.get("label")
                    .and_then(|l| l.as_str().map(str::to_string).or_else(|| Some(l.to_string())))
                    .context("label record without a `label` field")
            } else {
                Ok(line.to_string())
            }
        })
        .collect()
}

pub fn score(config: &RunConfig, completions: &Path, labels: Option<&Path>, out: &Path) -> anyhow::Result<ExitCode> {
    let lines: Vec<CompletionLine> = io::read_jsonl(completions)?;
    let labels: Vec<String> = match labels {
        Some(path) => read_labels(path)?,
        None => lines
            .iter()
            .enumerate()
            .map(|(i, l)| {
                l.label
                    .clone()
                    .with_context(|| format!("completion {} has no label and --labels was not given", i + 1))
            })
            .collect::<anyhow::Result<_>>()?,
    };
    let texts: Vec<&str> = lines.iter().map(|l| l.completion.as_str()).collect();
    let scores = reward::score_batch(&texts, &labels, config.weights)?;
    io::write_jsonl(out, &scores)?;
    let n = scores.len().max(1) as f64;
    println!(
        "{} scored; mean format {:.4}, mean answer {:.4}",
        scores.len(),
        scores.iter().map(|s| f64::from(s.format_reward)).sum::<f64>() / n,
        scores.iter().map(|s| f64::from(s.answer_reward)).sum::<f64>() / n
    );
    Ok(ExitCode::SUCCESS)
}
