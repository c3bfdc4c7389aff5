use std::fmt;
use std::str::FromStr;

use futures::{StreamExt, TryStreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ingest::BenchmarkItem;
use crate::client::{ClientError, CompletionRequest, ModelClient, SamplingConfig, DEFAULT_CONCURRENCY};
use crate::pipeline::{answers_match, MatchMode};
use crate::prompts::{self, PromptTemplate};
use crate::template::{self, Strictness};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    Empty,
    #[error(transparent)]
    Client(#[from] ClientError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Paradigm {
    Direct,
    Linear,
    #[default]
    SelfGraph,
}

impl Paradigm {
    pub fn template(self) -> &'static PromptTemplate {
        match self {
            Paradigm::Direct => &prompts::DIRECT,
            Paradigm::Linear => &prompts::LINEAR,
            Paradigm::SelfGraph => &prompts::SELF_GRAPH,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Paradigm::Direct => "direct",
            Paradigm::Linear => "linear",
            Paradigm::SelfGraph => "self-graph",
        }
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Paradigm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "direct" | "da" => Ok(Paradigm::Direct),
            "linear" | "lr" | "cot" => Ok(Paradigm::Linear),
            "self-graph" | "selfgraph" | "sgr" => Ok(Paradigm::SelfGraph),
            _ => Err(format!("unknown paradigm {s:?} (expected direct, linear or self-graph)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Temperature is forced to 0 and k to 1 at request time.
    pub sampling: SamplingConfig,
    /// Items evaluated concurrently. The client bounds requests separately.
    pub concurrency: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            sampling: SamplingConfig::default().greedy(),
            concurrency: DEFAULT_CONCURRENCY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub benchmark: String,
    pub item_id: String,
    pub paradigm: Paradigm,
    /// Raw completion; empty when the request failed.
    pub prediction: String,
    pub extracted_answer: Option<String>,
    pub label: String,
    pub correct: bool,
    /// Transport failure after retries. Such items count as incorrect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_edges: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkScore {
    pub benchmark: String,
    pub n: usize,
    pub correct: usize,
    pub errors: usize,
    /// Exactly `correct / n`.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub paradigm: Paradigm,
    pub benchmarks: Vec<BenchmarkScore>,
    /// Unweighted mean of the per-benchmark accuracies.
    pub overall: f64,
    pub records: Vec<ItemRecord>,
}

impl EvalReport {
    /// Aggregates records; benchmarks appear in first-seen order.
    pub fn from_records(paradigm: Paradigm, records: Vec<ItemRecord>) -> Result<Self, EvalError> {
        if records.is_empty() {
            return Err(EvalError::Empty);
        }
        let mut benchmarks: Vec<BenchmarkScore> = Vec::new();
        for r in &records {
            let score = match benchmarks.iter_mut().position(|b| b.benchmark == r.benchmark) {
                Some(i) => &mut benchmarks[i],
                None => {
                    benchmarks.push(BenchmarkScore {
                        benchmark: r.benchmark.clone(),
                        n: 0,
                        correct: 0,
                        errors: 0,
                        accuracy: 0.0,
                    });
                    benchmarks.last_mut().expect("just pushed")
                }
            };
            score.n += 1;
            score.correct += usize::from(r.correct);
            score.errors += usize::from(r.error.is_some());
        }
        for b in &mut benchmarks {
            b.accuracy = b.correct as f64 / b.n as f64;
        }
        let overall = benchmarks.iter().map(|b| b.accuracy).sum::<f64>() / benchmarks.len() as f64;
        Ok(Self {
            paradigm,
            benchmarks,
            overall,
            records,
        })
    }

    /// Joins reports for separate benchmarks into one.
    pub fn combine(reports: Vec<EvalReport>) -> Result<Self, EvalError> {
        let paradigm = reports.first().ok_or(EvalError::Empty)?.paradigm;
        let records = reports.into_iter().flat_map(|r| r.records).collect();
        Self::from_records(paradigm, records)
    }
}

/// Answer plus graph size, if the completion carried a parseable graph.
pub fn extract(paradigm: Paradigm, completion: &str) -> (Option<String>, Option<(usize, usize)>) {
    if paradigm == Paradigm::SelfGraph {
        for strictness in [Strictness::Strict, Strictness::Lenient] {
            if let Ok(out) = template::parse(completion, strictness) {
                return (Some(out.answer), Some((out.graph.node_count(), out.graph.edge_count())));
            }
        }
    }
    (template::extract_answer_lenient(completion), None)
}

async fn evaluate_item(
    item: &BenchmarkItem,
    paradigm: Paradigm,
    client: &ModelClient,
    sampling: &SamplingConfig,
) -> Result<ItemRecord, EvalError> {
    let request = CompletionRequest::from_template(
        paradigm.template(),
        &[("question", &item.question), ("format", prompts::format_rules())],
        sampling.clone(),
    );
    let mut record = ItemRecord {
        benchmark: item.benchmark.clone(),
        item_id: item.item_id.clone(),
        paradigm,
        prediction: String::new(),
        extracted_answer: None,
        label: item.label.clone(),
        correct: false,
        error: None,
        graph_nodes: None,
        graph_edges: None,
    };
    match client.complete(&request).await {
        Ok(result) => {
            let (answer, graph) = extract(paradigm, &result.text);
            record.correct = answer
                .as_deref()
                .is_some_and(|a| answers_match(a, &item.label, MatchMode::Auto));
            record.extracted_answer = answer;
            record.graph_nodes = graph.map(|g| g.0);
            record.graph_edges = graph.map(|g| g.1);
            record.prediction = result.text;
        }
        Err(e @ (ClientError::Auth(_) | ClientError::InvalidConfig(_))) => return Err(e.into()),
        Err(e) => {
            tracing::warn!(item = %item.item_id, error = %e, "evaluation request failed");
            record.error = Some(e.to_string());
        }
    }
    Ok(record)
}

/// One greedy completion per item. Request failures are recorded as
/// incorrect with an error flag; only auth/config errors abort. Records keep
/// input order.
pub async fn evaluate(
    items: &[BenchmarkItem],
    paradigm: Paradigm,
    client: &ModelClient,
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    if items.is_empty() {
        return Err(EvalError::Empty);
    }
    let sampling = config.sampling.greedy();
    sampling.validate()?;
    let records: Vec<ItemRecord> = futures::stream::iter(items)
        .map(|item| evaluate_item(item, paradigm, client, &sampling))
        .buffered(config.concurrency.max(1))
        .try_collect()
        .await?;
    EvalReport::from_records(paradigm, records)
}

fn percent(accuracy: f64) -> String {
    format!("{:.2}", accuracy * 100.0)
}

/// Fixed-width accuracy table (percent, two decimals).
pub fn render_table(report: &EvalReport) -> String {
    let width = report
        .benchmarks
        .iter()
        .map(|b| b.benchmark.len())
        .chain(["benchmark".len(), "overall".len()])
        .max()
        .unwrap_or(9);
    let mut out = format!("paradigm: {}\n", report.paradigm);
    out.push_str(&format!(
        "{:<width$}  {:>6}  {:>7}  {:>6}  {:>8}\n",
        "benchmark", "n", "correct", "errors", "acc(%)"
    ));
    for b in &report.benchmarks {
        out.push_str(&format!(
            "{:<width$}  {:>6}  {:>7}  {:>6}  {:>8}\n",
            b.benchmark,
            b.n,
            b.correct,
            b.errors,
            percent(b.accuracy)
        ));
    }
    out.push_str(&format!(
        "{:<width$}  {:>6}  {:>7}  {:>6}  {:>8}\n",
        "overall",
        "",
        "",
        "",
        percent(report.overall)
    ));
    out
}

/// `(table, json)`; the JSON carries every per-item record.
pub fn report_render(report: &EvalReport) -> (String, String) {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    (render_table(report), json)
}
