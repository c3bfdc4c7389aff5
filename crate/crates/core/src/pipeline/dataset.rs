//! Question → trajectories → merge → filter → dataset.

use std::collections::BTreeMap;
use std::path::Path;

use futures::{StreamExt, TryStreamExt};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::answers::{answers_match, MatchMode};
use crate::client::{ClientError, ModelClient, SamplingConfig, DEFAULT_CONCURRENCY};
use crate::io::{self, IoError};
use crate::merge::{self, CandidateSet, MergeError, MergeMode, MergedResult};
use crate::prompts;
use crate::template::{self, Strictness};

pub const DEFAULT_SPLIT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    InvalidInput(String),
}

/// A question–label pair. Context, when the source has one, is already
/// folded into `question`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceQA {
    pub question: String,
    pub label: String,
    #[serde(default)]
    pub source_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub k_used: usize,
    pub contributing_indices: Vec<usize>,
    pub merge_mode: String,
    #[serde(default)]
    pub fallback: bool,
    pub teacher_model: String,
}

/// One emitted dataset record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub question: String,
    /// Canonical template text of the merged graph and its answer.
    pub graph_reasoning: String,
    pub label: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscardReason {
    AnswerMismatch,
    AllCandidatesFailed,
    ParseFailure,
    MergeFailed,
}

impl DiscardReason {
    pub const ALL: [DiscardReason; 4] = [
        DiscardReason::AnswerMismatch,
        DiscardReason::AllCandidatesFailed,
        DiscardReason::ParseFailure,
        DiscardReason::MergeFailed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DiscardReason::AnswerMismatch => "answer-mismatch",
            DiscardReason::AllCandidatesFailed => "all-candidates-failed",
            DiscardReason::ParseFailure => "parse-failure",
            DiscardReason::MergeFailed => "merge-failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardRecord {
    pub source_id: String,
    pub reason: DiscardReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FilterOutcome {
    Retained(TrainingInstance),
    Discarded(DiscardRecord),
}

/// Inputs to provenance that the merge result does not carry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProvenanceContext {
    pub k_used: usize,
    pub teacher_model: String,
}

/// Keeps the merged graph iff its answer matches the label.
pub fn filter_instance(merged: &MergedResult, source: &SourceQA, ctx: &ProvenanceContext) -> FilterOutcome {
    let discard = |reason, detail: String| {
        FilterOutcome::Discarded(DiscardRecord {
            source_id: source.source_id.clone(),
            reason,
            detail,
        })
    };
    if !answers_match(&merged.answer, &source.label, MatchMode::Auto) {
        return discard(
            DiscardReason::AnswerMismatch,
            format!("derived answer {:?} vs label {:?}", merged.answer, source.label),
        );
    }
    let graph_reasoning = match template::render(&merged.to_output()) {
        Ok(text) => text,
        Err(e) => return discard(DiscardReason::ParseFailure, format!("merged graph not renderable: {e}")),
    };
    FilterOutcome::Retained(TrainingInstance {
        question: source.question.clone(),
        graph_reasoning,
        label: source.label.clone(),
        provenance: Provenance {
            k_used: ctx.k_used,
            contributing_indices: merged.contributing_indices.clone(),
            merge_mode: merged.mode.as_str().to_string(),
            fallback: merged.fallback,
            teacher_model: ctx.teacher_model.clone(),
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildConfig {
    pub sampling: SamplingConfig,
    pub merge_mode: MergeMode,
    pub split_seed: u64,
    /// Questions processed concurrently.
    pub concurrency: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            sampling: SamplingConfig {
                seed: Some(0),
                ..SamplingConfig::default()
            },
            merge_mode: MergeMode::default(),
            split_seed: DEFAULT_SPLIT_SEED,
            concurrency: DEFAULT_CONCURRENCY,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub valid: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub total_in: usize,
    pub retained: usize,
    pub discarded_by_reason: BTreeMap<String, usize>,
    pub split_sizes: SplitSizes,
    /// Candidates that only parsed in lenient mode.
    pub lenient_parses: usize,
    /// Candidates that failed to parse at all.
    pub candidate_parse_failures: usize,
    /// Merges that fell back to the deterministic algorithm.
    pub merge_fallbacks: usize,
    pub discards: Vec<DiscardRecord>,
}

impl BuildReport {
    pub fn discarded(&self) -> usize {
        self.discarded_by_reason.values().sum()
    }

    /// `total_in = retained + Σ discarded`.
    pub fn is_balanced(&self) -> bool {
        self.total_in == self.retained + self.discarded()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildOutput {
    pub train: Vec<TrainingInstance>,
    pub valid: Vec<TrainingInstance>,
    pub report: BuildReport,
}

/// Seeded 9:1 split of `n` items. Returns sorted `(train, valid)` indices;
/// the validation side gets `round(n / 10)` items.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_valid = (n + 5) / 10;
    let mut valid = order[..n_valid].to_vec();
    let mut train = order[n_valid..].to_vec();
    valid.sort_unstable();
    train.sort_unstable();
    (train, valid)
}

#[derive(Debug, Default)]
struct ItemOutcome {
    outcome: Option<FilterOutcome>,
    lenient_parses: usize,
    parse_failures: usize,
    fallback: bool,
}

async fn process_item(
    source: SourceQA,
    config: &BuildConfig,
    client: &ModelClient,
) -> Result<ItemOutcome, PipelineError> {
    let mut item = ItemOutcome::default();
    let discard = |reason, detail: String| {
        Some(FilterOutcome::Discarded(DiscardRecord {
            source_id: source.source_id.clone(),
            reason,
            detail,
        }))
    };

    let trajectories = match client
        .sample_trajectories(&source.question, &config.sampling, &prompts::CANDIDATE_GRAPH)
        .await
    {
        Ok(t) => t,
        Err(ClientError::AllFailed(errors)) => {
            item.outcome = discard(
                DiscardReason::AllCandidatesFailed,
                format!("all {} samples failed: {}", errors.len(), errors[0].error),
            );
            return Ok(item);
        }
        Err(e) => return Err(e.into()),
    };

    let mut candidates = Vec::new();
    for (index, text) in &trajectories.texts {
        match template::parse(text, Strictness::Strict) {
            Ok(output) => candidates.push(merge::Candidate {
                output,
                source_index: *index,
            }),
            Err(strict_err) => match template::parse(text, Strictness::Lenient) {
                Ok(output) => {
                    tracing::warn!(source = %source.source_id, index, error = %strict_err, "candidate parsed only leniently");
                    item.lenient_parses += 1;
                    candidates.push(merge::Candidate {
                        output,
                        source_index: *index,
                    });
                }
                Err(e) => {
                    tracing::debug!(source = %source.source_id, index, error = %e, "candidate dropped");
                    item.parse_failures += 1;
                }
            },
        }
    }
    if candidates.is_empty() {
        item.outcome = discard(
            DiscardReason::AllCandidatesFailed,
            format!("none of {} candidates parsed", trajectories.texts.len()),
        );
        return Ok(item);
    }

    let set = CandidateSet::new(source.question.clone(), candidates).expect("indices ascend");
    let merged = match merge::merge(&set, config.merge_mode, client, &config.sampling).await {
        Ok(m) => m,
        Err(MergeError::Client(e @ (ClientError::Auth(_) | ClientError::InvalidConfig(_)))) => {
            return Err(e.into())
        }
        Err(MergeError::Unparseable(e)) => {
            item.outcome = discard(DiscardReason::ParseFailure, e.to_string());
            return Ok(item);
        }
        Err(e) => {
            item.outcome = discard(DiscardReason::MergeFailed, e.to_string());
            return Ok(item);
        }
    };
    item.fallback = merged.fallback;
    let ctx = ProvenanceContext {
        k_used: config.sampling.k,
        teacher_model: config.sampling.model_name.clone(),
    };
    item.outcome = Some(filter_instance(&merged, &source, &ctx));
    Ok(item)
}

/// Runs the full construction pipeline. Items are processed concurrently but
/// results keep input order. Only configuration-level failures (bad
/// sampling config, authentication, invalid input) abort the build.
pub async fn build_dataset(
    sources: impl IntoIterator<Item = SourceQA>,
    config: &BuildConfig,
    client: &ModelClient,
) -> Result<BuildOutput, PipelineError> {
    config.sampling.validate()?;
    let sources: Vec<SourceQA> = sources
        .into_iter()
        .enumerate()
        .map(|(i, mut s)| {
            if s.question.trim().is_empty() || s.label.trim().is_empty() {
                return Err(PipelineError::InvalidInput(format!(
                    "source {} has an empty question or label",
                    i + 1
                )));
            }
            if s.source_id.is_empty() {
                s.source_id = format!("item-{i}");
            }
            Ok(s)
        })
        .collect::<Result<_, _>>()?;

    let outcomes: Vec<ItemOutcome> = futures::stream::iter(sources)
        .map(|s| process_item(s, config, client))
        .buffered(config.concurrency.max(1))
        .try_collect()
        .await?;

    let mut report = BuildReport {
        total_in: outcomes.len(),
        discarded_by_reason: DiscardReason::ALL
            .iter()
            .map(|r| (r.as_str().to_string(), 0))
            .collect(),
        ..BuildReport::default()
    };
    let mut retained = Vec::new();
    for item in outcomes {
        report.lenient_parses += item.lenient_parses;
        report.candidate_parse_failures += item.parse_failures;
        report.merge_fallbacks += usize::from(item.fallback);
        match item.outcome.expect("every item resolves") {
            FilterOutcome::Retained(instance) => retained.push(instance),
            FilterOutcome::Discarded(record) => {
                *report
                    .discarded_by_reason
                    .get_mut(record.reason.as_str())
                    .expect("all reasons present") += 1;
                report.discards.push(record);
            }
        }
    }
    report.retained = retained.len();

    let (train_idx, valid_idx) = split_indices(retained.len(), config.split_seed);
    let pick = |idx: &[usize]| idx.iter().map(|&i| retained[i].clone()).collect::<Vec<_>>();
    let (train, valid) = (pick(&train_idx), pick(&valid_idx));
    report.split_sizes = SplitSizes {
        train: train.len(),
        valid: valid.len(),
    };
    debug_assert!(report.is_balanced());
    Ok(BuildOutput {
        train,
        valid,
        report,
    })
}

/// Writes `train.jsonl`, `valid.jsonl` and `report.json` atomically.
pub fn write_outputs(dir: &Path, output: &BuildOutput) -> Result<(), IoError> {
    io::write_jsonl(&dir.join("train.jsonl"), &output.train)?;
    io::write_jsonl(&dir.join("valid.jsonl"), &output.valid)?;
    let report = serde_json::to_string_pretty(&output.report).expect("report serializes");
    io::write_atomic(&dir.join("report.json"), report.as_bytes())
}

pub fn read_sources(path: &Path) -> Result<Vec<SourceQA>, PipelineError> {
    Ok(io::read_jsonl(path)?)
}
