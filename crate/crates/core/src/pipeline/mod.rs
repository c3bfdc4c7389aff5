//! Dataset construction: answer matching, the answer filter and JSONL
//! emission with a seeded train/validation split.

pub mod answers;
pub mod dataset;

pub use answers::{answers_match, MatchMode};
pub use dataset::{
    build_dataset, filter_instance, split_indices, write_outputs, BuildConfig, BuildOutput, BuildReport,
    DiscardReason, FilterOutcome, SourceQA, TrainingInstance,
};
