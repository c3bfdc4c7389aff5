//! Benchmark ingestion and paradigm-conditioned accuracy evaluation.

pub mod eval;
pub mod ingest;

pub use eval::{evaluate, report_render, EvalConfig, EvalError, EvalReport, ItemRecord, Paradigm};
pub use ingest::{ingest, Benchmark, BenchmarkItem};
