//! Toolkit for graph-structured reasoning data.
//!
//! The crate covers the whole life cycle of a reasoning-graph corpus:
//!
//! * [`graph`] and [`dot`]: the reasoning graph model, validation and DOT export.
//! * [`template`]: the `<reasoning>`/`<step>`/`<answer>` text codec.
//! * [`client`]: chat-completion client with retries, caching and a mock backend.
//! * [`merge`]: integration of sampled candidate graphs into one graph.
//! * [`pipeline`]: answer matching, filtering and dataset emission.
//! * [`bench`]: benchmark ingestion and paradigm-conditioned evaluation.
//! * [`reward`]: format and answer rewards for policy-gradient trainers.

pub mod bench;
pub mod client;
pub mod dot;
pub mod graph;
pub mod io;
pub mod merge;
pub mod pipeline;
pub mod prompts;
pub mod reward;
pub mod template;

pub use graph::{GraphDiagnostics, NodeId, ReasoningGraph};
pub use template::{parse, render, Strictness, StructuredOutput};
