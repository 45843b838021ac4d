//! Retrieval-augmented generation over several embedding models.
//!
//! Three pipelines share one corpus and one LLM backend:
//!
//! * **vanilla**: retrieve with one embedding model, generate once;
//! * **mixture**: Z-score each model's similarities, pool and deduplicate
//!   candidates, generate once from the fused references;
//! * **confident**: run vanilla once per model and keep the answer whose
//!   token distribution is most confident under a chosen metric.
//!
//! The [`harness`] module sweeps model combinations over a question set and
//! writes accuracy tables, confidence CDFs and a run manifest.

pub mod confidence;
pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod generation;
pub mod harness;
pub mod hashing;
pub mod http;
pub mod pipeline;
pub mod retrieval;
