//! Token-level evaluation of chunking and top-k retrieval pipelines.
//!
//! The crate scores how well a chunker + embedder + top-k retriever
//! recovers ground-truth highlight spans, using four token-set metrics
//! (recall, precision, IoU and precision Ω), and can synthesize
//! span-anchored QA datasets from raw documents through a chat model.

pub mod chunking;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod evaluation;
pub mod metrics;
pub mod reporting;
pub mod retrieval;
pub mod synthgen;
pub mod util;
