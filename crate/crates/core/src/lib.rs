//! Desk-scale laboratory for LLM unlearning.
//!
//! A tiny transformer ([`seqmodel`]) is trained on a synthetic fact world
//! ([`worldgen`]), unlearned with one of nine objectives ([`methods`]),
//! scored by the evaluation suite ([`metrics`]), and the metrics themselves
//! are judged for faithfulness and robustness ([`metaeval`]). Benchmark rows
//! are aggregated in [`leaderboard`]; [`runner`] wires it all to configs
//! and the `ou` CLI.

pub mod error;
pub mod leaderboard;
pub mod metaeval;
pub mod methods;
pub mod metrics;
pub mod runner;
pub mod seqmodel;
pub mod worldgen;

pub use error::{Error, Result};

/// Embedded in every artifact written to disk.
pub const CODE_VERSION: &str = concat!("ou-core ", env!("CARGO_PKG_VERSION"));
