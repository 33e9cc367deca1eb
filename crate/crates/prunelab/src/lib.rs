//! Experiment harness for the pruning laboratory: file formats, dataset
//! generation, pipelines, metrics, and the command-line interface.
//!
//! The numerics live in `prunelab-core`; this crate adds everything that
//! touches the filesystem or the operating system:
//!
//! * [`idx`] — the IDX image/label container format.
//! * [`checkpoint`] — versioned, CRC-protected binary network checkpoints.
//! * [`digits`] — the synthetic 28x28 ten-class digit task.
//! * [`config`] — JSON experiment configuration with strict validation.
//! * [`pipeline`] — the two-stage prune-then-distill scheme and its
//!   baselines (vanilla magnitude pruning, lottery-ticket rewinding,
//!   random pruning, dense training).
//! * [`metrics`] — CSV metrics emission and seed-sweep summaries.
//! * [`cli`] — the `prunelab` binary's argument handling.

// Validation uses `!(x > 0.0)` style so NaN fails the check too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod digits;
mod error;
pub mod idx;
pub mod metrics;
pub mod pipeline;

pub use error::{DataError, HarnessError};
