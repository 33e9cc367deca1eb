//! Core numerics for a desk-scale network pruning laboratory.
//!
//! The crate provides everything needed to train, prune, and analyze small
//! dense ReLU networks without standard-library support (`alloc` is
//! required):
//!
//! * [`tensor`] — row-major `f64` matrices, the primitive operations the
//!   training stack is built from, and power-iteration spectral norms.
//! * [`tape`] — a reverse-mode differentiation tape over those primitives.
//! * [`network`] — multilayer bias-free ReLU networks, SGD-with-momentum
//!   training, and evaluation.
//! * [`pruning`] — binary weight masks, magnitude/random selection, and
//!   lottery-ticket rewinding.
//! * [`distill`] — teacher/student knowledge-distillation losses and the
//!   distillation training loop.
//! * [`spectral`] — discrete Fourier spectra of a network seen as a 1-D
//!   function, per-band convergence tracking, weight-chain flow indicators,
//!   and norm bounds.
//! * [`dataset`] — in-memory datasets and the seeded multi-frequency
//!   regression generator.
//!
//! Everything is deterministic: all randomness flows through explicitly
//! seeded ChaCha streams, and identical seeds reproduce results bit for bit
//! on the same platform.

#![cfg_attr(not(feature = "std"), no_std)]
// Validation uses `!(x > 0.0)` style so NaN fails the check too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod dataset;
pub mod distill;
mod error;
pub mod network;
pub mod pruning;
pub mod seeds;
pub mod spectral;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Matrix;
