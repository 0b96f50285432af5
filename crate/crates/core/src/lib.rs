//! Mixture of dual reasoning experts for multimodal sarcasm detection.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense tensors, a reverse-mode tape, Adam and finite-difference checks.
//! - [`model`]: projections, the external/internal cross-attention experts, the
//!   bottleneck gate and the residual encoder stack with a two-way label head.
//! - [`rationale`]: three-stage chain-of-thought rationale generation against a
//!   chat-completion endpoint, strict output parsers and a JSONL cache.
//! - [`data`]: sample and feature file formats, the toy embedder and the synthetic
//!   contextual-sarcasm generator.
//! - [`evalharness`]: training, metrics, the ablation matrix and gate-trace export.
//! - [`cli`]: the `midre` command-line surface.

pub mod cli;
pub mod data;
pub mod error;
pub mod evalharness;
pub mod model;
pub mod numerics;
pub mod rationale;

pub use error::{Error, Result};
