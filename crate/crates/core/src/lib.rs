//! Activation probing toolkit for hallucination detection.
//!
//! The crate trains and evaluates probes over per-layer activations captured
//! at the final generated token of an LLM response. The main probe is a
//! cross-layer attention probe: every layer's activation is projected to a
//! shared width, a learnable CLS token is prepended, and a small transformer
//! encoder reads the sequence; the CLS output feeds a linear classifier.
//!
//! Modules:
//! - [`numcore`]: dense arrays, reverse-mode differentiation, AdamW and the
//!   warmup/cosine schedule.
//! - [`actdata`]: activation dataset format, splits, batching and a
//!   planted-signal generator.
//! - [`labeling`]: ROUGE-1 and chain-of-thought labeling, refusal detection.
//! - [`probes`]: the probe zoo and its training loop.
//! - [`metrics`]: AUC, macro-F1, threshold selection, experiment matrices.
//! - [`mitigation`]: detect-then-mitigate decision policies and accounting.
//! - [`runner`]: configuration and the command implementations behind the CLI.

pub mod actdata;
pub mod error;
pub mod labeling;
pub mod metrics;
pub mod mitigation;
pub mod numcore;
pub mod probes;
pub mod runner;

pub use error::{Error, Result};
