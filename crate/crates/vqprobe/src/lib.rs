//! Passive vector-quantization probe for frozen-encoder latent spaces.
//!
//! The crate trains a single-layer vector quantizer (projection +
//! unit-sphere normalization + EMA codebook) on precomputed latent token
//! vectors, then runs a diagnostic battery over the trained probe:
//! pipeline-determinism checks, category-contrast statistics (chi-squared,
//! mutual information, Jensen-Shannon divergence, noise-baseline MI ratio)
//! and codebook health metrics, emitting a report and symbol dictionary.
//!
//! Start from the runnable examples (`cargo run --example <name>`) or the
//! thin `vqprobe` binary, which exposes the same flows as subcommands.

pub mod checkpoint;
pub mod cli;
pub mod codebook;
pub mod error;
pub mod jsonio;
pub mod pipeline;
pub mod plot;
pub mod projection;
pub mod report;
pub mod stats;
pub mod store;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
