//! Long-form video-to-audio generation pipeline, desk scale.
//!
//! The crate implements the full path from multi-rate feature token streams
//! to generated audio latents and splice-consistency metrics:
//!
//! - [`tensor`]: a minimal dense-tensor engine with reverse-mode gradients.
//! - [`ldt`]: the `LDT1` binary tensor file format.
//! - [`stream`]: feature token streams, linear resampling, clip splicing.
//! - [`manifest`]: clip/video manifests binding streams on disk.
//! - [`conditioning`]: frame-level and clip-level condition construction.
//! - [`adapters`]: dual bottleneck adapters with additive fusion.
//! - [`generator`]: the conditioned DiT trained with flow matching.
//! - [`metrics`]: splice-consistency and distribution metrics.
//! - [`harness`]: synthetic data, training/eval commands, checkpoints.
//!
//! Everything is deterministic given a seed; see [`rng::DetRng`].

pub mod adapters;
pub mod book;
pub mod conditioning;
pub mod error;
pub mod generator;
pub mod harness;
pub mod ldt;
pub mod manifest;
pub mod metrics;
pub mod rng;
pub mod stream;
pub mod tensor;

pub use error::{Error, Result};
