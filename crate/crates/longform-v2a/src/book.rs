//! The guide from `book/`, compiled into the API docs.
//!
//! Each chapter is included verbatim from `book/src/`, so every `rust` code
//! block in the guide builds and runs as a doc-test under `cargo test` — the
//! prose cannot drift from the API it describes.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}

#[doc = include_str!("../../../book/src/streams.md")]
pub mod streams {}

#[doc = include_str!("../../../book/src/conditioning.md")]
pub mod conditioning {}

#[doc = include_str!("../../../book/src/adapters.md")]
pub mod adapters {}

#[doc = include_str!("../../../book/src/generator.md")]
pub mod generator {}

#[doc = include_str!("../../../book/src/splice-metrics.md")]
pub mod splice_metrics {}

#[doc = include_str!("../../../book/src/distribution-metrics.md")]
pub mod distribution_metrics {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
