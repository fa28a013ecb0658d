//! Experiment harness: one config file, a synthetic dataset generator,
//! checkpoint I/O, and the command implementations behind the `lfv2a` binary.
//!
//! Everything here is deterministic in the experiment seed: `synth` writes
//! byte-identical datasets, `train` byte-identical checkpoints, and
//! `generate` byte-identical latents when rerun with the same inputs.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod synth;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use commands::{cmd_eval, cmd_generate, cmd_report, cmd_synth, cmd_train, EvalInputs, GenMode};
pub use config::ExperimentConfig;
pub use synth::{load_dataset, synth_dataset, DatasetIndex, LoadedVideo};
