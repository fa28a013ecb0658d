//! The experiment configuration: one JSON document driving every command.
//!
//! Top-level sections may be omitted (defaults apply); a present section must
//! be complete. Unknown keys are warned about and ignored, like manifests.

use crate::adapters::{AdapterConfig, AdapterInit};
use crate::conditioning::ConditioningConfig;
use crate::error::{Error, Result};
use crate::generator::DiTConfig;
use crate::stream::{StreamDims, LATENT_FPS};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Shape of the synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub n_videos: usize,
    pub video_duration_s: f64,
    pub clip_duration_s: f64,
    pub visual_dim: usize,
    pub text_dim: usize,
    pub sync_dim: usize,
    pub latent_dim: usize,
    /// Hard ceiling on per-channel frame-to-frame jumps in the synthetic
    /// targets; generation re-checks this after writing.
    pub continuity_limit: f64,
    /// Index of the first video. Two datasets with the same seed share the
    /// latent basis, so `{offset: 64, n_videos: 16}` is a held-out extension
    /// of `{offset: 0, n_videos: 64}` drawn from the same distribution.
    pub video_offset: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_videos: 64,
            video_duration_s: 8.0,
            clip_duration_s: 2.0,
            visual_dim: 16,
            text_dim: 16,
            sync_dim: 12,
            latent_dim: 8,
            continuity_limit: 0.35,
            video_offset: 0,
        }
    }
}

impl DatasetConfig {
    pub fn dims(&self) -> StreamDims {
        StreamDims {
            visual: self.visual_dim,
            text: self.text_dim,
            sync: self.sync_dim,
            audio_latent: self.latent_dim,
        }
    }

    /// Number of clips per video.
    pub fn n_clips(&self) -> usize {
        (self.video_duration_s / self.clip_duration_s).round() as usize
    }

    /// Clip boundaries `[0, c, 2c, .., video_duration_s]`; the final edge is
    /// pinned exactly to the video end.
    pub fn clip_boundaries(&self) -> Vec<f64> {
        let n = self.n_clips();
        let mut edges: Vec<f64> = (0..n).map(|k| k as f64 * self.clip_duration_s).collect();
        edges.push(self.video_duration_s);
        edges
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.video_duration_s.is_finite() && self.video_duration_s > 0.0) {
            return Err(Error::Config(format!(
                "video_duration_s must be positive, got {}",
                self.video_duration_s
            )));
        }
        if !(self.clip_duration_s.is_finite() && self.clip_duration_s > 0.0) {
            return Err(Error::Config(format!(
                "clip_duration_s must be positive, got {}",
                self.clip_duration_s
            )));
        }
        if self.clip_duration_s > self.video_duration_s {
            return Err(Error::Config(format!(
                "clip_duration_s {} exceeds video_duration_s {}",
                self.clip_duration_s, self.video_duration_s
            )));
        }
        let n = self.n_clips();
        // Clips must tile the video within one latent frame.
        let gap = (n as f64 * self.clip_duration_s - self.video_duration_s).abs();
        if n == 0 || gap > 1.0 / LATENT_FPS {
            return Err(Error::Config(format!(
                "{n} clips of {} s leave a {gap:.4} s gap in a {} s video \
                 (must tile within one latent frame)",
                self.clip_duration_s, self.video_duration_s
            )));
        }
        for (name, d) in [
            ("visual_dim", self.visual_dim),
            ("text_dim", self.text_dim),
            ("sync_dim", self.sync_dim),
            ("latent_dim", self.latent_dim),
        ] {
            if d == 0 {
                return Err(Error::Config(format!("dataset {name} must be ≥ 1")));
            }
        }
        if !(self.continuity_limit.is_finite() && self.continuity_limit > 0.0) {
            return Err(Error::Config(format!(
                "continuity_limit must be positive, got {}",
                self.continuity_limit
            )));
        }
        Ok(())
    }
}

/// Bottleneck width and init shared by both adapters; in/out widths follow
/// from the conditioning hidden size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdapterSettings {
    pub bottleneck_dim: usize,
    pub init: AdapterInit,
}

impl Default for AdapterSettings {
    fn default() -> Self {
        AdapterSettings { bottleneck_dim: 8, init: AdapterInit::ZeroOut }
    }
}

impl AdapterSettings {
    /// h_global corrects the `[1 × 2·hidden]` global condition.
    pub fn global_config(&self, hidden_dim: usize) -> AdapterConfig {
        AdapterConfig {
            input_dim: hidden_dim,
            bottleneck_dim: self.bottleneck_dim,
            output_dim: 2 * hidden_dim,
            init: self.init,
        }
    }

    /// h_syn corrects the `[T_a × hidden]` frame condition.
    pub fn syn_config(&self, hidden_dim: usize) -> AdapterConfig {
        AdapterConfig {
            input_dim: hidden_dim,
            bottleneck_dim: self.bottleneck_dim,
            output_dim: hidden_dim,
            init: self.init,
        }
    }
}

/// Optimizer schedule for both training regimes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    /// Steps for `finetune_all` runs.
    pub steps: usize,
    /// Steps for `adapters_only` runs.
    pub adapter_steps: usize,
    pub lr: f64,
    pub adapter_lr: f64,
    pub momentum: f64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub grad_clip: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            steps: 6000,
            adapter_steps: 2000,
            lr: 0.02,
            adapter_lr: 0.05,
            momentum: 0.9,
            grad_clip: 1.0,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lr", self.lr), ("adapter_lr", self.adapter_lr)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.grad_clip.is_finite() && self.grad_clip >= 0.0) {
            return Err(Error::Config(format!(
                "grad_clip must be ≥ 0, got {}",
                self.grad_clip
            )));
        }
        Ok(())
    }
}

/// Everything an experiment needs, serialized as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub conditioning: CondSection,
    pub dit: DitSection,
    pub adapters: AdapterSettings,
    pub train: TrainSettings,
}

/// Conditioning section with desk-scale defaults (the library-level
/// [`ConditioningConfig::default`] carries the larger reference widths).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CondSection {
    pub hidden_dim: usize,
    pub timestamp_dim: usize,
    pub absolute_time: bool,
}

impl Default for CondSection {
    fn default() -> Self {
        CondSection { hidden_dim: 32, timestamp_dim: 32, absolute_time: true }
    }
}

impl From<CondSection> for ConditioningConfig {
    fn from(s: CondSection) -> Self {
        ConditioningConfig {
            hidden_dim: s.hidden_dim,
            timestamp_dim: s.timestamp_dim,
            absolute_time: s.absolute_time,
        }
    }
}

/// Generator section with desk-scale defaults; `latent_dim` lives in the
/// dataset section so the two cannot drift apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DitSection {
    pub n_layers: usize,
    pub hidden_dim: usize,
    pub n_heads: usize,
    pub steps: usize,
}

impl Default for DitSection {
    fn default() -> Self {
        DitSection { n_layers: 3, hidden_dim: 32, n_heads: 4, steps: 32 }
    }
}

impl ExperimentConfig {
    pub fn cond_config(&self) -> ConditioningConfig {
        self.conditioning.into()
    }

    pub fn dit_config(&self) -> DiTConfig {
        DiTConfig {
            n_layers: self.dit.n_layers,
            hidden_dim: self.dit.hidden_dim,
            n_heads: self.dit.n_heads,
            latent_dim: self.dataset.latent_dim,
            steps: self.dit.steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.cond_config().validate()?;
        self.dit_config().validate()?;
        // Conditions feed the transformer's hidden stream directly, so the
        // two widths cannot differ.
        if self.conditioning.hidden_dim != self.dit.hidden_dim {
            return Err(Error::Config(format!(
                "conditioning hidden_dim {} must equal dit hidden_dim {}",
                self.conditioning.hidden_dim, self.dit.hidden_dim
            )));
        }
        self.adapters.global_config(self.conditioning.hidden_dim).validate()?;
        self.adapters.syn_config(self.conditioning.hidden_dim).validate()?;
        self.train.validate()
    }

    /// Read a config, warning about (and ignoring) unknown JSON keys.
    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        warn_unknown_keys(path, &value);
        serde_json::from_value(value)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Write the config as pretty JSON.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn to_pretty_json(&self) -> String {
        // Serialization of a plain struct cannot fail.
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

const KNOWN_SECTIONS: &[(&str, &[&str])] = &[
    ("seed", &[]),
    (
        "dataset",
        &[
            "n_videos",
            "video_duration_s",
            "clip_duration_s",
            "visual_dim",
            "text_dim",
            "sync_dim",
            "latent_dim",
            "continuity_limit",
            "video_offset",
        ],
    ),
    ("conditioning", &["hidden_dim", "timestamp_dim", "absolute_time"]),
    ("dit", &["n_layers", "hidden_dim", "n_heads", "steps"]),
    ("adapters", &["bottleneck_dim", "init"]),
    ("train", &["steps", "adapter_steps", "lr", "adapter_lr", "momentum", "grad_clip"]),
];

fn warn_unknown_keys(path: &Path, value: &serde_json::Value) {
    let Some(map) = value.as_object() else { return };
    for (key, sub) in map {
        match KNOWN_SECTIONS.iter().find(|(name, _)| name == key) {
            None => log::warn!("{}: ignoring unknown config key {key:?}", path.display()),
            Some((_, fields)) => {
                let Some(obj) = sub.as_object() else { continue };
                for f in obj.keys() {
                    if !fields.contains(&f.as_str()) {
                        log::warn!(
                            "{}: ignoring unknown config key {key}.{f:?}",
                            path.display()
                        );
                    }
                }
            }
        }
    }
}
