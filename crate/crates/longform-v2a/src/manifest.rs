//! Clip manifests: JSON documents binding on-disk streams to clip metadata.
//!
//! A manifest describes either a full-length parent video (`parent_id` absent,
//! `splices` marking its clip boundaries) or a single clip cut from a parent.
//! Stream paths are relative to the manifest's directory.

use crate::error::{Error, Result};
use crate::ldt;
use crate::stream::{StreamDims, StreamKind, TokenStream};
use crate::tensor::Scalar;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Relative paths of the stream files, one per kind, each optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct StreamPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visual: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sync: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_latent: Option<String>,
}

impl StreamPaths {
    pub fn get(&self, kind: StreamKind) -> Option<&str> {
        match kind {
            StreamKind::Visual => self.visual.as_deref(),
            StreamKind::Text => self.text.as_deref(),
            StreamKind::Sync => self.sync.as_deref(),
            StreamKind::AudioLatent => self.audio_latent.as_deref(),
        }
    }

    pub fn set(&mut self, kind: StreamKind, path: String) {
        match kind {
            StreamKind::Visual => self.visual = Some(path),
            StreamKind::Text => self.text = Some(path),
            StreamKind::Sync => self.sync = Some(path),
            StreamKind::AudioLatent => self.audio_latent = Some(path),
        }
    }
}

/// Desk-scale dimension overrides; omitted kinds keep full-scale dims.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct ToyDims {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visual: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sync: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_latent: Option<usize>,
}

/// Metadata for one clip (or one parent video).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClipManifest {
    pub clip_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    pub duration_s: f64,
    pub streams: StreamPaths,
    /// Splice offsets in seconds, relative to the parent video.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub splices: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toy_dims: Option<ToyDims>,
}

const KNOWN_FIELDS: &[&str] =
    &["clip_id", "parent_id", "duration_s", "streams", "splices", "toy_dims"];
const KNOWN_STREAMS: &[&str] = &["visual", "text", "sync", "audio_latent"];

impl ClipManifest {
    /// Read a manifest, warning about (and ignoring) unknown JSON fields.
    pub fn load(path: impl AsRef<Path>) -> Result<ClipManifest> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value =
            serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))?;
        if let Some(map) = value.as_object() {
            for key in map.keys() {
                if !KNOWN_FIELDS.contains(&key.as_str()) {
                    log::warn!("{}: ignoring unknown manifest field {key:?}", path.display());
                }
            }
            if let Some(streams) = map.get("streams").and_then(|s| s.as_object()) {
                for key in streams.keys() {
                    if !KNOWN_STREAMS.contains(&key.as_str()) {
                        log::warn!(
                            "{}: ignoring unknown stream kind {key:?}",
                            path.display()
                        );
                    }
                }
            }
        }
        serde_json::from_value(value).map_err(|e| Error::json(path, e))
    }

    /// Write the manifest as pretty JSON.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Stream dimensions this manifest's invariants check against.
    pub fn effective_dims(&self) -> StreamDims {
        let full = StreamDims::default();
        match &self.toy_dims {
            None => full,
            Some(t) => StreamDims {
                visual: t.visual.unwrap_or(full.visual),
                text: t.text.unwrap_or(full.text),
                sync: t.sync.unwrap_or(full.sync),
                audio_latent: t.audio_latent.unwrap_or(full.audio_latent),
            },
        }
    }

    /// Load one stream strictly: native invariants must hold.
    pub fn load_stream<S: Scalar>(
        &self,
        kind: StreamKind,
        base_dir: &Path,
    ) -> Result<TokenStream<S>> {
        let rel = self.streams.get(kind).ok_or_else(|| {
            Error::Contract(format!(
                "manifest {} declares no {} stream",
                self.clip_id,
                kind.name()
            ))
        })?;
        let tensor = ldt::load::<S>(base_dir.join(rel))?;
        let stream = TokenStream::native(kind, tensor)?;
        let violations = stream.check_native(&self.effective_dims(), Some(self.duration_s));
        if !violations.is_empty() {
            return Err(Error::Contract(format!(
                "stream {} of clip {}: {}",
                kind.name(),
                self.clip_id,
                violations.join("; ")
            )));
        }
        Ok(stream)
    }
}

/// Everything wrong with a manifest; empty means valid.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check every invariant of a manifest and its streams.
///
/// Unreadable or malformed stream files become report entries, not errors.
/// `parent_duration_s` bounds the splice offsets; when the manifest is its own
/// parent (no `parent_id`) its own duration is the bound.
pub fn validate_manifest(
    m: &ClipManifest,
    base_dir: &Path,
    parent_duration_s: Option<f64>,
) -> ValidationReport {
    let mut violations = Vec::new();

    if !(m.duration_s.is_finite() && m.duration_s > 0.0) {
        violations.push(format!("duration_s must be positive, got {}", m.duration_s));
    }

    let bound = parent_duration_s.or(if m.parent_id.is_none() { Some(m.duration_s) } else { None });
    let mut prev = 0.0;
    for (i, &t) in m.splices.iter().enumerate() {
        if t <= prev {
            violations.push(format!(
                "splices must be strictly increasing and > 0: splices[{i}] = {t} after {prev}"
            ));
        }
        if let Some(b) = bound {
            if t >= b {
                violations.push(format!("splices[{i}] = {t} outside (0, {b})"));
            }
        }
        prev = t;
    }

    let dims = m.effective_dims();
    for kind in [StreamKind::Visual, StreamKind::Text, StreamKind::Sync, StreamKind::AudioLatent] {
        let Some(rel) = m.streams.get(kind) else { continue };
        match ldt::load_as_f64(base_dir.join(rel)) {
            Err(e) => violations.push(format!("{}: {e}", kind.name())),
            Ok(tensor) => match TokenStream::native(kind, tensor) {
                Err(e) => violations.push(format!("{}: {e}", kind.name())),
                Ok(stream) => {
                    violations.extend(stream.check_native(&dims, Some(m.duration_s)));
                }
            },
        }
    }

    ValidationReport { violations }
}

/// Resolve the directory a manifest's relative stream paths are rooted at.
pub fn manifest_dir(manifest_path: &Path) -> PathBuf {
    manifest_path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf()
}
