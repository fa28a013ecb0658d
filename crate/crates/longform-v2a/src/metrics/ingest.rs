//! Ingestion of externally produced embedding/logit tensors: an LDT1 file
//! plus a JSON sidecar at `<tensor>.json` declaring what the tensor is.

use super::distribution::{EmbeddingSet, LogitSet};
use crate::error::{Error, Result};
use crate::ldt;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SidecarKind {
    Embeddings,
    Logits,
}

/// Declares the provenance and role of one ingested tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    /// Which external model produced the tensor (e.g. "passt", "panns").
    pub source: String,
    pub kind: SidecarKind,
    /// Path of the tensor this one pairs with (KL/IB), relative to this file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paired_with: Option<String>,
}

pub fn sidecar_path(tensor: &Path) -> PathBuf {
    let mut name = tensor.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    tensor.with_file_name(name)
}

pub fn load_sidecar(tensor: &Path) -> Result<Sidecar> {
    let sp = sidecar_path(tensor);
    let text = std::fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(&sp, e))
}

pub fn save_sidecar(tensor: &Path, sidecar: &Sidecar) -> Result<()> {
    let sp = sidecar_path(tensor);
    let mut text = serde_json::to_string_pretty(sidecar).map_err(|e| Error::json(&sp, e))?;
    text.push('\n');
    std::fs::write(&sp, text).map_err(|e| Error::io(&sp, e))
}

/// The pair target named by the sidecar, resolved against the tensor's dir.
pub fn resolve_paired(tensor: &Path, sidecar: &Sidecar) -> Option<PathBuf> {
    sidecar
        .paired_with
        .as_ref()
        .map(|rel| tensor.parent().unwrap_or_else(|| Path::new(".")).join(rel))
}

pub fn load_embedding_set(tensor: &Path) -> Result<(EmbeddingSet, Sidecar)> {
    let sidecar = load_sidecar(tensor)?;
    if sidecar.kind != SidecarKind::Embeddings {
        return Err(Error::Contract(format!(
            "{} is declared {:?}, expected embeddings",
            tensor.display(),
            sidecar.kind
        )));
    }
    let vectors = ldt::load_as_f64(tensor)?;
    Ok((EmbeddingSet::new(vectors, sidecar.source.clone())?, sidecar))
}

pub fn load_logit_set(tensor: &Path) -> Result<(LogitSet, Sidecar)> {
    let sidecar = load_sidecar(tensor)?;
    if sidecar.kind != SidecarKind::Logits {
        return Err(Error::Contract(format!(
            "{} is declared {:?}, expected logits",
            tensor.display(),
            sidecar.kind
        )));
    }
    let logits = ldt::load_as_f64(tensor)?;
    Ok((LogitSet::new(logits, sidecar.source.clone())?, sidecar))
}
