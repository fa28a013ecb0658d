//! Checkpoints: a directory with one tensor file per parameter plus an index.
//!
//! The index pins the element type and the full parameter list, so a loaded
//! checkpoint is exactly the saved store — same names, same bytes.

use crate::error::{Error, Result};
use crate::ldt;
use crate::tensor::store::ParameterStore;
use crate::tensor::{Dtype, Scalar};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointIndex {
    dtype: String,
    tensors: Vec<String>,
}

fn dtype_name(d: Dtype) -> &'static str {
    match d {
        Dtype::F32 => "f32",
        Dtype::F64 => "f64",
    }
}

/// Write every parameter as `<name>.ldt` plus `index.json`.
pub fn save_checkpoint<S: Scalar>(dir: impl AsRef<Path>, store: &ParameterStore<S>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tensors = store.names();
    for name in &tensors {
        ldt::save(dir.join(format!("{name}.ldt")), store.get(name)?)?;
    }
    let index = CheckpointIndex { dtype: dtype_name(S::DTYPE).into(), tensors };
    let path = dir.join(INDEX_FILE);
    let mut text = serde_json::to_string_pretty(&index).map_err(|e| Error::json(&path, e))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Load a checkpoint saved by [`save_checkpoint`]; the element type must match.
pub fn load_checkpoint<S: Scalar>(dir: impl AsRef<Path>) -> Result<ParameterStore<S>> {
    let dir = dir.as_ref();
    let path = dir.join(INDEX_FILE);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let index: CheckpointIndex =
        serde_json::from_slice(&bytes).map_err(|e| Error::json(&path, e))?;
    let want = dtype_name(S::DTYPE);
    if index.dtype != want {
        return Err(Error::Contract(format!(
            "checkpoint {} holds {} tensors, expected {want}",
            dir.display(),
            index.dtype
        )));
    }
    let mut store = ParameterStore::new();
    for name in &index.tensors {
        store.insert(name, ldt::load::<S>(dir.join(format!("{name}.ldt")))?)?;
    }
    Ok(store)
}
