//! Checkpoints: a JSON manifest plus one raw little-endian `f64` file per
//! named parameter.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::graph::Mat;
use super::params::ParamStore;

pub const CHECKPOINT_FORMAT: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint format {0}")]
    Format(u32),
    #[error("parameter `{name}`: checkpoint shape {found:?}, expected {expected:?}")]
    Shape {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("parameter `{name}`: file holds {bytes} bytes, shape needs {needed}")]
    Truncated { name: String, bytes: usize, needed: usize },
    #[error("parameter `{0}` missing from checkpoint")]
    Missing(String),
    #[error("checkpoint has {found} parameters, model has {expected}")]
    Count { expected: usize, found: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub step: u64,
    pub hyperparameters: serde_json::Value,
    pub parameters: Vec<ParamEntry>,
}

fn file_name(index: usize, name: &str) -> String {
    let safe: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '_' { c } else { '_' })
        .collect();
    format!("params/{index:03}_{safe}.bin")
}

pub fn save(
    dir: &Path,
    store: &ParamStore,
    step: u64,
    hyperparameters: serde_json::Value,
) -> Result<CheckpointManifest, CheckpointError> {
    let params_dir = dir.join("params");
    fs::create_dir_all(&params_dir).map_err(io_err(&params_dir))?;
    let mut entries = Vec::with_capacity(store.len());
    for (k, (_, p)) in store.iter().enumerate() {
        let file = file_name(k, &p.name);
        let mut bytes = Vec::with_capacity(p.value.len() * 8);
        for v in p.value.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(io_err(&path))?;
        let (r, c) = p.value.dim();
        entries.push(ParamEntry {
            name: p.name.clone(),
            shape: [r, c],
            file,
        });
    }
    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_FORMAT,
        step,
        hyperparameters,
        parameters: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest, CheckpointError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)?;
    if manifest.format_version != CHECKPOINT_FORMAT {
        return Err(CheckpointError::Format(manifest.format_version));
    }
    Ok(manifest)
}

fn read_matrix(dir: &Path, entry: &ParamEntry) -> Result<Mat, CheckpointError> {
    let path = dir.join(&entry.file);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let [r, c] = entry.shape;
    let needed = r * c * 8;
    if bytes.len() != needed {
        return Err(CheckpointError::Truncated {
            name: entry.name.clone(),
            bytes: bytes.len(),
            needed,
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    Ok(Mat::from_shape_vec((r, c), values).expect("length checked"))
}

/// Loads every parameter listed in the manifest into a fresh store.
pub fn load(dir: &Path) -> Result<(ParamStore, CheckpointManifest), CheckpointError> {
    let manifest = read_manifest(dir)?;
    let mut store = ParamStore::default();
    for entry in &manifest.parameters {
        store.add(entry.name.clone(), read_matrix(dir, entry)?);
    }
    Ok((store, manifest))
}

/// Overwrites `store`'s values, requiring identical names and shapes.
pub fn load_into(dir: &Path, store: &mut ParamStore) -> Result<CheckpointManifest, CheckpointError> {
    let manifest = read_manifest(dir)?;
    if manifest.parameters.len() != store.len() {
        return Err(CheckpointError::Count {
            expected: store.len(),
            found: manifest.parameters.len(),
        });
    }
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = store.name(id).to_string();
        let entry = manifest
            .parameters
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| CheckpointError::Missing(name.clone()))?;
        let expected = store.value(id).dim();
        let found = (entry.shape[0], entry.shape[1]);
        if expected != found {
            return Err(CheckpointError::Shape { name, expected, found });
        }
        *store.value_mut(id) = read_matrix(dir, entry)?;
    }
    store.zero_grad();
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ParamStore::default();
        store.add("a.w", array![[1.0 / 3.0, -0.0, f64::MIN_POSITIVE], [1e300, -7.25, 0.1]]);
        store.add("a.b", array![[std::f64::consts::PI]]);
        save(dir.path(), &store, 42, serde_json::json!({"lr": 3e-4})).unwrap();
        let (back, manifest) = load(dir.path()).unwrap();
        assert_eq!(manifest.step, 42);
        for ((_, p), (_, q)) in store.iter().zip(back.iter()) {
            assert_eq!(p.name, q.name);
            let pb: Vec<u64> = p.value.iter().map(|v| v.to_bits()).collect();
            let qb: Vec<u64> = q.value.iter().map(|v| v.to_bits()).collect();
            assert_eq!(pb, qb);
        }
        let raw = fs::read(dir.path().join(&manifest.parameters[1].file)).unwrap();
        assert_eq!(raw, std::f64::consts::PI.to_le_bytes());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ParamStore::default();
        store.add("w", Mat::zeros((2, 3)));
        save(dir.path(), &store, 0, serde_json::Value::Null).unwrap();
        let mut other = ParamStore::default();
        other.add("w", Mat::zeros((3, 2)));
        assert!(matches!(
            load_into(dir.path(), &mut other),
            Err(CheckpointError::Shape { .. })
        ));
        let mut renamed = ParamStore::default();
        renamed.add("v", Mat::zeros((2, 3)));
        assert!(matches!(load_into(dir.path(), &mut renamed), Err(CheckpointError::Missing(_))));
    }
}
