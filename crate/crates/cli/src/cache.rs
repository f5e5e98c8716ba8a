//! Reference values on an evaluation grid, cached by content hash.

use std::path::{Path, PathBuf};

use pinn_pricing::models::PdeModel;
use pinn_pricing::oracles::EvalGrid;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    values: Vec<f64>,
}

/// Hex SHA-256 of the model parameters and grid axes.
pub fn cache_key(model: &PdeModel, grid: &EvalGrid) -> String {
    let payload = serde_json::to_string(&(model, grid.axes())).expect("serializable");
    hex::encode(Sha256::digest(payload.as_bytes()))
}

pub fn cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join("oracle_cache").join(format!("{key}.json"))
}

/// Loads cached values, or computes and stores them. `None` for models
/// without a reference solution.
pub fn reference_values(
    dir: &Path,
    model: &PdeModel,
    grid: &EvalGrid,
) -> Result<Option<Vec<f64>>, Box<dyn std::error::Error + Send + Sync>> {
    if !model.has_reference() {
        return Ok(None);
    }
    let key = cache_key(model, grid);
    let path = cache_path(dir, &key);
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(e) = serde_json::from_str::<Entry>(&text) {
            if e.key == key && e.values.len() == grid.len() {
                return Ok(Some(e.values));
            }
        }
    }
    let values = grid.reference_values(model)?;
    std::fs::create_dir_all(path.parent().expect("has parent"))?;
    std::fs::write(&path, serde_json::to_string(&Entry { key, values: values.clone() })?)?;
    Ok(Some(values))
}
