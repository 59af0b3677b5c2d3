//! Reading and writing matrices, feature records, models and JSON reports.

use std::fs;
use std::path::{Path, PathBuf};

use raf_core::features::ABSOLUTE_NAMES;
use raf_core::model::SelectorModel;
use raf_core::sparse::{parse_matrix_market, write_matrix_market};
use raf_core::{CsrMatrix, FeatureBundle};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn read_matrix(path: &Path) -> Result<CsrMatrix> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    parse_matrix_market(&text).map_err(Error::core_at(path))
}

pub fn write_matrix(path: &Path, matrix: &CsrMatrix) -> Result<()> {
    write_bytes(path, write_matrix_market(matrix).as_bytes())
}

/// Writes `bytes`, creating parent directories.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(Error::io(parent))?;
    }
    fs::write(path, bytes).map_err(Error::io(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.into(), line: source.line(), source })
}

/// Human-readable description stored next to each `.rafb` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub id: String,
    pub mode: String,
    pub m: usize,
    /// Matrix path as recorded in the manifest.
    pub source: String,
    /// `(name, value)` pairs of the absolute values; empty in baseline mode.
    pub absolute: Vec<(String, f64)>,
}

/// Sidecar path for a feature record: `x.rafb` -> `x.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_features(path: &Path, id: &str, source: &Path, bundle: &FeatureBundle) -> Result<()> {
    write_bytes(path, &bundle.to_bytes())?;
    let absolute = bundle
        .absolute()
        .map(|a| ABSOLUTE_NAMES.iter().map(|n| n.to_string()).zip(a.to_array()).collect())
        .unwrap_or_default();
    let sidecar = FeatureSidecar {
        id: id.into(),
        mode: if bundle.is_baseline() { "baseline" } else { "raf" }.into(),
        m: bundle.resolution(),
        source: source.to_string_lossy().into_owned(),
        absolute,
    };
    write_json(&sidecar_path(path), &sidecar)
}

pub fn read_features(path: &Path) -> Result<FeatureBundle> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    FeatureBundle::from_bytes(&bytes).map_err(Error::core_at(path))
}

pub fn save_model(path: &Path, model: &SelectorModel) -> Result<()> {
    write_bytes(path, &model.to_bytes())
}

pub fn load_model(path: &Path) -> Result<SelectorModel> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    SelectorModel::from_bytes(&bytes).map_err(Error::core_at(path))
}
