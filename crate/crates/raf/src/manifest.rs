//! JSON-lines corpus manifest: one labeled matrix per line.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use raf_core::generator::{class_histogram, class_ratio, PdeSpec};
use raf_core::solvers::{LabelRecord, RankBy};
use raf_core::{Method, MethodCatalog, SolveOutcome, SolveStatus};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEntry {
    pub method: Method,
    pub status: SolveStatus,
    pub iterations: usize,
    pub relres: f64,
    pub walltime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Matrix file, relative to the manifest's directory when possible.
    pub path: String,
    /// Generating spec for synthetic matrices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<PdeSpec>,
    pub order: usize,
    pub nnz: usize,
    /// Catalog fingerprint the entries were produced with.
    pub fingerprint: String,
    pub rank_by: RankBy,
    pub cost_cap: f64,
    pub entries: Vec<MethodEntry>,
    /// `None` marks an unlabelable matrix.
    pub optimal_index: Option<usize>,
    pub optimal_method: Option<Method>,
}

impl ManifestEntry {
    pub fn new(path: String, spec: Option<PdeSpec>, nnz: usize, order: usize, record: &LabelRecord) -> Self {
        let entries = record
            .methods
            .iter()
            .zip(&record.outcomes)
            .map(|(&method, o)| MethodEntry {
                method,
                status: o.status,
                iterations: o.iterations,
                relres: o.final_relres,
                walltime: o.walltime,
            })
            .collect();
        let catalog = MethodCatalog::new(record.methods.clone()).expect("labeled with a valid catalog");
        Self {
            id: record.matrix_id.clone(),
            path,
            spec,
            order,
            nnz,
            fingerprint: catalog.fingerprint(),
            rank_by: record.rank_by,
            cost_cap: record.cost_cap,
            entries,
            optimal_index: record.optimal_index,
            optimal_method: record.optimal_index.map(|i| record.methods[i]),
        }
    }

    pub fn is_labelable(&self) -> bool {
        self.optimal_index.is_some()
    }

    pub fn record(&self) -> LabelRecord {
        LabelRecord {
            matrix_id: self.id.clone(),
            rank_by: self.rank_by,
            methods: self.entries.iter().map(|e| e.method).collect(),
            outcomes: self
                .entries
                .iter()
                .map(|e| SolveOutcome {
                    status: e.status,
                    iterations: e.iterations,
                    final_relres: e.relres,
                    walltime: e.walltime,
                })
                .collect(),
            optimal_index: self.optimal_index,
            cost_cap: self.cost_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    /// Directory relative matrix paths resolve against.
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into(), entries: Vec::new() }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(line).map_err(|source| Error::Json {
                path: path.into(),
                line: i + 1,
                source,
            })?;
            entries.push(entry);
        }
        Ok(Self { root: parent_dir(path), entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for e in &self.entries {
            text.push_str(&serde_json::to_string(e).expect("manifest entries serialize"));
            text.push('\n');
        }
        io::write_bytes(path, text.as_bytes())
    }

    pub fn matrix_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    /// `path` relative to the manifest root, or unchanged if outside it.
    pub fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.root).unwrap_or(path).to_string_lossy().into_owned()
    }

    pub fn labelable(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.is_labelable())
    }

    /// Catalog shared by every entry; entries produced with another catalog
    /// are an error.
    pub fn catalog(&self) -> Result<MethodCatalog> {
        let first = self.entries.first().ok_or(raf_core::Error::EmptyCorpus)?;
        let catalog = MethodCatalog::new(first.entries.iter().map(|e| e.method).collect())?;
        let fp = catalog.fingerprint();
        if let Some(bad) = self.entries.iter().find(|e| e.fingerprint != fp) {
            return Err(raf_core::Error::CatalogMismatch { model: fp, data: bad.fingerprint.clone() }.into());
        }
        Ok(catalog)
    }

    pub fn summary(&self) -> CorpusSummary {
        let labels: Vec<usize> = self.labelable().filter_map(|e| e.optimal_index).collect();
        let histogram = class_histogram(labels.iter().copied());
        let classes = histogram
            .iter()
            .map(|(&i, &c)| {
                let name = self
                    .labelable()
                    .find(|e| e.optimal_index == Some(i))
                    .and_then(|e| e.optimal_method)
                    .map_or_else(|| i.to_string(), |m| m.to_string());
                (name, c)
            })
            .collect();
        CorpusSummary {
            count: self.entries.len(),
            labelable: labels.len(),
            unlabelable: self.entries.len() - labels.len(),
            classes,
            class_ratio: class_ratio(&histogram),
            fingerprint: self.entries.first().map(|e| e.fingerprint.clone()),
        }
    }
}

pub(crate) fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Label distribution of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub count: usize,
    pub labelable: usize,
    pub unlabelable: usize,
    /// Optimal-method counts keyed by method name.
    pub classes: BTreeMap<String, usize>,
    /// Largest over smallest class count.
    pub class_ratio: Option<f64>,
    pub fingerprint: Option<String>,
}
