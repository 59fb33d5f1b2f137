//! Directory-backed artifact store: `cases/` holds case files, `models/`
//! trained model documents. Ids are file stems.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cascade_core::grid::native::{case_hash, Dialect};
use cascade_core::grid::Network;
use cascade_core::influence::TrainedModel;
use cascade_core::pipeline::{load_case, load_model};
use cascade_core::{Error, Result};
use serde::Serialize;

#[derive(Debug)]
pub struct CaseEntry {
    pub id: String,
    pub hash: String,
    pub net: Network,
}

#[derive(Debug)]
pub struct ModelEntry {
    pub id: String,
    pub model: TrainedModel,
}

/// Immutable view of everything loaded so far. Requests hold an `Arc` to
/// one snapshot, so a concurrent load never shows up half-done.
#[derive(Debug, Default)]
pub struct Snapshot {
    pub cases: BTreeMap<String, Arc<CaseEntry>>,
    pub models: BTreeMap<String, Arc<ModelEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseListing {
    pub id: String,
    pub case_hash: String,
    pub n_buses: usize,
    pub n_branches: usize,
    pub n_generators: usize,
    pub total_load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelListing {
    pub id: String,
    pub case_hash: String,
    pub config_hash: String,
    pub policy: cascade_core::cascade::Policy,
    pub loading_levels: Vec<f64>,
    pub n_train: usize,
    pub n_branches: usize,
    pub n_buses: usize,
}

impl Snapshot {
    pub fn case_listing(&self) -> Vec<CaseListing> {
        self.cases
            .values()
            .map(|c| CaseListing {
                id: c.id.clone(),
                case_hash: c.hash.clone(),
                n_buses: c.net.n_buses(),
                n_branches: c.net.n_branches(),
                n_generators: c.net.generators().len(),
                total_load: c.net.total_load(),
            })
            .collect()
    }

    pub fn model_listing(&self) -> Vec<ModelListing> {
        self.models
            .values()
            .map(|m| {
                let p = &m.model.provenance;
                ModelListing {
                    id: m.id.clone(),
                    case_hash: p.case_hash.clone(),
                    config_hash: p.config_hash.clone(),
                    policy: p.policy,
                    loading_levels: p.loading_levels.clone(),
                    n_train: p.n_train,
                    n_branches: m.model.link_model.n_branches(),
                    n_buses: m.model.shed_model.n_buses(),
                }
            })
            .collect()
    }
}

fn stem(path: &Path) -> Option<String> {
    path.file_stem().and_then(|s| s.to_str()).map(str::to_owned)
}

fn files_in(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> =
        fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_file()).collect();
    files.sort();
    Ok(files)
}

pub fn cases_dir(store: &Path) -> PathBuf {
    store.join("cases")
}

pub fn models_dir(store: &Path) -> PathBuf {
    store.join("models")
}

pub fn load_case_file(path: &Path) -> Result<CaseEntry> {
    let id = stem(path).ok_or_else(|| Error::Config(format!("bad case file name {}", path.display())))?;
    let net = load_case(&path.to_string_lossy(), Some(Dialect::from_path(path)))?;
    Ok(CaseEntry { id, hash: case_hash(&net), net })
}

pub fn load_model_file(path: &Path) -> Result<ModelEntry> {
    let id = stem(path).ok_or_else(|| Error::Config(format!("bad model file name {}", path.display())))?;
    Ok(ModelEntry { id, model: load_model(path)? })
}

/// Reads every case (`.m`, `.json`) and model (`.json`) under `store`.
/// Unreadable files are logged and left out.
pub fn scan(store: &Path) -> Result<Snapshot> {
    let mut snap = Snapshot::default();
    for path in files_in(&cases_dir(store))? {
        if !matches!(path.extension().and_then(|e| e.to_str()), Some("m" | "json")) {
            continue;
        }
        match load_case_file(&path) {
            Ok(c) => {
                snap.cases.insert(c.id.clone(), Arc::new(c));
            }
            Err(e) => log::warn!("skipping case {}: {e}", path.display()),
        }
    }
    for path in files_in(&models_dir(store))? {
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        match load_model_file(&path) {
            Ok(m) => {
                snap.models.insert(m.id.clone(), Arc::new(m));
            }
            Err(e) => log::warn!("skipping model {}: {e}", path.display()),
        }
    }
    Ok(snap)
}
