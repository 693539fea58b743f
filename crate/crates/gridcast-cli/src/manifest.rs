//! Training-run manifest: records what was trained, from what inputs,
//! and the hash of every artifact so later commands can refuse to run
//! against files that do not match.
//!
//! The manifest holds no timestamps or host details; a rerun of the same
//! training command over the same inputs produces byte-identical output.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use gridcast_core::config::ExperimentConfig;
use gridcast_core::features::DayClass;
use gridcast_core::pipeline::HorizonModel;

use crate::error::CliError;

pub const MANIFEST_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// One persisted horizon model file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestModel {
    pub file: String,
    pub seed: u64,
    /// "day1" or "dayn".
    pub day_class: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub tool_version: String,
    pub grid_id: String,
    pub config_sha256: String,
    pub data_sha256: String,
    pub config: ExperimentConfig,
    pub models: Vec<ManifestModel>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

fn day_class_tag(class: DayClass) -> &'static str {
    match class {
        DayClass::Day1 => "day1",
        DayClass::DayN => "dayn",
    }
}

pub fn model_file_name(class: DayClass, seed: u64) -> String {
    format!("{}_seed{}.json", day_class_tag(class), seed)
}

impl Manifest {
    pub fn new(
        grid_id: &str,
        config: &ExperimentConfig,
        config_bytes: &[u8],
        data_bytes: &[u8],
    ) -> Self {
        Manifest {
            format_version: MANIFEST_FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            grid_id: grid_id.to_string(),
            config_sha256: sha256_hex(config_bytes),
            data_sha256: sha256_hex(data_bytes),
            config: config.clone(),
            models: Vec::new(),
        }
    }

    pub fn push_model(&mut self, class: DayClass, seed: u64, json: &str) -> String {
        let file = model_file_name(class, seed);
        self.models.push(ManifestModel {
            file: file.clone(),
            seed,
            day_class: day_class_tag(class).to_string(),
            sha256: sha256_hex(json.as_bytes()),
        });
        file
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST_FILE);
        let mut json = serde_json::to_string_pretty(self).map_err(|source| CliError::Json {
            path: path.display().to_string(),
            source,
        })?;
        json.push('\n');
        fs::write(&path, json).map_err(|e| CliError::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = fs::read(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                CliError::Usage(format!(
                    "{} not found: not a model directory produced by `gridcast train`",
                    path.display()
                ))
            } else {
                CliError::io(&path, e)
            }
        })?;
        let manifest: Manifest =
            serde_json::from_slice(&bytes).map_err(|source| CliError::Json {
                path: path.display().to_string(),
                source,
            })?;
        if manifest.format_version != MANIFEST_FORMAT_VERSION {
            return Err(CliError::Usage(format!(
                "manifest format_version {} unsupported (expected {})",
                manifest.format_version, MANIFEST_FORMAT_VERSION
            )));
        }
        Ok(manifest)
    }

    /// Seeds with a complete day1 + dayn pair, ascending.
    pub fn seeds(&self) -> Vec<u64> {
        let day1: BTreeSet<u64> = self
            .models
            .iter()
            .filter(|m| m.day_class == "day1")
            .map(|m| m.seed)
            .collect();
        let dayn: BTreeSet<u64> = self
            .models
            .iter()
            .filter(|m| m.day_class == "dayn")
            .map(|m| m.seed)
            .collect();
        day1.intersection(&dayn).copied().collect()
    }

    fn entry(&self, class: DayClass, seed: u64) -> Result<&ManifestModel, CliError> {
        let tag = day_class_tag(class);
        self.models
            .iter()
            .find(|m| m.seed == seed && m.day_class == tag)
            .ok_or_else(|| {
                CliError::Usage(format!(
                    "manifest has no {tag} model for seed {seed} (available seeds: {:?})",
                    self.seeds()
                ))
            })
    }

    fn load_model(&self, dir: &Path, class: DayClass, seed: u64) -> Result<HorizonModel, CliError> {
        let entry = self.entry(class, seed)?;
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(CliError::Usage(format!(
                "{} does not match the checksum recorded in the manifest; \
                 the model directory has been modified",
                path.display()
            )));
        }
        let text = String::from_utf8(bytes).map_err(|e| {
            CliError::Usage(format!("{}: not valid UTF-8: {e}", path.display()))
        })?;
        let model = HorizonModel::from_json_str(&text)?;
        if model.day_class() != class {
            return Err(CliError::Usage(format!(
                "{} holds a {:?} model but the manifest lists it as {:?}",
                path.display(),
                model.day_class(),
                class
            )));
        }
        Ok(model)
    }

    /// Load the day1 + dayn pair for one seed, verifying checksums.
    pub fn load_pair(
        &self,
        dir: &Path,
        seed: u64,
    ) -> Result<(HorizonModel, HorizonModel), CliError> {
        let day1 = self.load_model(dir, DayClass::Day1, seed)?;
        let dayn = self.load_model(dir, DayClass::DayN, seed)?;
        Ok((day1, dayn))
    }
}
