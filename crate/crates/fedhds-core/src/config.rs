//! Run configuration: one JSON document (schema_version 1) covering the
//! selector, reducer, clustering, privacy, partitioning, training, round
//! count and data sources.
//!
//! Every random stream of a run is derived from `master_seed` via
//! [`crate::rng::derive_seed`]; seeds embedded in nested module configs
//! are ignored by the simulator so that one master seed reproduces the
//! whole run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::HdbscanConfig;
use crate::error::{Error, Result};
use crate::features::SyntheticSpec;
use crate::fedsim::model::TrainConfig;
use crate::partition::PartitionSpec;
use crate::privacy::DpConfig;
use crate::reduce::ReducerConfig;
use crate::selection::SelectorKind;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionSchedule {
    /// Active clients re-run selection in every round (the default).
    EveryRound,
    /// One global selection pass over all clients before round 0; the
    /// resulting coresets are reused in every round.
    Once,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFeatures {
    /// Train on a shared k-dimensional PCA projection (basis fitted on
    /// the held-out features so it is identical for every client).
    Fused,
    /// Train directly on the concatenated layer features.
    Raw,
}

/// Synthetic data source: one generated archive, split into a held-out
/// set and partitioned clients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticData {
    pub spec: SyntheticSpec,
    pub partition: PartitionSpec,
    /// Labels whose samples are entirely held out for evaluation.
    #[serde(default)]
    pub holdout_labels: Vec<u32>,
    /// Fraction of the remaining samples held out uniformly at random.
    #[serde(default)]
    pub heldout_fraction: f64,
}

/// Pre-extracted data source: one archive file per client plus a
/// held-out archive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchiveData {
    pub clients: Vec<PathBuf>,
    pub heldout: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataConfig {
    Synthetic(SyntheticData),
    Archives(ArchiveData),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_rounds")]
    pub rounds: u64,
    #[serde(default = "default_active_ratio")]
    pub active_ratio: f64,
    #[serde(default = "default_schedule")]
    pub selection_schedule: SelectionSchedule,
    pub selector: SelectorKind,
    #[serde(default)]
    pub reducer: ReducerConfig,
    #[serde(default)]
    pub intra_cluster: HdbscanConfig,
    #[serde(default = "default_inter_cluster")]
    pub inter_cluster: HdbscanConfig,
    #[serde(default)]
    pub privacy: DpConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_model_features")]
    pub model_features: ModelFeatures,
    pub data: DataConfig,
    /// Adapter hyperparameters carried through to the summary for
    /// record-keeping; the toy model does not consume them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lora: Option<serde_json::Value>,
}

fn default_rounds() -> u64 {
    40
}

fn default_active_ratio() -> f64 {
    0.05
}

fn default_schedule() -> SelectionSchedule {
    SelectionSchedule::EveryRound
}

fn default_inter_cluster() -> HdbscanConfig {
    HdbscanConfig::new(2)
}

fn default_model_features() -> ModelFeatures {
    ModelFeatures::Fused
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<RunConfig> {
        let text = std::fs::read_to_string(&path).map_err(|e| {
            Error::Config(format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        if !(self.active_ratio > 0.0 && self.active_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "active_ratio must lie in (0, 1], got {}",
                self.active_ratio
            )));
        }
        self.selector.validate()?;
        self.reducer.validate()?;
        self.intra_cluster.validate()?;
        self.inter_cluster.validate()?;
        self.privacy.validate()?;
        self.train.validate()?;
        match &self.data {
            DataConfig::Synthetic(synth) => {
                synth.spec.validate()?;
                synth.partition.validate()?;
                if !(0.0..1.0).contains(&synth.heldout_fraction) {
                    return Err(Error::Config(format!(
                        "heldout_fraction must lie in [0, 1), got {}",
                        synth.heldout_fraction
                    )));
                }
                if synth.holdout_labels.is_empty() && synth.heldout_fraction == 0.0 {
                    return Err(Error::Config(
                        "synthetic data needs holdout_labels or a positive heldout_fraction"
                            .into(),
                    ));
                }
                for &label in &synth.holdout_labels {
                    if label as usize >= synth.spec.n_modes {
                        return Err(Error::Config(format!(
                            "holdout label {label} exceeds the mode count {}",
                            synth.spec.n_modes
                        )));
                    }
                }
            }
            DataConfig::Archives(archives) => {
                if archives.clients.is_empty() {
                    return Err(Error::Config("no client archives configured".into()));
                }
                for path in archives.clients.iter().chain([&archives.heldout]) {
                    if !path.exists() {
                        return Err(Error::Config(format!(
                            "referenced path does not exist: {}",
                            path.display()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of clients implied by the data source.
    pub fn n_clients(&self) -> usize {
        match &self.data {
            DataConfig::Synthetic(synth) => synth.partition.n_clients,
            DataConfig::Archives(archives) => archives.clients.len(),
        }
    }
}
