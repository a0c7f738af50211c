//! Materializing the configured data source into per-client datasets and
//! a held-out evaluation set.

use crate::config::{DataConfig, ModelFeatures, RunConfig};
use crate::error::{Error, Result};
use crate::features::{self, FeatureArchive};
use crate::linalg::Matrix;
use crate::partition::{self, PartitionScheme, PartitionSpec};
use crate::reduce;
use crate::rng::{derive_seed, DetRng};

/// One client's local data.
#[derive(Debug, Clone)]
pub struct ClientData {
    pub archive: FeatureArchive,
}

impl ClientData {
    pub fn n_samples(&self) -> usize {
        self.archive.n_samples()
    }
}

/// Everything the round loop needs: clients, held-out set, class count,
/// and the feature space the toy model trains in.
pub struct SimData {
    pub clients: Vec<ClientData>,
    pub heldout: FeatureArchive,
    pub n_classes: usize,
    pub model_space: ModelSpace,
}

/// Projection from raw archive features into the model's input space.
pub enum ModelSpace {
    Raw,
    /// Shared linear map: center on `mean`, project onto `components`
    /// (k x d), fitted once on the held-out features.
    Projected { mean: Vec<f64>, components: Matrix },
}

impl ModelSpace {
    pub fn dim(&self, raw_dim: usize) -> usize {
        match self {
            ModelSpace::Raw => raw_dim,
            ModelSpace::Projected { components, .. } => components.rows(),
        }
    }

    pub fn project(&self, raw: &Matrix) -> Matrix {
        match self {
            ModelSpace::Raw => raw.clone(),
            ModelSpace::Projected { mean, components } => {
                let k = components.rows();
                let mut out = Matrix::zeros(raw.rows(), k);
                for i in 0..raw.rows() {
                    let row = raw.row(i);
                    for c in 0..k {
                        let mut acc = 0.0;
                        for j in 0..raw.cols() {
                            acc += (row[j] - mean[j]) * components.get(c, j);
                        }
                        out.set(i, c, acc);
                    }
                }
                out
            }
        }
    }
}

/// Builds the simulation data from the config. All randomness (synthetic
/// generation, partitioning, held-out split) is derived from the master
/// seed.
pub fn load_sim_data(config: &RunConfig) -> Result<SimData> {
    let (clients, heldout) = match &config.data {
        DataConfig::Synthetic(synth) => split_synthetic(config, synth)?,
        DataConfig::Archives(paths) => {
            let clients = paths
                .clients
                .iter()
                .map(|p| Ok(ClientData { archive: features::read_archive(p)? }))
                .collect::<Result<Vec<_>>>()?;
            let heldout = features::read_archive(&paths.heldout)?;
            (clients, heldout)
        }
    };

    if heldout.n_samples() == 0 {
        return Err(Error::Config("held-out set is empty".into()));
    }
    let heldout_labels = heldout
        .labels
        .as_ref()
        .ok_or_else(|| Error::Config("held-out archive has no labels".into()))?;
    let mut n_classes = heldout_labels.iter().copied().max().unwrap_or(0) as usize + 1;
    for client in &clients {
        let labels = client
            .archive
            .labels
            .as_ref()
            .ok_or_else(|| Error::Config("client archive has no labels".into()))?;
        if let Some(max) = labels.iter().copied().max() {
            n_classes = n_classes.max(max as usize + 1);
        }
        if client.archive.feature_dim() != heldout.feature_dim() {
            return Err(Error::DimensionMismatch(
                "client and held-out archives disagree on feature dimension".into(),
            ));
        }
    }

    let model_space = match config.model_features {
        ModelFeatures::Raw => ModelSpace::Raw,
        ModelFeatures::Fused => {
            let raw = heldout.to_matrix();
            let k = config.reducer.output_dim;
            let pca = reduce::pca(&raw, k)?;
            ModelSpace::Projected {
                mean: raw.mean_row(),
                components: pca.components,
            }
        }
    };

    Ok(SimData {
        clients,
        heldout,
        n_classes,
        model_space,
    })
}

/// The synthetic split: held-out indices, training indices (both in the
/// generated archive's index space) and the per-training-sample client
/// assignment.
pub struct SplitPlan {
    pub archive: FeatureArchive,
    pub heldout_idx: Vec<usize>,
    pub train_idx: Vec<usize>,
    pub assignment: crate::partition::ClientAssignment,
}

/// Generates the synthetic archive and plans its held-out/client split.
pub fn synthetic_split_plan(
    config: &RunConfig,
    synth: &crate::config::SyntheticData,
) -> Result<SplitPlan> {
    let archive = features::synth_archive(
        &synth.spec,
        derive_seed(config.master_seed, "features.synth", 0, 0),
    )?;
    let labels = archive.labels.clone().expect("synthetic archives are labeled");
    let n = archive.n_samples();

    let mut is_heldout = vec![false; n];
    for (i, l) in labels.iter().enumerate() {
        if synth.holdout_labels.contains(l) {
            is_heldout[i] = true;
        }
    }
    if synth.heldout_fraction > 0.0 {
        let remaining: Vec<usize> = (0..n).filter(|&i| !is_heldout[i]).collect();
        let count = (synth.heldout_fraction * remaining.len() as f64).round() as usize;
        let mut rng = DetRng::new(derive_seed(config.master_seed, "data.heldout", 0, 0));
        for pick in rng.sample_distinct(remaining.len(), count.min(remaining.len())) {
            is_heldout[remaining[pick]] = true;
        }
    }

    let heldout_idx: Vec<usize> = (0..n).filter(|&i| is_heldout[i]).collect();
    let train_idx: Vec<usize> = (0..n).filter(|&i| !is_heldout[i]).collect();
    if heldout_idx.is_empty() {
        return Err(Error::Config("held-out split came out empty".into()));
    }
    if train_idx.len() < synth.partition.n_clients {
        return Err(Error::Config(format!(
            "{} training samples cannot cover {} clients",
            train_idx.len(),
            synth.partition.n_clients
        )));
    }

    let train_labels: Vec<u32> = train_idx.iter().map(|&i| labels[i]).collect();
    let spec = PartitionSpec {
        seed: derive_seed(config.master_seed, "partition", 0, 0),
        ..synth.partition
    };
    let assignment = match spec.scheme {
        PartitionScheme::Dirichlet => partition::dirichlet_partition(&train_labels, &spec)?,
        PartitionScheme::Meta => partition::meta_partition(&train_labels, &spec)?,
    };
    Ok(SplitPlan {
        archive,
        heldout_idx,
        train_idx,
        assignment,
    })
}

fn split_synthetic(
    config: &RunConfig,
    synth: &crate::config::SyntheticData,
) -> Result<(Vec<ClientData>, FeatureArchive)> {
    let plan = synthetic_split_plan(config, synth)?;
    let heldout = plan.archive.subset(&plan.heldout_idx);
    let train = plan.archive.subset(&plan.train_idx);
    let clients = plan
        .assignment
        .client_samples()
        .into_iter()
        .map(|samples| ClientData {
            archive: train.subset(&samples),
        })
        .collect();
    Ok((clients, heldout))
}
