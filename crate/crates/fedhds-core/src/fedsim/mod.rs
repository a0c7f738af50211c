//! The federated round loop: client sampling, coreset selection, local
//! training, weighted aggregation and held-out evaluation.

pub mod data;
pub mod model;

pub use model::{aggregate, evaluate, local_train, ModelParams, Optimizer, TrainConfig};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cluster::HdbscanConfig;
use crate::config::{RunConfig, SelectionSchedule};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::privacy;
use crate::reduce::ReducerConfig;
use crate::rng::{derive_seed, DetRng};
use crate::selection::{
    self, build_coreset, client_intra_phase, coreset_from_all_groups, inter_select,
    CentroidUpload, Coreset, IntraSelection, SelectionNotice, SelectorKind,
};

use data::{load_sim_data, SimData};

/// Uniformly samples the round's active client set:
/// `max(1, round(active_ratio * n_clients))` distinct ids, deterministic
/// per `(seed, round)`.
pub fn sample_clients(n_clients: usize, active_ratio: f64, round: u64, seed: u64) -> Result<Vec<u64>> {
    if !(active_ratio > 0.0 && active_ratio <= 1.0) {
        return Err(Error::Domain(format!(
            "active_ratio must lie in (0, 1], got {active_ratio}"
        )));
    }
    if n_clients == 0 {
        return Err(Error::EmptyInput("sample_clients with no clients"));
    }
    let m = ((active_ratio * n_clients as f64).round() as usize).clamp(1, n_clients);
    let mut rng = DetRng::new(derive_seed(seed, "sample_clients", round, 0));
    Ok(rng.sample_distinct(n_clients, m).into_iter().map(|i| i as u64).collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseCounts {
    /// Intra-phase noise points across the round's selecting clients.
    pub intra_points: usize,
    /// Second-level noise uploads (each selected individually).
    pub inter_uploads: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionCounts {
    pub uploads: usize,
    pub second_level_clusters: usize,
    pub selected: usize,
}

/// Mean intra-clustering quality over the round's active clients, where
/// defined (clients with a single group carry no internal metrics).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringQuality {
    pub calinski_harabasz: f64,
    pub silhouette: f64,
    pub f1: f64,
    pub clients_measured: usize,
}

/// One line of `run.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub active_clients: Vec<u64>,
    /// Coreset size per active client, aligned with `active_clients`.
    pub coreset_sizes: Vec<usize>,
    pub data_ratio: f64,
    pub cumulative_data_ratio: f64,
    pub heldout_accuracy: f64,
    pub heldout_macro_f1: f64,
    pub noise_counts: NoiseCounts,
    pub selection_counts: SelectionCounts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clustering_quality: Option<ClusteringQuality>,
}

/// Final `summary.json` payload. Holds only run-derived values so two
/// runs of one config are byte-identical regardless of output paths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub master_seed: u64,
    pub selector: SelectorKind,
    pub rounds: u64,
    pub n_clients: usize,
    pub n_classes: usize,
    pub initial_accuracy: f64,
    pub initial_macro_f1: f64,
    pub final_accuracy: f64,
    pub final_macro_f1: f64,
    pub cumulative_data_ratio: f64,
    pub total_selected_samples: u64,
    pub total_available_samples: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lora: Option<serde_json::Value>,
}

#[derive(Debug, Clone)]
pub struct RunHistory {
    pub records: Vec<RoundRecord>,
    pub summary: RunSummary,
}

/// Outcome of one selection pass over a set of clients.
pub struct SelectionPass {
    pub coresets: BTreeMap<u64, Coreset>,
    pub uploads: Vec<CentroidUpload>,
    pub notices: Vec<SelectionNotice>,
    pub noise: NoiseCounts,
    pub counts: SelectionCounts,
}

/// Driver state shared by `run` and the standalone selection command.
pub struct Simulator {
    config: RunConfig,
    pub data: SimData,
    /// Per-client intra results; inputs are round-independent, so the
    /// cache is exact, not an approximation.
    intra_cache: BTreeMap<u64, IntraSelection>,
    /// Pooled centralized selection, computed once.
    coreset_cent_cache: Option<BTreeMap<u64, Coreset>>,
    /// Coresets frozen by the `once` schedule.
    once_cache: Option<BTreeMap<u64, Coreset>>,
}

impl Simulator {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let data = load_sim_data(&config)?;
        Ok(Simulator {
            config,
            data,
            intra_cache: BTreeMap::new(),
            coreset_cent_cache: None,
            once_cache: None,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    fn reducer_for(&self, client: u64) -> ReducerConfig {
        ReducerConfig {
            seed: derive_seed(self.config.master_seed, "reduce", 0, client),
            ..self.config.reducer.clone()
        }
    }

    fn intra_for(&mut self, client: u64) -> Result<&IntraSelection> {
        if !self.intra_cache.contains_key(&client) {
            let archive = &self.data.clients[client as usize].archive;
            let features = match self.config.selector {
                SelectorKind::Feddb => archive.last_layer_matrix(),
                _ => archive.to_matrix(),
            };
            let reducer = self.reducer_for(client);
            let intra = client_intra_phase(&features, &reducer, &self.config.intra_cluster)?;
            self.intra_cache.insert(client, intra);
        }
        Ok(&self.intra_cache[&client])
    }

    /// Runs the configured selector over `clients` for one round.
    pub fn selection_pass(&mut self, round: u64, clients: &[u64]) -> Result<SelectionPass> {
        match self.config.selector {
            SelectorKind::Fedhds => self.hierarchical_pass(round, clients),
            SelectorKind::FedhdsIntra | SelectorKind::Feddb => self.intra_only_pass(round, clients),
            SelectorKind::Random { ratio } => self.random_pass(round, clients, ratio),
            SelectorKind::Perplexity { ratio } => self.perplexity_pass(clients, ratio),
            SelectorKind::CoresetCent { ratio } => self.coreset_cent_pass(clients, ratio),
        }
    }

    fn hierarchical_pass(&mut self, round: u64, clients: &[u64]) -> Result<SelectionPass> {
        let mut uploads = Vec::new();
        let mut intra_noise = 0usize;
        for &client in clients {
            self.intra_for(client)?;
            let intra = &self.intra_cache[&client];
            intra_noise += intra.clustering.n_noise();
            let mut rng = DetRng::new(derive_seed(
                self.config.master_seed,
                "privacy.noise",
                round,
                client,
            ));
            for (group_id, centroid) in intra.raw_centroids.iter().enumerate() {
                let transformed = privacy::transform_centroid(centroid, &self.config.privacy, &mut rng)?;
                uploads.push(CentroidUpload {
                    round,
                    client_id: client,
                    group_id: group_id as u32,
                    values: transformed.values,
                });
            }
        }

        let notices = inter_select(&uploads, &self.config.inter_cluster)?;
        let selected: usize = notices.iter().map(|n| n.selected_group_ids.len()).sum();

        // Reconstruct the second-level split for the record counts.
        let inter_points = Matrix::from_rows(
            &{
                let mut ordered = uploads.clone();
                ordered.sort_by_key(|u| (u.client_id, u.group_id));
                ordered.iter().map(|u| u.values.clone()).collect::<Vec<_>>()
            },
        )?;
        let inter_clustering = crate::cluster::hdbscan(&inter_points, &self.config.inter_cluster)?;
        let inter_noise = inter_clustering.n_noise();
        let second_level_clusters = inter_clustering.groups.len();

        let mut coresets = BTreeMap::new();
        for notice in &notices {
            let intra = &self.intra_cache[&notice.client_id];
            let coreset = build_coreset(&intra.fused, &intra.clustering, &intra.raw_centroids, notice)?;
            coresets.insert(notice.client_id, coreset);
        }
        Ok(SelectionPass {
            coresets,
            counts: SelectionCounts {
                uploads: uploads.len(),
                second_level_clusters,
                selected,
            },
            noise: NoiseCounts {
                intra_points: intra_noise,
                inter_uploads: inter_noise,
            },
            uploads,
            notices,
        })
    }

    fn intra_only_pass(&mut self, round: u64, clients: &[u64]) -> Result<SelectionPass> {
        let mut coresets = BTreeMap::new();
        let mut intra_noise = 0usize;
        for &client in clients {
            self.intra_for(client)?;
            let intra = &self.intra_cache[&client];
            intra_noise += intra.clustering.n_noise();
            coresets.insert(client, coreset_from_all_groups(client, intra, round)?);
        }
        Ok(SelectionPass {
            coresets,
            uploads: Vec::new(),
            notices: Vec::new(),
            noise: NoiseCounts {
                intra_points: intra_noise,
                inter_uploads: 0,
            },
            counts: SelectionCounts::default(),
        })
    }

    fn random_pass(&mut self, round: u64, clients: &[u64], ratio: f64) -> Result<SelectionPass> {
        let round_key = match self.config.selection_schedule {
            SelectionSchedule::EveryRound => round,
            SelectionSchedule::Once => 0,
        };
        let mut coresets = BTreeMap::new();
        for &client in clients {
            let n = self.data.clients[client as usize].n_samples();
            let seed = derive_seed(self.config.master_seed, "selection.random", round_key, client);
            coresets.insert(
                client,
                Coreset {
                    client_id: client,
                    sample_indices: selection::random_select(n, ratio, seed)?,
                },
            );
        }
        Ok(SelectionPass {
            coresets,
            uploads: Vec::new(),
            notices: Vec::new(),
            noise: NoiseCounts::default(),
            counts: SelectionCounts::default(),
        })
    }

    fn perplexity_pass(&mut self, clients: &[u64], ratio: f64) -> Result<SelectionPass> {
        let mut coresets = BTreeMap::new();
        for &client in clients {
            let archive = &self.data.clients[client as usize].archive;
            let scores = archive.perplexity.as_ref().ok_or_else(|| {
                Error::Config(format!("client {client} archive has no perplexity scores"))
            })?;
            let scores: Vec<f64> = scores.iter().map(|&s| f64::from(s)).collect();
            coresets.insert(
                client,
                Coreset {
                    client_id: client,
                    sample_indices: selection::perplexity_select(&scores, ratio)?,
                },
            );
        }
        Ok(SelectionPass {
            coresets,
            uploads: Vec::new(),
            notices: Vec::new(),
            noise: NoiseCounts::default(),
            counts: SelectionCounts::default(),
        })
    }

    /// Centralized reference: pooled selection computed once, then split
    /// back into per-client coresets.
    fn coreset_cent_pass(&mut self, clients: &[u64], ratio: f64) -> Result<SelectionPass> {
        if self.coreset_cent_cache.is_none() {
            let mut rows = Vec::new();
            let mut owner = Vec::new();
            for (client, data) in self.data.clients.iter().enumerate() {
                let features = data.archive.last_layer_matrix();
                for i in 0..features.rows() {
                    rows.push(features.row(i).to_vec());
                    owner.push((client as u64, i));
                }
            }
            let pooled = Matrix::from_rows(&rows)?;
            let seed = derive_seed(self.config.master_seed, "selection.coreset_cent", 0, 0);
            let picked = selection::coreset_cent(&pooled, ratio, seed)?;
            let mut per_client: BTreeMap<u64, Vec<usize>> = (0..self.data.clients.len())
                .map(|c| (c as u64, Vec::new()))
                .collect();
            for global in picked {
                let (client, local) = owner[global];
                per_client.get_mut(&client).unwrap().push(local);
            }
            self.coreset_cent_cache = Some(
                per_client
                    .into_iter()
                    .map(|(client_id, mut sample_indices)| {
                        sample_indices.sort_unstable();
                        (client_id, Coreset { client_id, sample_indices })
                    })
                    .collect(),
            );
        }
        let cache = self.coreset_cent_cache.as_ref().unwrap();
        Ok(SelectionPass {
            coresets: clients.iter().map(|c| (*c, cache[c].clone())).collect(),
            uploads: Vec::new(),
            notices: Vec::new(),
            noise: NoiseCounts::default(),
            counts: SelectionCounts::default(),
        })
    }

    /// Coresets for the round, honoring the selection schedule.
    fn coresets_for_round(&mut self, round: u64, active: &[u64]) -> Result<SelectionPass> {
        match self.config.selection_schedule {
            SelectionSchedule::EveryRound => self.selection_pass(round, active),
            SelectionSchedule::Once => {
                if self.once_cache.is_none() {
                    let all: Vec<u64> = (0..self.data.clients.len() as u64).collect();
                    let pass = self.selection_pass(0, &all)?;
                    self.once_cache = Some(pass.coresets);
                }
                let cache = self.once_cache.as_ref().unwrap();
                let coresets: BTreeMap<u64, Coreset> = active
                    .iter()
                    .filter_map(|c| cache.get(c).map(|cs| (*c, cs.clone())))
                    .collect();
                Ok(SelectionPass {
                    coresets,
                    uploads: Vec::new(),
                    notices: Vec::new(),
                    noise: NoiseCounts::default(),
                    counts: SelectionCounts::default(),
                })
            }
        }
    }

    /// Runs the full federated loop.
    pub fn run(&mut self) -> Result<RunHistory> {
        let heldout_raw = self.data.heldout.to_matrix();
        let heldout_features = self.data.model_space.project(&heldout_raw);
        let heldout_labels = self.data.heldout.labels.clone().expect("validated");
        let n_classes = self.data.n_classes;
        let model_dim = heldout_features.cols();

        let client_features: Vec<Matrix> = self
            .data
            .clients
            .iter()
            .map(|c| self.data.model_space.project(&c.archive.to_matrix()))
            .collect();
        let client_labels: Vec<Vec<u32>> = self
            .data
            .clients
            .iter()
            .map(|c| c.archive.labels.clone().expect("validated"))
            .collect();
        let dataset_sizes: Vec<usize> = self.data.clients.iter().map(|c| c.n_samples()).collect();

        let mut params = ModelParams::zeros(n_classes, model_dim);
        let (initial_accuracy, initial_macro_f1) =
            evaluate(&params, &heldout_features, &heldout_labels, n_classes)?;

        let sample_seed = derive_seed(self.config.master_seed, "fedsim.sample_clients", 0, 0);
        let mut records = Vec::with_capacity(self.config.rounds as usize);
        let mut cum_selected = 0u64;
        let mut cum_available = 0u64;
        let mut final_accuracy = initial_accuracy;
        let mut final_macro_f1 = initial_macro_f1;

        for round in 0..self.config.rounds {
            let active = sample_clients(
                self.data.clients.len(),
                self.config.active_ratio,
                round,
                sample_seed,
            )?;
            let pass = self.coresets_for_round(round, &active)?;

            let mut coreset_sizes = Vec::with_capacity(active.len());
            let mut updates = Vec::new();
            for &client in &active {
                let coreset = pass.coresets.get(&client);
                let indices = coreset.map_or(&[][..], |c| &c.sample_indices);
                coreset_sizes.push(indices.len());
                if indices.is_empty() {
                    continue;
                }
                let features = subset_rows(&client_features[client as usize], indices);
                let labels: Vec<u32> = indices
                    .iter()
                    .map(|&i| client_labels[client as usize][i])
                    .collect();
                let trained = local_train(&params, &features, &labels, n_classes, &self.config.train)?;
                updates.push((trained, indices.len()));
            }

            if !updates.is_empty() {
                params = aggregate(&updates)?;
            }
            let (accuracy, macro_f1) =
                evaluate(&params, &heldout_features, &heldout_labels, n_classes)?;
            final_accuracy = accuracy;
            final_macro_f1 = macro_f1;

            let selected_this_round: usize = coreset_sizes.iter().sum();
            let available_this_round: usize = active
                .iter()
                .map(|&c| dataset_sizes[c as usize])
                .sum();
            cum_selected += selected_this_round as u64;
            cum_available += available_this_round as u64;

            let clustering_quality = self.clustering_quality(&active);
            records.push(RoundRecord {
                round,
                active_clients: active,
                coreset_sizes,
                data_ratio: selected_this_round as f64 / available_this_round as f64,
                cumulative_data_ratio: cum_selected as f64 / cum_available as f64,
                heldout_accuracy: accuracy,
                heldout_macro_f1: macro_f1,
                noise_counts: pass.noise,
                selection_counts: pass.counts,
                clustering_quality,
            });
        }

        Ok(RunHistory {
            records,
            summary: RunSummary {
                schema_version: crate::config::SCHEMA_VERSION,
                master_seed: self.config.master_seed,
                selector: self.config.selector,
                rounds: self.config.rounds,
                n_clients: self.data.clients.len(),
                n_classes,
                initial_accuracy,
                initial_macro_f1,
                final_accuracy,
                final_macro_f1,
                cumulative_data_ratio: if cum_available > 0 {
                    cum_selected as f64 / cum_available as f64
                } else {
                    0.0
                },
                total_selected_samples: cum_selected,
                total_available_samples: cum_available,
                lora: self.config.lora.clone(),
            },
        })
    }

    /// Mean intra-clustering quality over `clients`, using the cached
    /// intra results. `None` when the selector has no intra phase or no
    /// client yields defined metrics.
    fn clustering_quality(&self, clients: &[u64]) -> Option<ClusteringQuality> {
        if !matches!(
            self.config.selector,
            SelectorKind::Fedhds | SelectorKind::FedhdsIntra | SelectorKind::Feddb
        ) {
            return None;
        }
        let mut sums = (0.0, 0.0, 0.0);
        let mut measured = 0usize;
        for &client in clients {
            let Some(intra) = self.intra_cache.get(&client) else {
                continue;
            };
            let labels = self.data.clients[client as usize]
                .archive
                .labels
                .as_ref()
                .expect("validated archives are labeled");
            let (Ok(ch), Ok(sil), Ok(f1)) = (
                crate::metrics::calinski_harabasz(&intra.fused, &intra.clustering.labels),
                crate::metrics::silhouette(&intra.fused, &intra.clustering.labels),
                crate::metrics::clustering_f1(&intra.clustering.labels, labels),
            ) else {
                continue;
            };
            sums.0 += ch;
            sums.1 += sil;
            sums.2 += f1;
            measured += 1;
        }
        (measured > 0).then(|| ClusteringQuality {
            calinski_harabasz: sums.0 / measured as f64,
            silhouette: sums.1 / measured as f64,
            f1: sums.2 / measured as f64,
            clients_measured: measured,
        })
    }

    /// Exposes the per-client intra cache for reporting.
    pub fn intra_result(&mut self, client: u64) -> Result<&IntraSelection> {
        self.intra_for(client)
    }

    pub fn intra_cluster_config(&self) -> &HdbscanConfig {
        &self.config.intra_cluster
    }
}

fn subset_rows(m: &Matrix, indices: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(indices.len(), m.cols());
    for (r, &i) in indices.iter().enumerate() {
        out.row_mut(r).copy_from_slice(m.row(i));
    }
    out
}

/// Convenience wrapper: build a simulator and run it.
pub fn run(config: &RunConfig) -> Result<RunHistory> {
    Simulator::new(config.clone())?.run()
}
