//! The hierarchical selection protocol and the baseline selectors.
//!
//! Intra phase: a client clusters its fused features with HDBSCAN and
//! keeps one raw centroid per group. Inter phase: the server clusters the
//! uploaded (transformed) centroids a second time and elects, per
//! second-level group, the upload nearest that group's centroid; noise
//! uploads are selected individually since no duplicate was detected for
//! them. Each client then keeps, per selected group, the member sample
//! nearest the group's raw centroid.

use serde::{Deserialize, Serialize};

use crate::cluster::{self, hdbscan, ClusteringResult, HdbscanConfig};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::reduce::{self, ReducerConfig};
use crate::rng::DetRng;

/// One transformed centroid on the wire. `(client_id, group_id)` is
/// unique within a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidUpload {
    pub round: u64,
    pub client_id: u64,
    pub group_id: u32,
    pub values: Vec<f64>,
}

/// Server-to-client notice of which uploaded groups were elected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionNotice {
    pub round: u64,
    pub client_id: u64,
    pub selected_group_ids: Vec<u32>,
}

/// Per-client coreset: sorted, unique sample indices into the client's
/// local dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coreset {
    pub client_id: u64,
    pub sample_indices: Vec<usize>,
}

/// Selector variants: the hierarchical selector, its ablations, and the
/// sampling baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectorKind {
    /// Intra + inter phases on fused all-layer features.
    Fedhds,
    /// Intra phase only; every group contributes one sample.
    FedhdsIntra,
    /// Intra phase on the last layer's features only.
    Feddb,
    /// Uniform sampling without replacement at a fixed ratio.
    Random { ratio: f64 },
    /// The lowest-perplexity fraction of each client's data.
    Perplexity { ratio: f64 },
    /// Centralized reference: pooled k-means, nearest-to-centroid picks.
    CoresetCent { ratio: f64 },
}

impl SelectorKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SelectorKind::Random { ratio }
            | SelectorKind::Perplexity { ratio }
            | SelectorKind::CoresetCent { ratio } => {
                if !(ratio > 0.0 && ratio <= 1.0) {
                    return Err(Error::Config(format!(
                        "selector ratio must lie in (0, 1], got {ratio}"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Output of a client's intra phase: the fused coordinates, the
/// clustering over them, and the raw (untransformed) group centroids in
/// ascending group order.
#[derive(Debug, Clone)]
pub struct IntraSelection {
    pub fused: Matrix,
    pub clustering: ClusteringResult,
    pub raw_centroids: Vec<Vec<f64>>,
}

/// Clusters already-fused features and returns the groups with their raw
/// centroids (ascending group id).
pub fn intra_select(fused: &Matrix, config: &HdbscanConfig) -> Result<(ClusteringResult, Vec<Vec<f64>>)> {
    let clustering = hdbscan(fused, config)?;
    let raw_centroids = clustering.groups.iter().map(|g| g.centroid.clone()).collect();
    Ok((clustering, raw_centroids))
}

/// Full client-side intra phase: fuse the raw features, then cluster.
///
/// Single-sample clients skip fusion (the reducer needs two points) and
/// sit at the fused-space origin; clients whose features are all
/// identical fuse to the origin as well, which the clustering fallback
/// then collapses into one group.
pub fn client_intra_phase(
    raw_features: &Matrix,
    reducer: &ReducerConfig,
    config: &HdbscanConfig,
) -> Result<IntraSelection> {
    let n = raw_features.rows();
    if n == 0 {
        return Err(Error::EmptyInput("intra phase on an empty client"));
    }
    let fused = if n == 1 {
        Matrix::zeros(1, reducer.output_dim)
    } else {
        match reduce::reduce(raw_features, reducer) {
            Ok(fused) => fused,
            Err(Error::DegenerateAffinities) => Matrix::zeros(n, reducer.output_dim),
            Err(e) => return Err(e),
        }
    };
    let (clustering, raw_centroids) = intra_select(&fused, config)?;
    Ok(IntraSelection {
        fused,
        clustering,
        raw_centroids,
    })
}

/// Server-side inter phase over all uploads of one round.
///
/// Second-level HDBSCAN groups the upload vectors; each group elects the
/// upload nearest its centroid (ties to the lowest `(client_id,
/// group_id)`), and each noise upload is selected individually. Every
/// uploading client receives a notice, possibly with no selected groups.
pub fn inter_select(
    uploads: &[CentroidUpload],
    inter_config: &HdbscanConfig,
) -> Result<Vec<SelectionNotice>> {
    if uploads.is_empty() {
        return Err(Error::Protocol("inter phase with no uploads".into()));
    }
    let round = uploads[0].round;
    let mut seen = std::collections::BTreeSet::new();
    for u in uploads {
        if u.round != round {
            return Err(Error::Protocol(format!(
                "uploads span rounds {round} and {}",
                u.round
            )));
        }
        if !seen.insert((u.client_id, u.group_id)) {
            return Err(Error::Protocol(format!(
                "duplicate upload for client {} group {}",
                u.client_id, u.group_id
            )));
        }
    }

    // Canonical processing order.
    let mut ordered: Vec<&CentroidUpload> = uploads.iter().collect();
    ordered.sort_by_key(|u| (u.client_id, u.group_id));

    let points = Matrix::from_rows(
        &ordered.iter().map(|u| u.values.clone()).collect::<Vec<_>>(),
    )?;
    let clustering = hdbscan(&points, inter_config)?;

    let mut selected: Vec<usize> = Vec::new();
    for group in &clustering.groups {
        let winner = group
            .member_indices
            .iter()
            .map(|&i| {
                (
                    crate::linalg::sq_dist(points.row(i), &group.centroid),
                    ordered[i].client_id,
                    ordered[i].group_id,
                    i,
                )
            })
            .min_by(|a, b| {
                a.0.partial_cmp(&b.0)
                    .unwrap()
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            })
            .map(|(_, _, _, i)| i)
            .expect("groups are non-empty");
        selected.push(winner);
    }
    // Noise uploads carry no detected redundancy; keep them all.
    for (i, &label) in clustering.labels.iter().enumerate() {
        if label == -1 {
            selected.push(i);
        }
    }

    let mut notices: std::collections::BTreeMap<u64, Vec<u32>> = ordered
        .iter()
        .map(|u| (u.client_id, Vec::new()))
        .collect();
    for &i in &selected {
        notices
            .get_mut(&ordered[i].client_id)
            .expect("selected upload has a client")
            .push(ordered[i].group_id);
    }
    Ok(notices
        .into_iter()
        .map(|(client_id, mut group_ids)| {
            group_ids.sort_unstable();
            SelectionNotice {
                round,
                client_id,
                selected_group_ids: group_ids,
            }
        })
        .collect())
}

/// Builds a client's coreset from its notice: per selected group, the
/// member whose fused feature is nearest the group's raw centroid.
pub fn build_coreset(
    fused: &Matrix,
    clustering: &ClusteringResult,
    raw_centroids: &[Vec<f64>],
    notice: &SelectionNotice,
) -> Result<Coreset> {
    let mut indices = Vec::with_capacity(notice.selected_group_ids.len());
    for &group_id in &notice.selected_group_ids {
        let group = clustering
            .groups
            .get(group_id as usize)
            .ok_or_else(|| {
                Error::Protocol(format!(
                    "notice references unknown group {group_id} of client {}",
                    notice.client_id
                ))
            })?;
        let centroid = raw_centroids.get(group_id as usize).ok_or_else(|| {
            Error::Protocol(format!("no raw centroid for group {group_id}"))
        })?;
        indices.push(cluster::nearest_member(fused, &group.member_indices, centroid)?);
    }
    indices.sort_unstable();
    indices.dedup();
    Ok(Coreset {
        client_id: notice.client_id,
        sample_indices: indices,
    })
}

/// Coreset from every group of an intra selection (no inter phase).
pub fn coreset_from_all_groups(client_id: u64, intra: &IntraSelection, round: u64) -> Result<Coreset> {
    let notice = SelectionNotice {
        round,
        client_id,
        selected_group_ids: (0..intra.clustering.groups.len() as u32).collect(),
    };
    build_coreset(&intra.fused, &intra.clustering, &intra.raw_centroids, &notice)
}

/// `ceil(ratio * n)` distinct indices, uniform without replacement.
pub fn random_select(n: usize, ratio: f64, seed: u64) -> Result<Vec<usize>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Domain(format!("ratio must lie in (0, 1], got {ratio}")));
    }
    let count = ((ratio * n as f64).ceil() as usize).min(n);
    let mut rng = DetRng::new(seed);
    Ok(rng.sample_distinct(n, count))
}

/// Indices of the `ceil(ratio * n)` smallest scores, ties to the lowest
/// index, returned ascending.
pub fn perplexity_select(scores: &[f64], ratio: f64) -> Result<Vec<usize>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Domain(format!("ratio must lie in (0, 1], got {ratio}")));
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput("perplexity_select with no scores"));
    }
    if let Some(i) = scores.iter().position(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::Config(format!(
            "perplexity score {i} is not a positive finite value"
        )));
    }
    let count = ((ratio * scores.len() as f64).ceil() as usize).min(scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));
    let mut picked = order[..count].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Centralized reference selector: k-means with `k = round(sqrt(n))`
/// clusters over the pooled features, then the globally top
/// `ceil(ratio * n)` points ranked by `(within-cluster distance rank,
/// distance, index)`, which keeps each cluster's most central members
/// first.
pub fn coreset_cent(pooled: &Matrix, ratio: f64, seed: u64) -> Result<Vec<usize>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Domain(format!("ratio must lie in (0, 1], got {ratio}")));
    }
    let n = pooled.rows();
    if n == 0 {
        return Err(Error::EmptyInput("coreset_cent with no samples"));
    }
    let k = ((n as f64).sqrt().round() as usize).clamp(1, n);
    let km = cluster::kmeans(pooled, k, seed)?;

    let mut per_cluster: Vec<Vec<(f64, usize)>> = vec![Vec::new(); k];
    for i in 0..n {
        let d = crate::linalg::sq_dist(pooled.row(i), km.centroids.row(km.labels[i]));
        per_cluster[km.labels[i]].push((d, i));
    }
    let mut ranked: Vec<(usize, f64, usize)> = Vec::with_capacity(n);
    for members in &mut per_cluster {
        members.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for (rank, &(d, i)) in members.iter().enumerate() {
            ranked.push((rank, d, i));
        }
    }
    ranked.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.partial_cmp(&b.1).unwrap())
            .then(a.2.cmp(&b.2))
    });
    let count = ((ratio * n as f64).ceil() as usize).min(n);
    let mut picked: Vec<usize> = ranked[..count].iter().map(|&(_, _, i)| i).collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Last-layer ablation: intra phase on the final layer's feature slice
/// alone, reduced by the same configured reducer.
pub fn feddb_select(
    archive_last_layer: &Matrix,
    reducer: &ReducerConfig,
    config: &HdbscanConfig,
) -> Result<IntraSelection> {
    client_intra_phase(archive_last_layer, reducer, config)
}
