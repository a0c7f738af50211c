//! Density clustering and baseline clustering utilities.

mod hdbscan;
mod kmeans;

pub use hdbscan::hdbscan;
pub use kmeans::{kmeans, KmeansResult};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sq_dist, Matrix};

/// HDBSCAN hyperparameters. `min_samples` defaults to `min_cluster_size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HdbscanConfig {
    pub min_cluster_size: usize,
    pub min_samples: Option<usize>,
}

impl Default for HdbscanConfig {
    fn default() -> Self {
        HdbscanConfig {
            min_cluster_size: 5,
            min_samples: None,
        }
    }
}

impl HdbscanConfig {
    pub fn new(min_cluster_size: usize) -> Self {
        HdbscanConfig {
            min_cluster_size,
            min_samples: None,
        }
    }

    pub fn effective_min_samples(&self) -> usize {
        self.min_samples.unwrap_or(self.min_cluster_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_cluster_size < 2 {
            return Err(Error::Config(format!(
                "min_cluster_size must be at least 2, got {}",
                self.min_cluster_size
            )));
        }
        if self.effective_min_samples() < 1 {
            return Err(Error::Config("min_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// One extracted group: sorted member indices and the mean of their
/// coordinates. The centroid is a synthetic representative; it need not
/// coincide with any member.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGroup {
    pub member_indices: Vec<usize>,
    pub centroid: Vec<f64>,
}

/// Flat clustering: per-point labels (-1 = noise) plus the groups in
/// label order. Group ids are assigned by ascending lowest member index.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub labels: Vec<i32>,
    pub groups: Vec<ClusterGroup>,
}

impl ClusteringResult {
    pub fn n_noise(&self) -> usize {
        self.labels.iter().filter(|&&l| l == -1).count()
    }
}

/// Arithmetic mean of the selected rows.
pub fn centroid_of(points: &Matrix, member_indices: &[usize]) -> Result<Vec<f64>> {
    if member_indices.is_empty() {
        return Err(Error::EmptyInput("centroid of empty member set"));
    }
    let mut centroid = vec![0.0; points.cols()];
    for &i in member_indices {
        for (c, v) in centroid.iter_mut().zip(points.row(i)) {
            *c += v;
        }
    }
    for c in &mut centroid {
        *c /= member_indices.len() as f64;
    }
    Ok(centroid)
}

/// Candidate index whose row is nearest the target, ties resolved by the
/// lowest index.
pub fn nearest_member(points: &Matrix, candidates: &[usize], target: &[f64]) -> Result<usize> {
    let mut best: Option<(f64, usize)> = None;
    for &i in candidates {
        let d = sq_dist(points.row(i), target);
        match best {
            Some((bd, bi)) if d > bd || (d == bd && i >= bi) => {}
            _ => best = Some((d, i)),
        }
    }
    best.map(|(_, i)| i)
        .ok_or(Error::EmptyInput("nearest_member with no candidates"))
}
