//! Clustering-quality metrics and selection-efficiency accounting.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{dist, Matrix};

/// Groups point indices by non-noise label; errors unless at least two
/// non-empty clusters exist.
fn clusters_by_label(labels: &[i32]) -> Result<Vec<Vec<usize>>> {
    let mut map: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if l >= 0 {
            map.entry(l).or_default().push(i);
        }
    }
    if map.len() < 2 {
        return Err(Error::MetricUndefined(format!(
            "need at least 2 clusters, got {}",
            map.len()
        )));
    }
    Ok(map.into_values().collect())
}

/// Calinski-Harabasz index:
/// `(B / (k - 1)) / (W / (n - k))` over between- and within-cluster
/// dispersion. Zero within-dispersion is reported as an error rather
/// than an infinite score.
pub fn calinski_harabasz(points: &Matrix, labels: &[i32]) -> Result<f64> {
    if labels.len() != points.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} points",
            labels.len(),
            points.rows()
        )));
    }
    let clusters = clusters_by_label(labels)?;
    let k = clusters.len();
    let n: usize = clusters.iter().map(Vec::len).sum();
    if n <= k {
        return Err(Error::MetricUndefined(
            "within-dispersion denominator n - k is zero".into(),
        ));
    }

    let member_indices: Vec<usize> = clusters.iter().flatten().copied().collect();
    let d = points.cols();
    let mut overall = vec![0.0; d];
    for &i in &member_indices {
        for (o, v) in overall.iter_mut().zip(points.row(i)) {
            *o += v;
        }
    }
    for o in &mut overall {
        *o /= n as f64;
    }

    let mut between = 0.0;
    let mut within = 0.0;
    for members in &clusters {
        let mut mean = vec![0.0; d];
        for &i in members {
            for (m, v) in mean.iter_mut().zip(points.row(i)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= members.len() as f64;
        }
        between += members.len() as f64
            * mean
                .iter()
                .zip(&overall)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        for &i in members {
            within += points
                .row(i)
                .iter()
                .zip(&mean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
    }
    if within == 0.0 {
        return Err(Error::MetricUndefined(
            "within-cluster dispersion is zero".into(),
        ));
    }
    Ok((between / (k - 1) as f64) / (within / (n - k) as f64))
}

/// Mean silhouette coefficient `(b - a) / max(a, b)`; singleton clusters
/// score 0 by convention. Noise points are excluded.
pub fn silhouette(points: &Matrix, labels: &[i32]) -> Result<f64> {
    if labels.len() != points.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} points",
            labels.len(),
            points.rows()
        )));
    }
    let clusters = clusters_by_label(labels)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (ci, members) in clusters.iter().enumerate() {
        for &i in members {
            if members.len() == 1 {
                count += 1;
                continue;
            }
            let a: f64 = members
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| dist(points.row(i), points.row(j)))
                .sum::<f64>()
                / (members.len() - 1) as f64;
            let b = clusters
                .iter()
                .enumerate()
                .filter(|&(cj, _)| cj != ci)
                .map(|(_, other)| {
                    other
                        .iter()
                        .map(|&j| dist(points.row(i), points.row(j)))
                        .sum::<f64>()
                        / other.len() as f64
                })
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                total += (b - a) / denom;
            }
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Macro F1 of a clustering against reference classes, with clusters
/// matched to classes by maximum-weight assignment on the contingency
/// matrix. Unmatched classes contribute 0; noise points (-1) belong to
/// no cluster but still count toward class support.
pub fn clustering_f1(pred_labels: &[i32], true_labels: &[u32]) -> Result<f64> {
    if pred_labels.len() != true_labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} references",
            pred_labels.len(),
            true_labels.len()
        )));
    }
    if true_labels.is_empty() {
        return Err(Error::EmptyInput("clustering_f1 with no points"));
    }

    let mut cluster_ids: Vec<i32> = pred_labels.iter().copied().filter(|&l| l >= 0).collect();
    cluster_ids.sort_unstable();
    cluster_ids.dedup();
    let mut class_ids: Vec<u32> = true_labels.to_vec();
    class_ids.sort_unstable();
    class_ids.dedup();

    if cluster_ids.is_empty() {
        return Ok(0.0);
    }

    let cluster_pos: BTreeMap<i32, usize> =
        cluster_ids.iter().enumerate().map(|(p, &c)| (c, p)).collect();
    let class_pos: BTreeMap<u32, usize> =
        class_ids.iter().enumerate().map(|(p, &c)| (c, p)).collect();

    let rows = cluster_ids.len();
    let cols = class_ids.len();
    let mut contingency = vec![vec![0usize; cols]; rows];
    let mut cluster_size = vec![0usize; rows];
    let mut class_size = vec![0usize; cols];
    for (&p, &t) in pred_labels.iter().zip(true_labels) {
        let tc = class_pos[&t];
        class_size[tc] += 1;
        if p >= 0 {
            let pc = cluster_pos[&p];
            contingency[pc][tc] += 1;
            cluster_size[pc] += 1;
        }
    }

    let weights: Vec<Vec<f64>> = contingency
        .iter()
        .map(|row| row.iter().map(|&c| c as f64).collect())
        .collect();
    let assignment = max_weight_assignment(&weights);

    let mut f1_sum = 0.0;
    for (cluster, class) in assignment {
        let overlap = contingency[cluster][class] as f64;
        if overlap == 0.0 {
            continue;
        }
        let precision = overlap / cluster_size[cluster] as f64;
        let recall = overlap / class_size[class] as f64;
        f1_sum += 2.0 * precision * recall / (precision + recall);
    }
    Ok(f1_sum / cols as f64)
}

/// Maximum-weight one-to-one assignment (Hungarian algorithm on the
/// negated costs). Returns (row, col) pairs for the real rows/cols of a
/// possibly rectangular weight matrix.
fn max_weight_assignment(weights: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let n = rows.max(cols);
    let max_w = weights
        .iter()
        .flatten()
        .copied()
        .fold(0.0f64, f64::max);
    // Square cost matrix: cost = max_w - weight, padding with max_w.
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            (0..n)
                .map(|c| {
                    if r < rows && c < cols {
                        max_w - weights[r][c]
                    } else {
                        max_w
                    }
                })
                .collect()
        })
        .collect();

    // O(n^3) Hungarian algorithm (potentials + augmenting paths).
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut match_col = vec![0usize; n + 1]; // 1-based row matched to col, 0 = free
    for i in 1..=n {
        match_col[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = match_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[match_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if match_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            match_col[j0] = match_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs = Vec::new();
    for j in 1..=n {
        let i = match_col[j];
        if i >= 1 && i <= rows && j <= cols {
            pairs.push((i - 1, j - 1));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Selected-sample fraction: total coreset size over total dataset size.
pub fn data_ratio(coreset_sizes: &[usize], dataset_sizes: &[usize]) -> Result<f64> {
    if coreset_sizes.len() != dataset_sizes.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} coresets for {} datasets",
            coreset_sizes.len(),
            dataset_sizes.len()
        )));
    }
    let total: usize = dataset_sizes.iter().sum();
    if total == 0 || dataset_sizes.iter().any(|&s| s == 0) {
        return Err(Error::Domain("dataset sizes must be positive".into()));
    }
    let selected: usize = coreset_sizes.iter().sum();
    Ok(selected as f64 / total as f64)
}
