//! K-means with k-means++ seeding and Lloyd iterations, fully seeded.

use crate::error::{Error, Result};
use crate::linalg::{sq_dist, Matrix};
use crate::rng::DetRng;

const MAX_LLOYD_ITERS: usize = 300;

#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub labels: Vec<usize>,
    pub centroids: Matrix,
    /// Within-cluster sum of squared distances at convergence.
    pub inertia: f64,
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Deterministic given the seed: assignment ties go to the lowest
/// centroid index, and an emptied cluster is re-seeded on the point
/// farthest from its assigned centroid.
pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<KmeansResult> {
    let n = points.rows();
    if k == 0 {
        return Err(Error::Domain("kmeans needs k >= 1".into()));
    }
    if n < k {
        return Err(Error::TooFewSamples { needed: k, got: n });
    }
    if !points.is_finite() {
        return Err(Error::NonFinite("kmeans input".into()));
    }
    let d = points.cols();
    let mut rng = DetRng::new(seed);

    // k-means++ seeding.
    let mut center_idx = Vec::with_capacity(k);
    center_idx.push(rng.next_below(n as u64) as usize);
    let mut best_sq: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(center_idx[0])))
        .collect();
    while center_idx.len() < k {
        let total: f64 = best_sq.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.next_f64() * total;
            let mut chosen = n - 1;
            for (i, &w) in best_sq.iter().enumerate() {
                target -= w;
                if target < 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All remaining mass is zero (duplicates): take the lowest
            // index not already chosen.
            (0..n).find(|i| !center_idx.contains(i)).unwrap_or(0)
        };
        center_idx.push(next);
        for i in 0..n {
            let d2 = sq_dist(points.row(i), points.row(next));
            if d2 < best_sq[i] {
                best_sq[i] = d2;
            }
        }
    }

    let mut centroids = Matrix::zeros(k, d);
    for (c, &idx) in center_idx.iter().enumerate() {
        centroids.row_mut(c).copy_from_slice(points.row(idx));
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_LLOYD_ITERS {
        // Assignment step; ties to the lowest centroid index.
        let mut changed = false;
        for i in 0..n {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d2 = sq_dist(points.row(i), centroids.row(c));
                if d2 < best_d {
                    best_d = d2;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }

        // Update step.
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, v) in sums.row_mut(labels[i]).iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s / counts[c] as f64;
                }
            } else {
                // Re-seed an empty cluster on the farthest point from its
                // current centroid.
                let mut far = 0usize;
                let mut far_d = f64::NEG_INFINITY;
                for i in 0..n {
                    if taken[i] {
                        continue;
                    }
                    let d2 = sq_dist(points.row(i), centroids.row(labels[i]));
                    if d2 > far_d {
                        far_d = d2;
                        far = i;
                    }
                }
                taken[far] = true;
                centroids.row_mut(c).copy_from_slice(points.row(far));
            }
        }
    }

    let inertia = (0..n)
        .map(|i| sq_dist(points.row(i), centroids.row(labels[i])))
        .sum();
    Ok(KmeansResult {
        labels,
        centroids,
        inertia,
    })
}
