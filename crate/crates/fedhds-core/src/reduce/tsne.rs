//! Barnes-Hut t-SNE.
//!
//! Input affinities follow the Barnes-Hut formulation: each point's
//! Gaussian conditional distribution is restricted to its
//! `3 * perplexity` nearest neighbors, the bandwidth is found by
//! bisection against the target perplexity, and the conditionals are
//! symmetrized and normalized into a joint distribution. The embedding
//! is optimized by momentum gradient descent with per-parameter gains,
//! early exaggeration, and the quadtree approximation of the repulsive
//! forces for 2-D embeddings.
//!
//! Everything is deterministic: the embedding is initialized from a
//! sign-fixed PCA projection, never from random noise.

use serde::{Deserialize, Serialize};

use super::quadtree::QuadTree;
use crate::error::{Error, Result};
use crate::linalg::{pairwise_sq_dists, Matrix};

/// Points with at most this many rows use the exact O(n^2) gradient
/// inside [`run_tsne`]; the quadtree only pays off beyond it.
const EXACT_GRADIENT_MAX_N: usize = 64;

/// Bisection: relative tolerance on the achieved perplexity and the
/// iteration cap.
const PERPLEXITY_TOL: f64 = 1e-5;
const BISECTION_STEPS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneParams {
    pub perplexity: f64,
    pub theta: f64,
    pub iterations: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    pub momentum_switch_iter: usize,
}

impl Default for TsneParams {
    fn default() -> Self {
        TsneParams {
            perplexity: 30.0,
            theta: 0.5,
            iterations: 1000,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: 200.0,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            momentum_switch_iter: 250,
        }
    }
}

/// Conditional and joint input affinities.
#[derive(Debug, Clone)]
pub struct Affinities {
    /// Row i holds the conditional distribution over i's neighbor set;
    /// entries outside the neighbor set are exactly zero.
    pub conditional: Matrix,
    /// Symmetrized joint distribution, non-negative, summing to 1.
    pub joint: Matrix,
    /// The perplexity actually targeted after the small-n clamp.
    pub effective_perplexity: f64,
}

/// Clamp rule for small inputs: at most `(n - 1) / 3`, at least 1.
pub fn effective_perplexity(requested: f64, n: usize) -> f64 {
    requested.min(((n - 1) / 3) as f64).max(1.0)
}

/// Computes Barnes-Hut t-SNE input affinities.
///
/// Each row's Gaussian bandwidth is bisected until the conditional
/// distribution's perplexity (`exp` of its Shannon entropy in nats)
/// matches the clamped target to relative tolerance 1e-5, within 50
/// steps. Fails with [`Error::DegenerateAffinities`] when every pairwise
/// distance is zero.
pub fn tsne_affinities(features: &Matrix, perplexity: f64) -> Result<Affinities> {
    let n = features.rows();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    if !features.is_finite() {
        return Err(Error::NonFinite("t-SNE input".into()));
    }
    let sq = pairwise_sq_dists(features);
    if sq.data().iter().all(|&d| d == 0.0) {
        return Err(Error::DegenerateAffinities);
    }
    let target = effective_perplexity(perplexity, n);
    let n_neighbors = ((3.0 * target).ceil() as usize).min(n - 1);

    let mut conditional = Matrix::zeros(n, n);
    let mut neighbor_buf: Vec<usize> = Vec::new();
    for i in 0..n {
        neighbor_buf.clear();
        neighbor_buf.extend((0..n).filter(|&j| j != i));
        neighbor_buf.sort_by(|&a, &b| {
            sq.get(i, a)
                .partial_cmp(&sq.get(i, b))
                .unwrap()
                .then(a.cmp(&b))
        });
        let neighbors = &neighbor_buf[..n_neighbors];
        let dists: Vec<f64> = neighbors.iter().map(|&j| sq.get(i, j)).collect();
        let probs = bisect_row(&dists, target);
        for (&j, &p) in neighbors.iter().zip(&probs) {
            conditional.set(i, j, p);
        }
    }

    let mut joint = Matrix::zeros(n, n);
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = 0.5 * (conditional.get(i, j) + conditional.get(j, i)) / n as f64;
            joint.set(i, j, v);
            total += v;
        }
    }
    for i in 0..n {
        for j in 0..n {
            let v = joint.get(i, j) / total;
            joint.set(i, j, v);
        }
    }
    Ok(Affinities {
        conditional,
        joint,
        effective_perplexity: target,
    })
}

/// Gaussian conditional over one row's neighbor distances, bandwidth
/// bisected to the target perplexity.
fn bisect_row(sq_dists: &[f64], target: f64) -> Vec<f64> {
    let m = sq_dists.len();
    let dmin = sq_dists.iter().copied().fold(f64::INFINITY, f64::min);
    let mut beta = 1.0;
    let mut beta_min = f64::NEG_INFINITY;
    let mut beta_max = f64::INFINITY;
    let mut probs = vec![0.0; m];
    for _ in 0..BISECTION_STEPS {
        let mut sum = 0.0;
        let mut weighted = 0.0;
        for (p, &d) in probs.iter_mut().zip(sq_dists) {
            let e = (-beta * (d - dmin)).exp();
            *p = e;
            sum += e;
            weighted += e * (d - dmin);
        }
        if sum <= 0.0 {
            // Bandwidth so large everything underflowed; treat as uniform
            // and keep narrowing.
            for p in &mut probs {
                *p = 1.0 / m as f64;
            }
        } else {
            for p in &mut probs {
                *p /= sum;
            }
        }
        let entropy = if sum > 0.0 {
            beta * (weighted / sum) + sum.ln()
        } else {
            (m as f64).ln()
        };
        let perp = entropy.exp();
        if (perp - target).abs() <= PERPLEXITY_TOL * target {
            break;
        }
        if perp > target {
            beta_min = beta;
            beta = if beta_max.is_finite() {
                0.5 * (beta + beta_max)
            } else {
                beta * 2.0
            };
        } else {
            beta_max = beta;
            beta = if beta_min.is_finite() && beta_min > 0.0 {
                0.5 * (beta + beta_min)
            } else {
                beta * 0.5
            };
        }
    }
    probs
}

/// KL-divergence gradient of a 2-D embedding, repulsion approximated by a
/// quadtree with opening parameter `theta`.
///
/// `theta == 0` descends every cell and equals the exact gradient.
/// Embeddings that are not 2-D fall back to the exact computation, which
/// honors any `theta`.
pub fn bh_gradient(embedding: &Matrix, joint: &Matrix, theta: f64) -> Result<Matrix> {
    validate_gradient_inputs(embedding, joint, theta)?;
    if embedding.cols() != 2 {
        return exact_gradient(embedding, joint);
    }
    let n = embedding.rows();
    let ys = embedding.data();
    let tree = QuadTree::build(ys);

    let mut rep = vec![0.0; n * 2];
    let mut z = 0.0;
    for i in 0..n {
        let mut force = [0.0, 0.0];
        z += tree.negative_forces(i, theta, &mut force);
        rep[2 * i] = force[0];
        rep[2 * i + 1] = force[1];
    }
    let z = z.max(f64::MIN_POSITIVE);

    let mut grad = Matrix::zeros(n, 2);
    for i in 0..n {
        let mut attr = [0.0, 0.0];
        for j in 0..n {
            let p = joint.get(i, j);
            if p == 0.0 || j == i {
                continue;
            }
            let dx = ys[2 * i] - ys[2 * j];
            let dy = ys[2 * i + 1] - ys[2 * j + 1];
            let w = 1.0 / (1.0 + dx * dx + dy * dy);
            attr[0] += p * w * dx;
            attr[1] += p * w * dy;
        }
        grad.set(i, 0, 4.0 * (attr[0] - rep[2 * i] / z));
        grad.set(i, 1, 4.0 * (attr[1] - rep[2 * i + 1] / z));
    }
    Ok(grad)
}

/// Exact O(n^2) KL gradient for any embedding dimension.
pub fn exact_gradient(embedding: &Matrix, joint: &Matrix) -> Result<Matrix> {
    validate_gradient_inputs(embedding, joint, 0.0)?;
    let n = embedding.rows();
    let k = embedding.cols();

    let mut weights = Matrix::zeros(n, n);
    let mut z = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let w = 1.0 / (1.0 + crate::linalg::sq_dist(embedding.row(i), embedding.row(j)));
            weights.set(i, j, w);
            weights.set(j, i, w);
            z += 2.0 * w;
        }
    }
    let z = z.max(f64::MIN_POSITIVE);

    let mut grad = Matrix::zeros(n, k);
    for i in 0..n {
        for j in 0..n {
            if j == i {
                continue;
            }
            let w = weights.get(i, j);
            let coeff = 4.0 * (joint.get(i, j) - w / z) * w;
            for c in 0..k {
                let v = grad.get(i, c) + coeff * (embedding.get(i, c) - embedding.get(j, c));
                grad.set(i, c, v);
            }
        }
    }
    Ok(grad)
}

fn validate_gradient_inputs(embedding: &Matrix, joint: &Matrix, theta: f64) -> Result<()> {
    if joint.rows() != embedding.rows() || joint.cols() != embedding.rows() {
        return Err(Error::DimensionMismatch(format!(
            "affinity matrix is {}x{}, embedding has {} rows",
            joint.rows(),
            joint.cols(),
            embedding.rows()
        )));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Domain(format!("theta must lie in [0, 1], got {theta}")));
    }
    Ok(())
}

/// KL(P || Q) of the embedding against the joint input affinities.
pub fn kl_divergence(embedding: &Matrix, joint: &Matrix) -> f64 {
    let n = embedding.rows();
    let mut z = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            z += 2.0 / (1.0 + crate::linalg::sq_dist(embedding.row(i), embedding.row(j)));
        }
    }
    let z = z.max(f64::MIN_POSITIVE);
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if j == i {
                continue;
            }
            let p = joint.get(i, j);
            if p <= 0.0 {
                continue;
            }
            let w = 1.0 / (1.0 + crate::linalg::sq_dist(embedding.row(i), embedding.row(j)));
            let q = (w / z).max(f64::MIN_POSITIVE);
            kl += p * (p / q).ln();
        }
    }
    kl
}

/// Embedding plus the KL checkpoints used by the net-descent contract.
#[derive(Debug, Clone)]
pub struct TsneResult {
    pub embedding: Matrix,
    /// KL against the true (un-exaggerated) affinities right after the
    /// exaggeration phase ends.
    pub kl_post_exaggeration: f64,
    /// KL at the last iteration.
    pub kl_final: f64,
    pub effective_perplexity: f64,
}

/// Runs the full t-SNE pipeline: affinities, PCA initialization scaled to
/// 1e-4, then `iterations` steps of momentum gradient descent with gains.
pub fn run_tsne(features: &Matrix, output_dim: usize, params: &TsneParams) -> Result<TsneResult> {
    let n = features.rows();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let affinities = tsne_affinities(features, params.perplexity)?;
    let mut embedding = super::pca_init(features, output_dim)?;

    // Exaggerated copy for the early phase.
    let exagg_until = params.exaggeration_iters.min(params.iterations);
    let mut exaggerated = affinities.joint.clone();
    for i in 0..n {
        for j in 0..n {
            let v = exaggerated.get(i, j) * params.early_exaggeration;
            exaggerated.set(i, j, v);
        }
    }

    let use_exact = n <= EXACT_GRADIENT_MAX_N || output_dim != 2 || params.theta == 0.0;
    let mut velocity = Matrix::zeros(n, output_dim);
    let mut gains = vec![1.0f64; n * output_dim];
    let mut kl_post_exaggeration = f64::NAN;

    for iter in 0..params.iterations {
        let p = if iter < exagg_until {
            &exaggerated
        } else {
            &affinities.joint
        };
        let grad = if use_exact {
            exact_gradient(&embedding, p)?
        } else {
            bh_gradient(&embedding, p, params.theta)?
        };
        let momentum = if iter < params.momentum_switch_iter {
            params.momentum_initial
        } else {
            params.momentum_final
        };
        for i in 0..n {
            for c in 0..output_dim {
                let g = grad.get(i, c);
                let u = velocity.get(i, c);
                let idx = i * output_dim + c;
                // Standard adaptive gains: grow when the gradient keeps
                // direction against the velocity, shrink otherwise.
                gains[idx] = if (g > 0.0) == (u > 0.0) {
                    (gains[idx] * 0.8).max(0.01)
                } else {
                    gains[idx] + 0.2
                };
                let nu = momentum * u - params.learning_rate * gains[idx] * g;
                velocity.set(i, c, nu);
                let y = embedding.get(i, c) + nu;
                embedding.set(i, c, y);
            }
        }
        // Keep the embedding centered; KL is translation invariant.
        let mean = embedding.mean_row();
        for i in 0..n {
            for (v, m) in embedding.row_mut(i).iter_mut().zip(&mean) {
                *v -= m;
            }
        }
        if iter + 1 == exagg_until {
            kl_post_exaggeration = kl_divergence(&embedding, &affinities.joint);
        }
    }

    let kl_final = kl_divergence(&embedding, &affinities.joint);
    if kl_post_exaggeration.is_nan() {
        kl_post_exaggeration = kl_final;
    }
    if !embedding.is_finite() {
        return Err(Error::NonFinite("t-SNE embedding diverged".into()));
    }
    Ok(TsneResult {
        embedding,
        kl_post_exaggeration,
        kl_final,
        effective_perplexity: affinities.effective_perplexity,
    })
}
