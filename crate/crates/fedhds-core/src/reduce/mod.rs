//! Dimensionality-reduction fusion of concatenated layer features.
//!
//! The default reducer is Barnes-Hut t-SNE; PCA and RBF kernel PCA are
//! drop-in alternates behind the same [`reduce`] entry point. All three
//! are deterministic: identical inputs and config produce a bit-identical
//! embedding.

mod quadtree;
pub mod tsne;

pub use tsne::{bh_gradient, run_tsne, tsne_affinities, Affinities, TsneParams, TsneResult};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh_jacobi, pairwise_sq_dists, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReducerMethod {
    Tsne,
    Pca,
    Kpca,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KpcaParams {
    /// RBF kernel width; `None` means `1 / input_dim`.
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReducerConfig {
    pub method: ReducerMethod,
    pub output_dim: usize,
    pub tsne: TsneParams,
    pub kpca: KpcaParams,
    pub seed: u64,
}

impl Default for ReducerConfig {
    fn default() -> Self {
        ReducerConfig {
            method: ReducerMethod::Tsne,
            output_dim: 2,
            tsne: TsneParams::default(),
            kpca: KpcaParams::default(),
            seed: 0,
        }
    }
}

impl ReducerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.output_dim == 0 {
            return Err(Error::Config("output_dim must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.tsne.theta) {
            return Err(Error::Config(format!(
                "theta must lie in [0, 1], got {}",
                self.tsne.theta
            )));
        }
        if !(self.tsne.perplexity >= 1.0) {
            return Err(Error::Config(format!(
                "perplexity must be at least 1, got {}",
                self.tsne.perplexity
            )));
        }
        if self.tsne.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if let Some(g) = self.kpca.gamma {
            if !(g > 0.0) {
                return Err(Error::Config(format!("kpca gamma must be positive, got {g}")));
            }
        }
        Ok(())
    }
}

fn validate_input(features: &Matrix) -> Result<()> {
    if features.rows() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: features.rows(),
        });
    }
    if !features.is_finite() {
        return Err(Error::NonFinite("reducer input".into()));
    }
    Ok(())
}

/// Fuses an `n x d` feature matrix into `n x output_dim` coordinates with
/// the configured reducer.
pub fn reduce(features: &Matrix, config: &ReducerConfig) -> Result<Matrix> {
    config.validate()?;
    validate_input(features)?;
    match config.method {
        ReducerMethod::Tsne => {
            Ok(tsne::run_tsne(features, config.output_dim, &config.tsne)?.embedding)
        }
        ReducerMethod::Pca => Ok(pca(features, config.output_dim)?.scores),
        ReducerMethod::Kpca => kpca(features, config.output_dim, config.kpca.gamma),
    }
}

/// Principal-component scores plus the per-component explained variance.
#[derive(Debug, Clone)]
pub struct PcaResult {
    /// `n x k` projection of the centered inputs.
    pub scores: Matrix,
    /// `k x d` component directions (orthonormal rows).
    pub components: Matrix,
    /// Fraction of total variance captured by each kept component.
    pub explained_variance_ratio: Vec<f64>,
}

/// PCA via eigendecomposition of the covariance matrix.
///
/// When `k` exceeds the input dimension the extra score columns are zero.
pub fn pca(features: &Matrix, k: usize) -> Result<PcaResult> {
    validate_input(features)?;
    let n = features.rows();
    let d = features.cols();
    let centered = features.centered();

    let mut cov = Matrix::zeros(d, d);
    for row in centered.iter_rows() {
        for a in 0..d {
            for b in a..d {
                let v = cov.get(a, b) + row[a] * row[b];
                cov.set(a, b, v);
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = cov.get(a, b) / denom;
            cov.set(a, b, v);
            cov.set(b, a, v);
        }
    }

    let (eigenvalues, eigenvectors) = eigh_jacobi(&cov)?;
    let total: f64 = eigenvalues.iter().map(|&l| l.max(0.0)).sum();
    let kept = k.min(d);

    let mut components = Matrix::zeros(k, d);
    let mut ratio = Vec::with_capacity(k);
    for c in 0..kept {
        for j in 0..d {
            components.set(c, j, eigenvectors.get(c, j));
        }
        ratio.push(if total > 0.0 {
            eigenvalues[c].max(0.0) / total
        } else {
            0.0
        });
    }
    ratio.resize(k, 0.0);

    let mut scores = Matrix::zeros(n, k);
    for i in 0..n {
        let row = centered.row(i);
        for c in 0..kept {
            let mut acc = 0.0;
            for j in 0..d {
                acc += row[j] * components.get(c, j);
            }
            scores.set(i, c, acc);
        }
    }
    Ok(PcaResult {
        scores,
        components,
        explained_variance_ratio: ratio,
    })
}

/// Kernel PCA with an RBF kernel and double-centered kernel matrix.
///
/// `gamma` defaults to `1 / input_dim`. Training-point scores are
/// `sqrt(lambda_c) * alpha_c`; non-positive eigenvalues yield zero columns.
pub fn kpca(features: &Matrix, k: usize, gamma: Option<f64>) -> Result<Matrix> {
    validate_input(features)?;
    let n = features.rows();
    let gamma = match gamma {
        Some(g) if g > 0.0 => g,
        Some(g) => return Err(Error::Config(format!("kpca gamma must be positive, got {g}"))),
        None => 1.0 / features.cols() as f64,
    };

    let sq = pairwise_sq_dists(features);
    let mut kernel = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            kernel.set(i, j, (-gamma * sq.get(i, j)).exp());
        }
    }

    // Double centering: K' = K - 1K/n - K1/n + 1K1/n^2.
    let row_means: Vec<f64> = (0..n)
        .map(|i| kernel.row(i).iter().sum::<f64>() / n as f64)
        .collect();
    let total_mean = row_means.iter().sum::<f64>() / n as f64;
    let mut centered = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            centered.set(
                i,
                j,
                kernel.get(i, j) - row_means[i] - row_means[j] + total_mean,
            );
        }
    }

    let (eigenvalues, eigenvectors) = eigh_jacobi(&centered)?;
    let kept = k.min(n);
    let mut scores = Matrix::zeros(n, k);
    for c in 0..kept {
        let lambda = eigenvalues[c];
        if lambda <= 1e-12 {
            continue;
        }
        let scale = lambda.sqrt();
        for i in 0..n {
            scores.set(i, c, scale * eigenvectors.get(c, i));
        }
    }
    Ok(scores)
}

/// Deterministic t-SNE initialization: PCA scores rescaled so the first
/// embedding column has standard deviation 1e-4.
pub(crate) fn pca_init(features: &Matrix, k: usize) -> Result<Matrix> {
    let mut init = pca(features, k)?.scores;
    let n = init.rows();
    let mean0: f64 = (0..n).map(|i| init.get(i, 0)).sum::<f64>() / n as f64;
    let var0: f64 = (0..n)
        .map(|i| {
            let d = init.get(i, 0) - mean0;
            d * d
        })
        .sum::<f64>()
        / n as f64;
    let std0 = var0.sqrt();
    if std0 > 0.0 {
        let scale = 1e-4 / std0;
        for i in 0..n {
            for c in 0..k {
                let v = init.get(i, c) * scale;
                init.set(i, c, v);
            }
        }
    }
    Ok(init)
}
