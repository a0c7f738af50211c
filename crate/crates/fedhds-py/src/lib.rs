//! Python bindings over the core simulator: feature archives, reducers,
//! clustering, privacy calibration, selection and full runs.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use fedhds_core::cluster::HdbscanConfig;
use fedhds_core::config::RunConfig;
use fedhds_core::error::Error;
use fedhds_core::features::{FeatureArchive, SyntheticSpec};
use fedhds_core::reduce::{ReducerConfig, ReducerMethod, TsneParams};
use fedhds_core::rng::DetRng;
use fedhds_core::{features, fedsim, metrics, privacy, reduce, selection, Matrix};

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix_from(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(to_py_err)
}

/// Generate a synthetic labeled archive; returns (features, labels).
#[pyfunction]
fn synth_archive(
    n_modes: usize,
    mode_separation: f64,
    mode_stddev: f64,
    layer_count: usize,
    layer_dim: usize,
    samples_per_mode: usize,
    seed: u64,
) -> PyResult<(Vec<Vec<f32>>, Vec<u32>)> {
    let spec = SyntheticSpec {
        n_modes,
        mode_separation,
        mode_stddev,
        layer_count,
        layer_dim,
        samples_per_mode,
    };
    let archive = features::synth_archive(&spec, seed).map_err(to_py_err)?;
    let labels = archive.labels.clone().unwrap_or_default();
    Ok((archive.features, labels))
}

/// Write a feature archive file; returns the byte count.
#[pyfunction]
#[pyo3(signature = (path, features, layer_count, layer_dim, labels=None, perplexity=None, source_tag="synthetic"))]
fn write_archive(
    path: &str,
    features: Vec<Vec<f32>>,
    layer_count: usize,
    layer_dim: usize,
    labels: Option<Vec<u32>>,
    perplexity: Option<Vec<f32>>,
    source_tag: &str,
) -> PyResult<u64> {
    let archive = FeatureArchive {
        layer_count,
        layer_dim,
        features,
        labels,
        perplexity,
        source_tag: source_tag.to_string(),
    };
    features::write_archive(&archive, path).map_err(to_py_err)
}

/// Read a feature archive file; returns
/// (features, labels, perplexity, layer_count, layer_dim, source_tag).
#[pyfunction]
#[allow(clippy::type_complexity)]
fn read_archive(
    path: &str,
) -> PyResult<(
    Vec<Vec<f32>>,
    Option<Vec<u32>>,
    Option<Vec<f32>>,
    usize,
    usize,
    String,
)> {
    let archive = features::read_archive(path).map_err(to_py_err)?;
    Ok((
        archive.features,
        archive.labels,
        archive.perplexity,
        archive.layer_count,
        archive.layer_dim,
        archive.source_tag,
    ))
}

/// Fuse features to `output_dim` coordinates ("tsne", "pca" or "kpca").
#[pyfunction]
#[pyo3(signature = (features, method="tsne", output_dim=2, perplexity=30.0, theta=0.5, iterations=1000, seed=0))]
fn reduce_features(
    features: Vec<Vec<f64>>,
    method: &str,
    output_dim: usize,
    perplexity: f64,
    theta: f64,
    iterations: usize,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let method = match method {
        "tsne" => ReducerMethod::Tsne,
        "pca" => ReducerMethod::Pca,
        "kpca" => ReducerMethod::Kpca,
        other => return Err(PyValueError::new_err(format!("unknown reducer {other:?}"))),
    };
    let config = ReducerConfig {
        method,
        output_dim,
        tsne: TsneParams {
            perplexity,
            theta,
            iterations,
            ..TsneParams::default()
        },
        seed,
        ..ReducerConfig::default()
    };
    let m = matrix_from(features)?;
    Ok(reduce::reduce(&m, &config).map_err(to_py_err)?.to_rows())
}

/// HDBSCAN; returns (labels with -1 noise, group centroids).
#[pyfunction]
#[pyo3(signature = (points, min_cluster_size, min_samples=None))]
fn hdbscan(
    points: Vec<Vec<f64>>,
    min_cluster_size: usize,
    min_samples: Option<usize>,
) -> PyResult<(Vec<i32>, Vec<Vec<f64>>)> {
    let config = HdbscanConfig {
        min_cluster_size,
        min_samples,
    };
    let m = matrix_from(points)?;
    let result = fedhds_core::cluster::hdbscan(&m, &config).map_err(to_py_err)?;
    let centroids = result.groups.iter().map(|g| g.centroid.clone()).collect();
    Ok((result.labels, centroids))
}

/// Seeded k-means; returns (labels, centroids).
#[pyfunction]
fn kmeans(points: Vec<Vec<f64>>, k: usize, seed: u64) -> PyResult<(Vec<usize>, Vec<Vec<f64>>)> {
    let m = matrix_from(points)?;
    let result = fedhds_core::cluster::kmeans(&m, k, seed).map_err(to_py_err)?;
    Ok((result.labels, result.centroids.to_rows()))
}

/// Minimal Gaussian-mechanism sigma for (epsilon, delta) at sensitivity 2.
#[pyfunction]
fn calibrate_sigma(epsilon: f64, delta: f64) -> PyResult<f64> {
    privacy::calibrate_sigma(epsilon, delta).map_err(to_py_err)
}

/// tanh-scale a centroid and optionally add seeded Gaussian noise.
#[pyfunction]
#[pyo3(signature = (centroid, sigma=0.0, seed=0))]
fn transform_centroid(centroid: Vec<f64>, sigma: f64, seed: u64) -> PyResult<Vec<f64>> {
    let config = privacy::DpConfig {
        enabled: sigma > 0.0,
        sigma: Some(sigma),
        ..privacy::DpConfig::default()
    };
    let mut rng = DetRng::new(seed);
    Ok(privacy::transform_centroid(&centroid, &config, &mut rng)
        .map_err(to_py_err)?
        .values)
}

#[pyfunction]
fn calinski_harabasz(points: Vec<Vec<f64>>, labels: Vec<i32>) -> PyResult<f64> {
    let m = matrix_from(points)?;
    metrics::calinski_harabasz(&m, &labels).map_err(to_py_err)
}

#[pyfunction]
fn silhouette(points: Vec<Vec<f64>>, labels: Vec<i32>) -> PyResult<f64> {
    let m = matrix_from(points)?;
    metrics::silhouette(&m, &labels).map_err(to_py_err)
}

#[pyfunction]
fn clustering_f1(pred_labels: Vec<i32>, true_labels: Vec<u32>) -> PyResult<f64> {
    metrics::clustering_f1(&pred_labels, &true_labels).map_err(to_py_err)
}

#[pyfunction]
fn random_select(n: usize, ratio: f64, seed: u64) -> PyResult<Vec<usize>> {
    selection::random_select(n, ratio, seed).map_err(to_py_err)
}

#[pyfunction]
fn perplexity_select(scores: Vec<f64>, ratio: f64) -> PyResult<Vec<usize>> {
    selection::perplexity_select(&scores, ratio).map_err(to_py_err)
}

/// Documented subsystem-seed derivation from the master seed.
#[pyfunction]
fn derive_seed(master_seed: u64, module: &str, round: u64, client: u64) -> u64 {
    fedhds_core::rng::derive_seed(master_seed, module, round, client)
}

/// Run the full federated loop from a JSON config string; returns
/// (run_jsonl, summary_json).
#[pyfunction]
fn run_simulation(config_json: &str) -> PyResult<(String, String)> {
    let config = RunConfig::from_json(config_json).map_err(to_py_err)?;
    let history = fedsim::run(&config).map_err(to_py_err)?;
    let mut jsonl = String::new();
    for record in &history.records {
        jsonl.push_str(&serde_json::to_string(record).map_err(|e| PyValueError::new_err(e.to_string()))?);
        jsonl.push('\n');
    }
    let summary = serde_json::to_string_pretty(&history.summary)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((jsonl, summary))
}

#[pymodule]
fn fedhds_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(synth_archive, m)?)?;
    m.add_function(wrap_pyfunction!(write_archive, m)?)?;
    m.add_function(wrap_pyfunction!(read_archive, m)?)?;
    m.add_function(wrap_pyfunction!(reduce_features, m)?)?;
    m.add_function(wrap_pyfunction!(hdbscan, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(transform_centroid, m)?)?;
    m.add_function(wrap_pyfunction!(calinski_harabasz, m)?)?;
    m.add_function(wrap_pyfunction!(silhouette, m)?)?;
    m.add_function(wrap_pyfunction!(clustering_f1, m)?)?;
    m.add_function(wrap_pyfunction!(random_select, m)?)?;
    m.add_function(wrap_pyfunction!(perplexity_select, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add_function(wrap_pyfunction!(run_simulation, m)?)?;
    Ok(())
}
