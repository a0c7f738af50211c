//! Per-sample raw features and the feature-archive file format.
//!
//! A raw feature is the concatenation, in layer order, of the final-token
//! hidden state of every model layer. Archives carry precomputed features
//! (this crate never runs a transformer), optional category labels and
//! optional per-sample perplexity scores.
//!
//! ## Archive format
//!
//! Line 1 is a UTF-8 JSON header terminated by `\n`:
//!
//! ```text
//! {"magic":"FEDCORE1","n_samples":N,"layer_count":L,"layer_dim":V,
//!  "has_labels":B,"has_perplexity":B,"source_tag":S}
//! ```
//!
//! followed by `N` records of `L*V` little-endian f32 values, then (when
//! `has_labels`) `N` little-endian u32 labels, then (when
//! `has_perplexity`) `N` little-endian f32 scores. All floats are 32-bit
//! so fixtures are byte-identical across implementations.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::DetRng;

pub const ARCHIVE_MAGIC: &str = "FEDCORE1";

/// Final-token hidden state of each layer for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStates {
    pub layers: Vec<Vec<f32>>,
}

impl LayerStates {
    pub fn new(layers: Vec<Vec<f32>>) -> Self {
        LayerStates { layers }
    }
}

/// Concatenation of all layer states in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFeature {
    pub values: Vec<f32>,
    pub layer_count: usize,
    pub layer_dim: usize,
}

impl RawFeature {
    /// Slice holding layer `i` (zero-based), i.e. `[i*v, (i+1)*v)`.
    pub fn layer(&self, i: usize) -> &[f32] {
        &self.values[i * self.layer_dim..(i + 1) * self.layer_dim]
    }
}

/// Concatenates per-layer states into one flat feature vector.
///
/// Layers must be non-empty and share one dimension; each entry must be
/// finite.
pub fn assemble_raw_feature(states: &LayerStates) -> Result<RawFeature> {
    if states.layers.is_empty() {
        return Err(Error::EmptyInput("LayerStates has no layers"));
    }
    let layer_dim = states.layers[0].len();
    if layer_dim == 0 {
        return Err(Error::DimensionMismatch("layer dimension is zero".into()));
    }
    let mut values = Vec::with_capacity(states.layers.len() * layer_dim);
    for (i, layer) in states.layers.iter().enumerate() {
        if layer.len() != layer_dim {
            return Err(Error::DimensionMismatch(format!(
                "layer {i} has dimension {}, expected {layer_dim}",
                layer.len()
            )));
        }
        for (j, &v) in layer.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("layer {i}, entry {j}")));
            }
        }
        values.extend_from_slice(layer);
    }
    Ok(RawFeature {
        values,
        layer_count: states.layers.len(),
        layer_dim,
    })
}

/// A set of per-sample raw features with optional labels and perplexities.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureArchive {
    pub layer_count: usize,
    pub layer_dim: usize,
    /// Row-major sample features, each of length `layer_count * layer_dim`.
    pub features: Vec<Vec<f32>>,
    pub labels: Option<Vec<u32>>,
    pub perplexity: Option<Vec<f32>>,
    /// `"full-model"`, `"proxy"` (smaller extractor) or `"synthetic"`.
    pub source_tag: String,
}

#[derive(Serialize, Deserialize)]
struct ArchiveHeader {
    magic: String,
    n_samples: u64,
    layer_count: u64,
    layer_dim: u64,
    has_labels: bool,
    has_perplexity: bool,
    source_tag: String,
}

impl FeatureArchive {
    pub fn n_samples(&self) -> usize {
        self.features.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.layer_count * self.layer_dim
    }

    /// Checks the structural invariants: consistent row lengths, finite
    /// entries, matching label/perplexity lengths, positive perplexities.
    pub fn validate(&self) -> Result<()> {
        if self.layer_count == 0 || self.layer_dim == 0 {
            return Err(Error::InvariantViolation(
                "layer_count and layer_dim must be at least 1".into(),
            ));
        }
        let dim = self.feature_dim();
        for (i, row) in self.features.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::InvariantViolation(format!(
                    "feature row {i} has length {}, expected {dim}",
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("feature row {i}, entry {j}")));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.features.len() {
                return Err(Error::InvariantViolation(format!(
                    "{} labels for {} samples",
                    labels.len(),
                    self.features.len()
                )));
            }
        }
        if let Some(scores) = &self.perplexity {
            if scores.len() != self.features.len() {
                return Err(Error::InvariantViolation(format!(
                    "{} perplexity scores for {} samples",
                    scores.len(),
                    self.features.len()
                )));
            }
            if let Some(i) = scores.iter().position(|&s| !(s > 0.0) || !s.is_finite()) {
                return Err(Error::InvariantViolation(format!(
                    "perplexity score {i} is not a positive finite value"
                )));
            }
        }
        Ok(())
    }

    /// Features as an f64 matrix for the reducers.
    pub fn to_matrix(&self) -> Matrix {
        let dim = self.feature_dim();
        let mut data = Vec::with_capacity(self.features.len() * dim);
        for row in &self.features {
            data.extend(row.iter().map(|&v| f64::from(v)));
        }
        Matrix::from_vec(self.features.len(), dim, data).expect("validated archive")
    }

    /// The last layer's slice of every feature row, as an f64 matrix.
    pub fn last_layer_matrix(&self) -> Matrix {
        self.layer_matrix(self.layer_count - 1)
    }

    /// Layer `i`'s slice of every feature row, as an f64 matrix.
    pub fn layer_matrix(&self, layer: usize) -> Matrix {
        let v = self.layer_dim;
        let start = layer * v;
        let mut data = Vec::with_capacity(self.features.len() * v);
        for row in &self.features {
            data.extend(row[start..start + v].iter().map(|&x| f64::from(x)));
        }
        Matrix::from_vec(self.features.len(), v, data).expect("validated archive")
    }

    /// Row subset of the archive (labels and scores follow).
    pub fn subset(&self, indices: &[usize]) -> FeatureArchive {
        FeatureArchive {
            layer_count: self.layer_count,
            layer_dim: self.layer_dim,
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            perplexity: self
                .perplexity
                .as_ref()
                .map(|p| indices.iter().map(|&i| p[i]).collect()),
            source_tag: self.source_tag.clone(),
        }
    }
}

/// Serializes an archive into a writer. Returns the total bytes written.
pub fn write_archive_to(archive: &FeatureArchive, mut out: impl Write) -> Result<u64> {
    archive.validate()?;
    let header = ArchiveHeader {
        magic: ARCHIVE_MAGIC.to_string(),
        n_samples: archive.n_samples() as u64,
        layer_count: archive.layer_count as u64,
        layer_dim: archive.layer_dim as u64,
        has_labels: archive.labels.is_some(),
        has_perplexity: archive.perplexity.is_some(),
        source_tag: archive.source_tag.clone(),
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    for row in &archive.features {
        for &v in row {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(labels) = &archive.labels {
        for &l in labels {
            bytes.extend_from_slice(&l.to_le_bytes());
        }
    }
    if let Some(scores) = &archive.perplexity {
        for &s in scores {
            bytes.extend_from_slice(&s.to_le_bytes());
        }
    }
    out.write_all(&bytes)?;
    Ok(bytes.len() as u64)
}

/// Writes an archive file. Returns the byte count.
pub fn write_archive(archive: &FeatureArchive, path: impl AsRef<Path>) -> Result<u64> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    let n = write_archive_to(archive, &mut buf)?;
    buf.flush()?;
    Ok(n)
}

/// Parses an archive from a reader, validating every invariant.
pub fn read_archive_from(mut input: impl Read) -> Result<FeatureArchive> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::MalformedHeader("no newline-terminated header line".into()))?;
    let header: ArchiveHeader = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    if header.magic != ARCHIVE_MAGIC {
        return Err(Error::MalformedHeader(format!(
            "bad magic {:?}, expected {ARCHIVE_MAGIC:?}",
            header.magic
        )));
    }
    if header.layer_count == 0 || header.layer_dim == 0 {
        return Err(Error::MalformedHeader(
            "layer_count and layer_dim must be at least 1".into(),
        ));
    }
    let n = header.n_samples as usize;
    let dim = (header.layer_count * header.layer_dim) as usize;
    let payload = &bytes[newline + 1..];
    let feature_bytes = n as u64 * dim as u64 * 4;
    let label_bytes = if header.has_labels { n as u64 * 4 } else { 0 };
    let score_bytes = if header.has_perplexity { n as u64 * 4 } else { 0 };
    let expected = feature_bytes + label_bytes + score_bytes;
    let found = payload.len() as u64;
    if found < expected {
        return Err(Error::TruncatedPayload { expected, found });
    }
    if found > expected {
        return Err(Error::TrailingBytes {
            extra: found - expected,
        });
    }

    let mut offset = 0usize;
    let mut features = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = Vec::with_capacity(dim);
        for _ in 0..dim {
            let v = f32::from_le_bytes(payload[offset..offset + 4].try_into().unwrap());
            row.push(v);
            offset += 4;
        }
        features.push(row);
    }
    let labels = if header.has_labels {
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            labels.push(u32::from_le_bytes(payload[offset..offset + 4].try_into().unwrap()));
            offset += 4;
        }
        Some(labels)
    } else {
        None
    };
    let perplexity = if header.has_perplexity {
        let mut scores = Vec::with_capacity(n);
        for _ in 0..n {
            scores.push(f32::from_le_bytes(payload[offset..offset + 4].try_into().unwrap()));
            offset += 4;
        }
        Some(scores)
    } else {
        None
    };

    let archive = FeatureArchive {
        layer_count: header.layer_count as usize,
        layer_dim: header.layer_dim as usize,
        features,
        labels,
        perplexity,
        source_tag: header.source_tag,
    };
    archive.validate()?;
    Ok(archive)
}

/// Reads an archive file.
pub fn read_archive(path: impl AsRef<Path>) -> Result<FeatureArchive> {
    let file = std::fs::File::open(path)?;
    read_archive_from(std::io::BufReader::new(file))
}

/// Synthetic-archive geometry: Gaussian task modes on a separation lattice.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_modes: usize,
    pub mode_separation: f64,
    pub mode_stddev: f64,
    pub layer_count: usize,
    pub layer_dim: usize,
    pub samples_per_mode: usize,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_modes == 0 {
            return Err(Error::Config("n_modes must be at least 1".into()));
        }
        if !(self.mode_separation > 0.0) {
            return Err(Error::Config("mode_separation must be positive".into()));
        }
        if !(self.mode_stddev > 0.0) {
            return Err(Error::Config("mode_stddev must be positive".into()));
        }
        if self.layer_count == 0 || self.layer_dim == 0 {
            return Err(Error::Config("layer_count and layer_dim must be at least 1".into()));
        }
        Ok(())
    }

    /// Deterministic center of mode `m`: a point of the integer lattice
    /// scaled by `mode_separation`, so distinct modes are at least
    /// `mode_separation` apart.
    pub fn mode_center(&self, m: usize) -> Vec<f64> {
        let dim = self.layer_count * self.layer_dim;
        let base = (self.n_modes as f64).powf(1.0 / dim as f64).ceil().max(2.0) as usize;
        let mut center = vec![0.0; dim];
        let mut rest = m;
        for coord in center.iter_mut() {
            *coord = (rest % base) as f64 * self.mode_separation;
            rest /= base;
            if rest == 0 {
                break;
            }
        }
        center
    }
}

/// Generates a labeled synthetic archive: `samples_per_mode` draws around
/// each mode center, mode id as label. Deterministic given the seed.
pub fn synth_archive(spec: &SyntheticSpec, seed: u64) -> Result<FeatureArchive> {
    spec.validate()?;
    let dim = spec.layer_count * spec.layer_dim;
    let mut rng = DetRng::new(seed);
    let mut features = Vec::with_capacity(spec.n_modes * spec.samples_per_mode);
    let mut labels = Vec::with_capacity(spec.n_modes * spec.samples_per_mode);
    for mode in 0..spec.n_modes {
        let center = spec.mode_center(mode);
        for _ in 0..spec.samples_per_mode {
            let row: Vec<f32> = center
                .iter()
                .map(|&c| (c + spec.mode_stddev * rng.next_gaussian()) as f32)
                .collect();
            debug_assert_eq!(row.len(), dim);
            features.push(row);
            labels.push(mode as u32);
        }
    }
    let archive = FeatureArchive {
        layer_count: spec.layer_count,
        layer_dim: spec.layer_dim,
        features,
        labels: Some(labels),
        perplexity: None,
        source_tag: "synthetic".to_string(),
    };
    archive.validate()?;
    Ok(archive)
}
