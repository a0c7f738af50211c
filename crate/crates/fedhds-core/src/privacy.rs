//! Centroid transformation for upload: tanh scaling into [-1, 1] plus
//! calibrated Gaussian noise.
//!
//! The Gaussian mechanism bound uses sensitivity 2 (the tanh range) and
//! natural logarithms: `sigma >= 2 * sqrt(2 * ln(1.25 / delta)) / epsilon`
//! for epsilon, delta in (0, 1). Raw centroids never leave the client;
//! only the transformed values are uploaded.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::DetRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpConfig {
    pub enabled: bool,
    pub epsilon: f64,
    pub delta: f64,
    /// Noise standard deviation; `None` calibrates from (epsilon, delta).
    pub sigma: Option<f64>,
    pub seed: u64,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig {
            enabled: false,
            epsilon: 0.5,
            delta: 1e-5,
            sigma: None,
            seed: 0,
        }
    }
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.enabled {
            return Ok(());
        }
        if let Some(sigma) = self.sigma {
            if !(sigma >= 0.0) {
                return Err(Error::Domain(format!("sigma must be non-negative, got {sigma}")));
            }
            return Ok(());
        }
        check_unit_open(self.epsilon, "epsilon")?;
        check_unit_open(self.delta, "delta")
    }

    /// Effective noise scale: the supplied sigma, or the calibrated
    /// minimum when absent. Zero when disabled.
    pub fn effective_sigma(&self) -> Result<f64> {
        if !self.enabled {
            return Ok(0.0);
        }
        match self.sigma {
            Some(sigma) if sigma >= 0.0 => Ok(sigma),
            Some(sigma) => Err(Error::Domain(format!("sigma must be non-negative, got {sigma}"))),
            None => calibrate_sigma(self.epsilon, self.delta),
        }
    }
}

fn check_unit_open(value: f64, name: &str) -> Result<()> {
    if !(value > 0.0 && value < 1.0) {
        return Err(Error::Domain(format!(
            "{name} must lie in the open interval (0, 1), got {value}"
        )));
    }
    Ok(())
}

/// Minimal sigma giving (epsilon, delta)-differential privacy for values
/// with range 2, i.e. `2 * sqrt(2 * ln(1.25 / delta)) / epsilon`.
pub fn calibrate_sigma(epsilon: f64, delta: f64) -> Result<f64> {
    check_unit_open(epsilon, "epsilon")?;
    check_unit_open(delta, "delta")?;
    Ok(2.0 * (2.0 * (1.25 / delta).ln()).sqrt() / epsilon)
}

/// A tanh-scaled, optionally noised centroid ready for upload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisedCentroid {
    pub values: Vec<f64>,
}

/// Scales each dimension with tanh, then adds i.i.d. Gaussian noise of
/// the configured sigma (skipped when disabled). Noise is drawn from the
/// provided stream, one draw per dimension in order.
pub fn transform_centroid(
    centroid: &[f64],
    config: &DpConfig,
    rng: &mut DetRng,
) -> Result<NoisedCentroid> {
    if let Some(i) = centroid.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("centroid entry {i}")));
    }
    let sigma = config.effective_sigma()?;
    let values = centroid
        .iter()
        .map(|&c| {
            let scaled = c.tanh();
            if config.enabled && sigma > 0.0 {
                scaled + sigma * rng.next_gaussian()
            } else {
                scaled
            }
        })
        .collect();
    Ok(NoisedCentroid { values })
}
