//! Toy training target: multinomial logistic regression trained one
//! sample at a time, plus weighted federated averaging.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    /// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8; the moment state
    /// is fresh for every local-training call.
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub epochs_per_round: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            optimizer: Optimizer::Adam,
            epochs_per_round: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs_per_round == 0 {
            return Err(Error::Config("epochs_per_round must be at least 1".into()));
        }
        Ok(())
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Flat parameter vector: class-major weight rows then the bias block,
/// `n_classes * dim + n_classes` values in total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub values: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(n_classes: usize, dim: usize) -> Self {
        ModelParams {
            values: vec![0.0; n_classes * dim + n_classes],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Class logits `W x + b` for one sample.
fn logits(params: &[f64], n_classes: usize, dim: usize, x: &[f64]) -> Vec<f64> {
    let bias_base = n_classes * dim;
    (0..n_classes)
        .map(|c| {
            let row = &params[c * dim..(c + 1) * dim];
            row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + params[bias_base + c]
        })
        .collect()
}

fn softmax(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        total += *l;
    }
    for l in logits.iter_mut() {
        *l /= total;
    }
}

/// Cross-entropy loss of one sample.
pub fn sample_loss(params: &ModelParams, n_classes: usize, x: &[f64], label: u32) -> f64 {
    let dim = x.len();
    let z = logits(&params.values, n_classes, dim, x);
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = z.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
    log_sum - z[label as usize]
}

/// Cross-entropy gradient of one sample, written into `grad`.
fn sample_grad(params: &[f64], n_classes: usize, dim: usize, x: &[f64], label: u32, grad: &mut [f64]) {
    let mut probs = logits(params, n_classes, dim, x);
    softmax(&mut probs);
    let bias_base = n_classes * dim;
    for c in 0..n_classes {
        let err = probs[c] - if c == label as usize { 1.0 } else { 0.0 };
        for (g, v) in grad[c * dim..(c + 1) * dim].iter_mut().zip(x) {
            *g = err * v;
        }
        grad[bias_base + c] = err;
    }
}

/// One local-training pass: `epochs_per_round` epochs over the samples in
/// index order, one gradient step per sample (batch size 1).
pub fn local_train(
    params: &ModelParams,
    features: &Matrix,
    labels: &[u32],
    n_classes: usize,
    config: &TrainConfig,
) -> Result<ModelParams> {
    config.validate()?;
    if features.rows() == 0 {
        return Err(Error::EmptyInput("local_train on an empty coreset"));
    }
    if features.rows() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} samples but {} labels",
            features.rows(),
            labels.len()
        )));
    }
    let dim = features.cols();
    if params.len() != n_classes * dim + n_classes {
        return Err(Error::DimensionMismatch(format!(
            "params length {} does not match {n_classes} classes x {dim} features",
            params.len()
        )));
    }

    let mut w = params.values.clone();
    let mut grad = vec![0.0; w.len()];
    let mut adam_m = vec![0.0; w.len()];
    let mut adam_v = vec![0.0; w.len()];
    let mut step = 0u32;

    for _ in 0..config.epochs_per_round {
        for (i, &label) in labels.iter().enumerate() {
            sample_grad(&w, n_classes, dim, features.row(i), label, &mut grad);
            match config.optimizer {
                Optimizer::Sgd => {
                    for (p, g) in w.iter_mut().zip(&grad) {
                        *p -= config.learning_rate * g;
                    }
                }
                Optimizer::Adam => {
                    step += 1;
                    let bc1 = 1.0 - ADAM_BETA1.powi(step as i32);
                    let bc2 = 1.0 - ADAM_BETA2.powi(step as i32);
                    for ((p, g), (m, v)) in w
                        .iter_mut()
                        .zip(&grad)
                        .zip(adam_m.iter_mut().zip(adam_v.iter_mut()))
                    {
                        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                        let m_hat = *m / bc1;
                        let v_hat = *v / bc2;
                        *p -= config.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
    Ok(ModelParams { values: w })
}

/// Size-weighted federated average: `sum_i (|D_i| / sum_j |D_j|) w_i`.
/// Updates with zero-size coresets are ignored; at least one positive
/// size is required.
pub fn aggregate(updates: &[(ModelParams, usize)]) -> Result<ModelParams> {
    let contributing: Vec<&(ModelParams, usize)> =
        updates.iter().filter(|(_, size)| *size > 0).collect();
    if contributing.is_empty() {
        return Err(Error::EmptyInput("aggregate with no positive-size updates"));
    }
    let len = contributing[0].0.len();
    for (p, _) in &contributing {
        if p.len() != len {
            return Err(Error::DimensionMismatch(
                "aggregated parameter vectors differ in length".into(),
            ));
        }
    }
    let total: f64 = contributing.iter().map(|(_, s)| *s as f64).sum();
    let mut out = vec![0.0; len];
    for (params, size) in &contributing {
        let weight = *size as f64 / total;
        for (o, v) in out.iter_mut().zip(&params.values) {
            *o += weight * v;
        }
    }
    Ok(ModelParams { values: out })
}

/// Held-out evaluation: argmax predictions (ties to the lowest class) and
/// macro F1 over all classes.
pub fn evaluate(
    params: &ModelParams,
    features: &Matrix,
    labels: &[u32],
    n_classes: usize,
) -> Result<(f64, f64)> {
    if features.rows() == 0 {
        return Err(Error::EmptyInput("evaluate on an empty held-out set"));
    }
    if features.rows() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} samples but {} labels",
            features.rows(),
            labels.len()
        )));
    }
    let dim = features.cols();
    let mut correct = 0usize;
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fn_ = vec![0usize; n_classes];
    for (i, &label) in labels.iter().enumerate() {
        let z = logits(&params.values, n_classes, dim, features.row(i));
        let mut pred = 0usize;
        for (c, &l) in z.iter().enumerate() {
            if l > z[pred] {
                pred = c;
            }
        }
        if pred == label as usize {
            correct += 1;
            tp[pred] += 1;
        } else {
            fp[pred] += 1;
            fn_[label as usize] += 1;
        }
    }
    let accuracy = correct as f64 / labels.len() as f64;
    let mut f1_sum = 0.0;
    for c in 0..n_classes {
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        if denom > 0 {
            f1_sum += 2.0 * tp[c] as f64 / denom as f64;
        }
    }
    Ok((accuracy, f1_sum / n_classes as f64))
}
