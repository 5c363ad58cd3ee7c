//! Minimal supervised-learning kernel: a configurable multi-layer
//! perceptron with softmax cross-entropy, exact gradients, and mini-batch
//! SGD.
//!
//! Models travel as flat `Vec<f64>` parameter vectors so the protocol layer
//! can buffer, average, and rescale them without knowing the architecture.
//! Parameters are laid out layer by layer: the weight matrix in row-major
//! order (`out` rows of `in` columns), then the `out` biases.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand_core::RngCore;

use crate::math;
use crate::rng;

/// Flat vector of all model parameters.
pub type ParamVector = Vec<f64>;
/// Flat gradient (or normalized-update) vector, same layout as the parameters.
pub type GradVector = Vec<f64>;

/// One labeled training or evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Input features; length must equal the model's input dimension.
    pub features: Vec<f64>,
    /// Class index in `[0, output_dim)`.
    pub label: usize,
}

/// Errors from the learning kernel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MlError {
    /// A loss/gradient/training call received no samples.
    EmptyDataset,
    /// `local_train` was asked for fewer than one SGD step.
    NoLocalBudget,
    /// The layer list cannot describe a network.
    BadSpec(&'static str),
    /// A vector length does not match the model.
    DimensionMismatch { expected: usize, got: usize },
}

impl fmt::Display for MlError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MlError::EmptyDataset => write!(f, "empty dataset"),
            MlError::NoLocalBudget => write!(f, "no local budget"),
            MlError::BadSpec(why) => write!(f, "bad model spec: {why}"),
            MlError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
        }
    }
}

impl core::error::Error for MlError {}

/// Network shape: input dimension, hidden widths, and the class count.
///
/// Hidden layers use a rectifier; the final layer emits raw logits consumed
/// by softmax cross-entropy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    layer_sizes: Vec<usize>,
}

impl ModelSpec {
    /// Build a spec from `[input, hidden..., classes]`. At least two layers,
    /// all sizes positive.
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self, MlError> {
        if layer_sizes.len() < 2 {
            return Err(MlError::BadSpec("need at least input and output layers"));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(MlError::BadSpec("zero-width layer"));
        }
        Ok(Self { layer_sizes })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated at construction")
    }

    /// Total parameter count: sum of `(in + 1) * out` over consecutive layers.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    fn check_params(&self, params: &[f64]) -> Result<(), MlError> {
        let expected = self.param_count();
        if params.len() != expected {
            return Err(MlError::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        Ok(())
    }

    fn check_sample(&self, sample: &Sample) -> Result<(), MlError> {
        if sample.features.len() != self.input_dim() {
            return Err(MlError::DimensionMismatch {
                expected: self.input_dim(),
                got: sample.features.len(),
            });
        }
        if sample.label >= self.output_dim() {
            return Err(MlError::DimensionMismatch {
                expected: self.output_dim(),
                got: sample.label,
            });
        }
        Ok(())
    }
}

/// Deterministic scaled-uniform initialization: every entry of a layer is
/// drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn init_params(spec: &ModelSpec, seed: u64) -> ParamVector {
    let mut stream = rng::stream(seed, rng::domain::MODEL_INIT, 0, 0);
    let mut params = Vec::with_capacity(spec.param_count());
    for w in spec.layer_sizes.windows(2) {
        let bound = 1.0 / math::sqrt(w[0] as f64);
        for _ in 0..(w[0] + 1) * w[1] {
            params.push(rng::uniform_range(&mut stream, -bound, bound));
        }
    }
    params
}

/// Forward pass keeping every layer's post-activation values.
/// `acts[0]` is the input, `acts.last()` the raw logits.
fn forward_activations(spec: &ModelSpec, params: &[f64], features: &[f64]) -> Vec<Vec<f64>> {
    let sizes = &spec.layer_sizes;
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(sizes.len());
    acts.push(features.to_vec());
    let mut offset = 0;
    for (l, w) in sizes.windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        let weights = &params[offset..offset + n_in * n_out];
        let biases = &params[offset + n_in * n_out..offset + (n_in + 1) * n_out];
        offset += (n_in + 1) * n_out;

        let prev = &acts[l];
        let last_layer = l + 2 == sizes.len();
        let mut out = Vec::with_capacity(n_out);
        for i in 0..n_out {
            let row = &weights[i * n_in..(i + 1) * n_in];
            let mut z = biases[i];
            for (wij, aj) in row.iter().zip(prev.iter()) {
                z += wij * aj;
            }
            out.push(if last_layer { z } else { z.max(0.0) });
        }
        acts.push(out);
    }
    acts
}

/// Numerically stable softmax cross-entropy of raw logits against a label.
fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for &z in logits {
        sum += math::exp(z - max);
    }
    max + math::ln(sum) - logits[label]
}

/// Softmax probabilities of raw logits.
fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|&z| math::exp(z - max)).collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    probs
}

/// Mean softmax cross-entropy over a dataset. Always non-negative.
pub fn loss(spec: &ModelSpec, params: &[f64], dataset: &[Sample]) -> Result<f64, MlError> {
    spec.check_params(params)?;
    if dataset.is_empty() {
        return Err(MlError::EmptyDataset);
    }
    let mut total = 0.0;
    for sample in dataset {
        spec.check_sample(sample)?;
        let acts = forward_activations(spec, params, &sample.features);
        total += cross_entropy(acts.last().expect("at least one layer"), sample.label);
    }
    Ok(total / dataset.len() as f64)
}

/// Predicted class: argmax of the logits (lowest index wins ties).
pub fn predict(spec: &ModelSpec, params: &[f64], features: &[f64]) -> Result<usize, MlError> {
    spec.check_params(params)?;
    let acts = forward_activations(spec, params, features);
    let logits = acts.last().expect("at least one layer");
    let mut best = 0;
    for (i, &z) in logits.iter().enumerate() {
        if z > logits[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Backpropagate one sample, adding `scale` times its parameter gradient
/// into `grad`. Returns the sample's cross-entropy.
fn accumulate_gradient(
    spec: &ModelSpec,
    params: &[f64],
    sample: &Sample,
    scale: f64,
    grad: &mut [f64],
) -> f64 {
    let sizes = &spec.layer_sizes;
    let acts = forward_activations(spec, params, &sample.features);
    let logits = acts.last().expect("at least one layer");
    let ce = cross_entropy(logits, sample.label);

    // dCE/dlogits = softmax - one_hot(label)
    let mut delta = softmax(logits);
    delta[sample.label] -= 1.0;

    // Layer offsets, walked backwards.
    let mut offsets = Vec::with_capacity(sizes.len() - 1);
    let mut offset = 0;
    for w in sizes.windows(2) {
        offsets.push(offset);
        offset += (w[0] + 1) * w[1];
    }

    for l in (0..sizes.len() - 1).rev() {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let base = offsets[l];
        let prev = &acts[l];

        for i in 0..n_out {
            let di = delta[i];
            let row = &mut grad[base + i * n_in..base + (i + 1) * n_in];
            for (g, aj) in row.iter_mut().zip(prev.iter()) {
                *g += scale * di * aj;
            }
        }
        let bias_base = base + n_in * n_out;
        for (i, &di) in delta.iter().enumerate() {
            grad[bias_base + i] += scale * di;
        }

        if l > 0 {
            // Pull the error back through the weights and the rectifier.
            let weights = &params[base..base + n_in * n_out];
            let mut prev_delta = vec![0.0; n_in];
            for (i, &di) in delta.iter().enumerate() {
                let row = &weights[i * n_in..(i + 1) * n_in];
                for (pd, wij) in prev_delta.iter_mut().zip(row.iter()) {
                    *pd += di * wij;
                }
            }
            for (pd, &a) in prev_delta.iter_mut().zip(prev.iter()) {
                if a <= 0.0 {
                    *pd = 0.0;
                }
            }
            delta = prev_delta;
        }
    }
    ce
}

/// Exact gradient of the mean cross-entropy over a mini-batch.
pub fn gradient(spec: &ModelSpec, params: &[f64], batch: &[Sample]) -> Result<GradVector, MlError> {
    spec.check_params(params)?;
    if batch.is_empty() {
        return Err(MlError::EmptyDataset);
    }
    for sample in batch {
        spec.check_sample(sample)?;
    }
    let mut grad = vec![0.0; params.len()];
    let scale = 1.0 / batch.len() as f64;
    for sample in batch {
        accumulate_gradient(spec, params, sample, scale, &mut grad);
    }
    Ok(grad)
}

/// One explicit SGD step: `params - eta * grad`, elementwise.
pub fn sgd_step(params: &[f64], grad: &[f64], eta: f64) -> Result<ParamVector, MlError> {
    if params.len() != grad.len() {
        return Err(MlError::DimensionMismatch {
            expected: params.len(),
            got: grad.len(),
        });
    }
    Ok(params
        .iter()
        .zip(grad.iter())
        .map(|(w, g)| w - eta * g)
        .collect())
}

/// `kappa` mini-batch SGD steps with batches sampled uniformly with
/// replacement from `dataset`.
///
/// Returns the final parameters and the normalized accumulated update
/// `d = (w_init - w_final) / (eta * kappa)`, which equals the per-step mean
/// of the stochastic gradients up to floating-point accumulation error.
pub fn local_train(
    spec: &ModelSpec,
    w_init: &[f64],
    dataset: &[Sample],
    kappa: u32,
    eta: f64,
    batch_size: usize,
    rng: &mut impl RngCore,
) -> Result<(ParamVector, GradVector), MlError> {
    spec.check_params(w_init)?;
    if kappa < 1 {
        return Err(MlError::NoLocalBudget);
    }
    if dataset.is_empty() || batch_size == 0 {
        return Err(MlError::EmptyDataset);
    }
    for sample in dataset {
        spec.check_sample(sample)?;
    }

    let mut w = w_init.to_vec();
    let mut grad = vec![0.0; w.len()];
    let scale = 1.0 / batch_size as f64;
    for _ in 0..kappa {
        grad.fill(0.0);
        for _ in 0..batch_size {
            let idx = rng::uniform_index(rng, dataset.len());
            accumulate_gradient(spec, &w, &dataset[idx], scale, &mut grad);
        }
        for (wi, gi) in w.iter_mut().zip(grad.iter()) {
            *wi -= eta * gi;
        }
    }

    let denom = eta * kappa as f64;
    let d = w_init
        .iter()
        .zip(w.iter())
        .map(|(w0, wf)| (w0 - wf) / denom)
        .collect();
    Ok((w, d))
}
