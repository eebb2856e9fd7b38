//! Small from-scratch MLP: forward pass, categorical cross-entropy,
//! backpropagation and plain SGD, all in f64.
//!
//! Weights are immutable values; training steps produce new values. The
//! networks here are tiny (e.g. 22-10-10-2), so there is no BLAS, no
//! autodiff and no attempt at cache blocking.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PROB_FLOOR: f64 = 1e-12;
pub const WEIGHT_FILE_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum NeuralError {
    #[error("bad layer dims: {0}")]
    BadDims(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("bad target class {target} for {classes} classes")]
    BadTarget { target: usize, classes: usize },
    #[error("empty training batch")]
    EmptyBatch,
    #[error("weight file invalid: {0}")]
    BadWeightFile(String),
}

/// One dense layer, weights stored row-major (out x in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "LayerDto", into = "LayerDto")]
pub struct Layer {
    pub out_dim: usize,
    pub in_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LayerDto {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl From<LayerDto> for Layer {
    fn from(d: LayerDto) -> Self {
        let out_dim = d.w.len();
        let in_dim = d.w.first().map_or(0, |r| r.len());
        Layer { out_dim, in_dim, w: d.w.into_iter().flatten().collect(), b: d.b }
    }
}

impl From<Layer> for LayerDto {
    fn from(l: Layer) -> Self {
        LayerDto {
            w: l.w.chunks(l.in_dim.max(1)).map(|r| r.to_vec()).collect(),
            b: l.b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpWeights {
    pub version: u32,
    pub dims: Vec<usize>,
    pub layers: Vec<Layer>,
}

/// Gradients with the same shapes as the weights they differentiate.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone)]
pub struct TrainSample {
    pub features: Vec<f64>,
    pub class_index: usize,
}

impl MlpWeights {
    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.dims.len() < 2 || self.dims.iter().any(|&d| d == 0) {
            return Err(NeuralError::BadDims(format!("{:?}", self.dims)));
        }
        if self.layers.len() != self.dims.len() - 1 {
            return Err(NeuralError::BadWeightFile("layer count mismatch".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.in_dim != self.dims[i]
                || layer.out_dim != self.dims[i + 1]
                || layer.w.len() != layer.in_dim * layer.out_dim
                || layer.b.len() != layer.out_dim
            {
                return Err(NeuralError::BadWeightFile(format!("layer {i} shape mismatch")));
            }
            if layer.w.iter().chain(layer.b.iter()).any(|v| !v.is_finite()) {
                return Err(NeuralError::BadWeightFile(format!("layer {i} has non-finite values")));
            }
        }
        Ok(())
    }
}

/// He-uniform initialization (bound sqrt(6/fan_in)), biases zero,
/// deterministic per seed.
pub fn init_weights(dims: &[usize], seed: u64) -> Result<MlpWeights, NeuralError> {
    if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
        return Err(NeuralError::BadDims(format!("{dims:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = dims
        .windows(2)
        .map(|pair| {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            Layer {
                out_dim: fan_out,
                in_dim: fan_in,
                w: (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect(),
                b: vec![0.0; fan_out],
            }
        })
        .collect();
    Ok(MlpWeights { version: WEIGHT_FILE_VERSION, dims: dims.to_vec(), layers })
}

fn affine(layer: &Layer, x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    for o in 0..layer.out_dim {
        let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
        let mut acc = layer.b[o];
        for (w, xi) in row.iter().zip(x) {
            acc += w * xi;
        }
        out.push(acc);
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// ReLU hidden layers, stabilized softmax output.
pub fn forward(w: &MlpWeights, x: &[f64]) -> Result<Vec<f64>, NeuralError> {
    if x.len() != w.input_dim() {
        return Err(NeuralError::DimMismatch { expected: w.input_dim(), got: x.len() });
    }
    let mut cur = x.to_vec();
    let mut next = Vec::new();
    let last = w.layers.len() - 1;
    for (i, layer) in w.layers.iter().enumerate() {
        affine(layer, &cur, &mut next);
        if i < last {
            for v in next.iter_mut() {
                *v = v.max(0.0);
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    softmax_in_place(&mut cur);
    Ok(cur)
}

/// Cross-entropy of a predicted distribution, floored before the log.
pub fn loss(probs: &[f64], target: usize) -> Result<f64, NeuralError> {
    if target >= probs.len() {
        return Err(NeuralError::BadTarget { target, classes: probs.len() });
    }
    Ok(-probs[target].max(PROB_FLOOR).ln())
}

/// Mean-over-batch gradients of the cross-entropy loss.
pub fn backward(w: &MlpWeights, batch: &[TrainSample]) -> Result<Gradients, NeuralError> {
    if batch.is_empty() {
        return Err(NeuralError::EmptyBatch);
    }
    let n_layers = w.layers.len();
    let mut grads = Gradients {
        layers: w
            .layers
            .iter()
            .map(|l| Layer {
                out_dim: l.out_dim,
                in_dim: l.in_dim,
                w: vec![0.0; l.w.len()],
                b: vec![0.0; l.b.len()],
            })
            .collect(),
    };
    let scale = 1.0 / batch.len() as f64;

    for sample in batch {
        if sample.features.len() != w.input_dim() {
            return Err(NeuralError::DimMismatch {
                expected: w.input_dim(),
                got: sample.features.len(),
            });
        }
        if sample.class_index >= w.output_dim() {
            return Err(NeuralError::BadTarget {
                target: sample.class_index,
                classes: w.output_dim(),
            });
        }

        // forward, keeping post-activation values per layer
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        activations.push(sample.features.clone());
        let mut buf = Vec::new();
        for (i, layer) in w.layers.iter().enumerate() {
            affine(layer, activations.last().unwrap(), &mut buf);
            if i < n_layers - 1 {
                for v in buf.iter_mut() {
                    *v = v.max(0.0);
                }
            } else {
                softmax_in_place(&mut buf);
            }
            activations.push(buf.clone());
        }

        // softmax + cross-entropy: dL/dz = p - onehot(target)
        let mut delta: Vec<f64> = activations[n_layers].clone();
        delta[sample.class_index] -= 1.0;

        for i in (0..n_layers).rev() {
            let layer = &w.layers[i];
            let input = &activations[i];
            let g = &mut grads.layers[i];
            for o in 0..layer.out_dim {
                let d = delta[o] * scale;
                g.b[o] += d;
                let row = &mut g.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (gw, xi) in row.iter_mut().zip(input) {
                    *gw += d * xi;
                }
            }
            if i > 0 {
                // propagate through the layer, gating by the ReLU activation
                let mut prev = vec![0.0; layer.in_dim];
                for o in 0..layer.out_dim {
                    let d = delta[o];
                    let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (p, wv) in prev.iter_mut().zip(row) {
                        *p += d * wv;
                    }
                }
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }
    Ok(grads)
}

/// w' = w - lr * g, elementwise.
pub fn sgd_step(w: &MlpWeights, g: &Gradients, lr: f64) -> MlpWeights {
    let mut out = w.clone();
    for (layer, gl) in out.layers.iter_mut().zip(&g.layers) {
        for (wv, gv) in layer.w.iter_mut().zip(&gl.w) {
            *wv -= lr * gv;
        }
        for (bv, gv) in layer.b.iter_mut().zip(&gl.b) {
            *bv -= lr * gv;
        }
    }
    out
}

/// Seeded-shuffle mini-batch SGD over full epochs.
pub fn train_epochs(
    w: &MlpWeights,
    samples: &[TrainSample],
    lr: f64,
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> Result<MlpWeights, NeuralError> {
    if samples.is_empty() {
        return Err(NeuralError::EmptyBatch);
    }
    let batch_size = batch_size.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut weights = w.clone();
    let mut batch = Vec::with_capacity(batch_size);
    for _ in 0..epochs {
        shuffle(&mut order, &mut rng);
        for chunk in order.chunks(batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| samples[i].clone()));
            let grads = backward(&weights, &batch)?;
            weights = sgd_step(&weights, &grads, lr);
        }
    }
    Ok(weights)
}

// Fisher-Yates, kept local so the shuffle sequence is pinned to this crate
// rather than to rand's (version-dependent) SliceRandom implementation.
fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

pub fn mean_loss(w: &MlpWeights, samples: &[TrainSample]) -> Result<f64, NeuralError> {
    let mut total = 0.0;
    for s in samples {
        let probs = forward(w, &s.features)?;
        total += loss(&probs, s.class_index)?;
    }
    Ok(total / samples.len() as f64)
}

pub fn to_json(w: &MlpWeights) -> String {
    serde_json::to_string_pretty(w).expect("weights serialize")
}

pub fn from_json(s: &str) -> Result<MlpWeights, NeuralError> {
    let w: MlpWeights =
        serde_json::from_str(s).map_err(|e| NeuralError::BadWeightFile(e.to_string()))?;
    w.validate()?;
    Ok(w)
}
