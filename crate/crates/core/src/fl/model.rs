//! Multinomial softmax regression trained by mini-batch gradient descent.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use super::data::Dataset;
use crate::error::{Error, Result};
use crate::math;

/// Flat parameters: the `classes x dim` weight matrix row by row, then one
/// bias per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    values: Vec<f64>,
    dim: usize,
    classes: usize,
}

impl ModelParams {
    pub fn zeros(dim: usize, classes: usize) -> Self {
        ModelParams {
            values: vec![0.0; classes * dim + classes],
            dim,
            classes,
        }
    }

    pub fn from_values(values: Vec<f64>, dim: usize, classes: usize) -> Result<Self> {
        if values.len() != classes * dim + classes {
            return Err(Error::shape("parameter vector has the wrong length"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("parameters must be finite"));
        }
        Ok(ModelParams { values, dim, classes })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    fn logits(&self, x: &[f64], out: &mut [f64]) {
        let bias = &self.values[self.classes * self.dim..];
        for (c, o) in out.iter_mut().enumerate() {
            let w = &self.values[c * self.dim..(c + 1) * self.dim];
            *o = bias[c] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Predicted class, lowest index on ties.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut z = vec![0.0; self.classes];
        self.logits(x, &mut z);
        let mut best = 0;
        for c in 1..self.classes {
            if z[c] > z[best] {
                best = c;
            }
        }
        best
    }

    /// Cross-entropy of one sample.
    pub fn sample_loss(&self, x: &[f64], y: usize) -> f64 {
        let mut z = vec![0.0; self.classes];
        self.logits(x, &mut z);
        log_sum_exp(&z) - z[y]
    }

    /// Adds the cross-entropy gradient of one sample to `grad` and returns
    /// the sample loss.
    fn add_gradient(&self, x: &[f64], y: usize, grad: &mut [f64], z: &mut [f64]) -> f64 {
        self.logits(x, z);
        let lse = log_sum_exp(z);
        let loss = lse - z[y];
        let off = self.classes * self.dim;
        for c in 0..self.classes {
            let r = math::exp(z[c] - lse) - if c == y { 1.0 } else { 0.0 };
            for (g, &xj) in grad[c * self.dim..(c + 1) * self.dim].iter_mut().zip(x) {
                *g += r * xj;
            }
            grad[off + c] += r;
        }
        loss
    }

    /// Summed loss and gradient over `indices` of `data`.
    pub fn loss_and_gradient(&self, data: &Dataset, indices: &[usize]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.len()];
        let mut z = vec![0.0; self.classes];
        let loss = indices
            .iter()
            .map(|&i| self.add_gradient(data.x(i), data.label(i), &mut grad, &mut z))
            .sum();
        (loss, grad)
    }

    /// Mean loss over `indices`; zero when empty.
    pub fn mean_loss(&self, data: &Dataset, indices: &[usize]) -> f64 {
        if indices.is_empty() {
            return 0.0;
        }
        indices.iter().map(|&i| self.sample_loss(data.x(i), data.label(i))).sum::<f64>() / indices.len() as f64
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + math::ln(z.iter().map(|&v| math::exp(v - m)).sum::<f64>())
}

/// `epochs` mini-batch steps on the samples `indices` of `data`. Each step
/// draws `min(batch, |indices|)` samples without replacement.
pub fn local_update<R: Rng + ?Sized>(
    model: &ModelParams,
    data: &Dataset,
    indices: &[usize],
    learning_rate: f64,
    epochs: u32,
    batch: usize,
    rng: &mut R,
) -> Result<ModelParams> {
    if indices.is_empty() {
        return Err(Error::domain("local update on an empty client dataset"));
    }
    if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
        return Err(Error::domain("learning rate must be finite and >= 0"));
    }
    if batch == 0 {
        return Err(Error::domain("batch size must be at least 1"));
    }
    if data.dim() != model.dim || data.classes() != model.classes {
        return Err(Error::shape("dataset and model dimensions differ"));
    }
    let batch = batch.min(indices.len());
    let mut w = model.clone();
    let mut picked = Vec::with_capacity(batch);
    for _ in 0..epochs {
        picked.clear();
        picked.extend(index::sample(rng, indices.len(), batch).into_iter().map(|j| indices[j]));
        let (_, g) = w.loss_and_gradient(data, &picked);
        let step = learning_rate / batch as f64;
        for (v, gi) in w.values.iter_mut().zip(&g) {
            *v -= step * gi;
        }
    }
    Ok(w)
}

/// Data-weighted average of client models.
pub fn aggregate(models: &[ModelParams], sizes: &[f64]) -> Result<ModelParams> {
    let first = models
        .first()
        .ok_or_else(|| Error::domain("aggregation needs at least one model"))?;
    if sizes.len() != models.len() {
        return Err(Error::shape("one size per model expected"));
    }
    if models.iter().any(|m| m.dim != first.dim || m.classes != first.classes) {
        return Err(Error::shape("models differ in dimension"));
    }
    let total: f64 = sizes.iter().sum();
    if !(total > 0.0) || sizes.iter().any(|&s| !(s >= 0.0)) {
        return Err(Error::domain("sizes must be >= 0 with a positive total"));
    }
    let mut out = vec![0.0; first.len()];
    for (m, &s) in models.iter().zip(sizes) {
        let w = s / total;
        for (o, v) in out.iter_mut().zip(&m.values) {
            *o += w * v;
        }
    }
    Ok(ModelParams {
        values: out,
        dim: first.dim,
        classes: first.classes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

/// Top-1 accuracy and mean cross-entropy. An empty set scores zero on both.
pub fn evaluate(model: &ModelParams, data: &Dataset) -> Evaluation {
    if data.is_empty() {
        return Evaluation { accuracy: 0.0, loss: 0.0 };
    }
    let mut correct = 0usize;
    let mut loss = 0.0;
    let mut z = vec![0.0; model.classes];
    for i in 0..data.len() {
        model.logits(data.x(i), &mut z);
        let y = data.label(i);
        loss += log_sum_exp(&z) - z[y];
        let best = (1..z.len()).fold(0, |b, c| if z[c] > z[b] { c } else { b });
        correct += usize::from(best == y);
    }
    Evaluation {
        accuracy: correct as f64 / data.len() as f64,
        loss: loss / data.len() as f64,
    }
}
