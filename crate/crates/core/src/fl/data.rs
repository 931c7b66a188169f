//! Synthetic Gaussian-mixture classification data.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Row-major feature matrix with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize, classes: usize) -> Result<Self> {
        if dim == 0 || classes == 0 {
            return Err(Error::shape("dataset needs dim >= 1 and classes >= 1"));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::shape("feature matrix does not match label count"));
        }
        if labels.iter().any(|&y| y >= classes) {
            return Err(Error::domain("label outside the class range"));
        }
        Ok(Dataset {
            features,
            labels,
            dim,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// Class centres of a Gaussian mixture: each coordinate is
/// `N(0, separation^2 / dim)`, so centres sit about `separation` from the
/// origin.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    means: Vec<f64>,
    dim: usize,
    classes: usize,
    noise: f64,
}

impl GaussianMixture {
    pub fn sample_means<R: Rng + ?Sized>(classes: usize, dim: usize, separation: f64, noise: f64, rng: &mut R) -> Result<Self> {
        if classes == 0 || dim == 0 {
            return Err(Error::shape("mixture needs dim >= 1 and classes >= 1"));
        }
        if !(separation >= 0.0 && noise >= 0.0) {
            return Err(Error::domain("separation and noise must be >= 0"));
        }
        let scale = separation / crate::math::sqrt(dim as f64);
        let means = (0..classes * dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                scale * z
            })
            .collect();
        Ok(GaussianMixture {
            means,
            dim,
            classes,
            noise,
        })
    }

    pub fn mean(&self, class: usize) -> &[f64] {
        &self.means[class * self.dim..(class + 1) * self.dim]
    }

    /// `per_class[c]` samples of each class, in class order.
    pub fn sample<R: Rng + ?Sized>(&self, per_class: &[usize], rng: &mut R) -> Result<Dataset> {
        if per_class.len() != self.classes {
            return Err(Error::shape("one count per class expected"));
        }
        let n: usize = per_class.iter().sum();
        let mut features = Vec::with_capacity(n * self.dim);
        let mut labels = Vec::with_capacity(n);
        for (c, &count) in per_class.iter().enumerate() {
            for _ in 0..count {
                for &m in self.mean(c) {
                    let z: f64 = StandardNormal.sample(rng);
                    features.push(m + self.noise * z);
                }
                labels.push(c);
            }
        }
        Dataset::new(features, labels, self.dim, self.classes)
    }
}
