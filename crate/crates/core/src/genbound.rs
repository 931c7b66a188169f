//! Generalization-error bound calculator and the variational KL check.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::heterogeneity::{kl_divergence, LabelDistribution};
use crate::math;

/// Inputs of the bound after `round` training rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundParams {
    pub round: usize,
    /// `eta_0 .. eta_{t-1}`.
    pub learning_rates: Vec<f64>,
    pub smoothness: f64,
    pub lipschitz: f64,
    pub grad_variance: f64,
    pub epochs: u32,
    /// Expected loss gaps `Delta_0 .. Delta_{t-1}`.
    pub optimality_gaps: Vec<f64>,
    /// Upper bound `c` on the loss.
    pub loss_bound: f64,
    pub confidence: f64,
    pub stability: f64,
    pub client_sizes: Vec<f64>,
    /// `D(p_g || p_k)` per client.
    pub kl_terms: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundBreakdown {
    pub drift_term: f64,
    pub sample_term: f64,
    pub kl_term: f64,
    pub size_term: f64,
    pub stability_term: f64,
    pub sigma_d2: f64,
    pub total: f64,
}

impl BoundParams {
    fn validate(&self) -> Result<()> {
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::domain(format!(
                "confidence must lie in (0, 1), got {}",
                self.confidence
            )));
        }
        if self.learning_rates.len() != self.round {
            return Err(Error::shape(format!(
                "{} learning rates for round {}",
                self.learning_rates.len(),
                self.round
            )));
        }
        if self.optimality_gaps.len() != self.round {
            return Err(Error::shape(format!(
                "{} optimality gaps for round {}",
                self.optimality_gaps.len(),
                self.round
            )));
        }
        if self.epochs == 0 {
            return Err(Error::domain("epochs must be at least 1"));
        }
        let scalars = [
            ("smoothness", self.smoothness),
            ("lipschitz", self.lipschitz),
            ("grad_variance", self.grad_variance),
            ("loss_bound", self.loss_bound),
            ("stability", self.stability),
        ];
        for (name, v) in scalars {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        let vectors: [(&str, &[f64]); 4] = [
            ("learning_rates", &self.learning_rates),
            ("optimality_gaps", &self.optimality_gaps),
            ("client_sizes", &self.client_sizes),
            ("kl_terms", &self.kl_terms),
        ];
        for (name, v) in vectors {
            if v.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::domain(format!("{name} entries must be finite and >= 0")));
            }
        }
        if !(self.client_sizes.iter().sum::<f64>() > 0.0) {
            return Err(Error::domain("total data size must be > 0"));
        }
        Ok(())
    }
}

/// Evaluates the bound term by term.
pub fn evaluate_bound(p: &BoundParams) -> Result<BoundBreakdown> {
    p.validate()?;
    let e = f64::from(p.epochs);
    let (lam, l, var) = (p.smoothness, p.lipschitz, p.grad_variance);
    let drift_term: f64 = p
        .learning_rates
        .iter()
        .zip(&p.optimality_gaps)
        .map(|(&eta, &gap)| {
            let eta2 = eta * eta;
            4.0 * (e - 1.0) * (2.0 * eta2 * lam * l * gap / e + eta2 * var * l / (e * e))
        })
        .sum();

    let c = p.loss_bound;
    let d: f64 = p.client_sizes.iter().sum();
    let sigma_d2 = p.client_sizes.iter().map(|&dk| math::sqrt(dk)).sum::<f64>() / d;
    let sample_term = math::sqrt(c * c * math::ln(4.0 / p.confidence) / 2.0) * sigma_d2;
    let kl_term: f64 = p.kl_terms.iter().sum();
    let size_term = c * c / (8.0 * d);
    let stability_term = (2.0 * p.stability + c / d) * math::sqrt(d * math::ln(2.0 / p.confidence));
    Ok(BoundBreakdown {
        drift_term,
        sample_term,
        kl_term,
        size_term,
        stability_term,
        sigma_d2,
        total: drift_term + sample_term + kl_term + size_term + stability_term,
    })
}

/// `D(p_g || p_k) - (E_{p_g}[q] - ln E_{p_k}[exp q])`; nonnegative by the
/// variational characterization of KL divergence.
pub fn dv_gap(p_g: &LabelDistribution, p_k: &LabelDistribution, q: &[f64]) -> Result<f64> {
    if q.len() != p_g.len() {
        return Err(Error::shape(format!(
            "test function over {} categories, distributions over {}",
            q.len(),
            p_g.len()
        )));
    }
    if q.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("test function must be bounded"));
    }
    let kl = kl_divergence(p_g, p_k)?;
    let mean_g: f64 = p_g.as_slice().iter().zip(q).map(|(p, x)| p * x).sum();
    let peak = p_k
        .as_slice()
        .iter()
        .zip(q)
        .filter(|(&p, _)| p > 0.0)
        .map(|(_, &x)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    let scaled: f64 = p_k
        .as_slice()
        .iter()
        .zip(q)
        .map(|(&p, &x)| if p > 0.0 { p * math::exp(x - peak) } else { 0.0 })
        .sum();
    let log_mgf = peak + math::ln(scaled);
    Ok(kl - (mean_g - log_mgf))
}
