//! Exact bandwidth split for a fixed selection and fixed frequencies.
//!
//! Minimizes `a1 T + a2 sum(w_k / b_k)` subject to `c_k / b_k + t_k <= T` and
//! `sum b <= 1`. For fixed `T` the optimum is `b_k = max(c_k / (T - t_k),
//! lambda sqrt(w_k))` with `lambda` chosen to exhaust the band; the outer
//! problem in `T` is convex and one-dimensional.

use alloc::vec;
use alloc::vec::Vec;

use super::ClientTerms;
use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthSolution {
    /// Fractions aligned with the input terms.
    pub bandwidth: Vec<f64>,
    /// Round latency `max_k (c_k / b_k + t_k)`.
    pub latency: f64,
    /// Utility including computation energy.
    pub objective: f64,
}

fn evaluate(terms: &[ClientTerms], b: &[f64], a1: f64, a2: f64) -> BandwidthSolution {
    let mut latency = 0.0f64;
    let mut energy = 0.0;
    for (c, &bk) in terms.iter().zip(b) {
        latency = latency.max(c.latency(bk));
        energy += c.energy(bk);
    }
    BandwidthSolution {
        bandwidth: b.to_vec(),
        latency,
        objective: a1 * latency + a2 * energy,
    }
}

/// Smallest achievable latency: root of `sum c_k / (T - t_k) = 1`.
fn min_latency(terms: &[ClientTerms]) -> f64 {
    let t_max = terms.iter().map(|c| c.compute_latency).fold(0.0, f64::max);
    let c_sum: f64 = terms.iter().map(|c| c.upload).sum();
    let need = |t: f64| terms.iter().map(|c| c.upload / (t - c.compute_latency)).sum::<f64>();
    let (mut lo, mut hi) = (t_max, t_max + c_sum);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if need(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Best split when every client must finish within `t_bound`.
fn split_at(terms: &[ClientTerms], t_bound: f64) -> Vec<f64> {
    let floor: Vec<f64> = terms
        .iter()
        .map(|c| c.upload / (t_bound - c.compute_latency))
        .collect();
    let root: Vec<f64> = terms.iter().map(|c| math::sqrt(c.power * c.upload)).collect();
    // Breakpoints where the energy-optimal share overtakes the latency floor.
    let mut order: Vec<usize> = (0..terms.len()).collect();
    let key = |i: usize| {
        if root[i] > 0.0 {
            floor[i] / root[i]
        } else {
            f64::INFINITY
        }
    };
    order.sort_by(|&i, &j| key(i).total_cmp(&key(j)));
    let mut fixed: f64 = floor.iter().sum();
    let mut free = 0.0;
    for &i in &order {
        let bp = key(i);
        if !bp.is_finite() || bp * free + fixed >= 1.0 {
            break;
        }
        fixed -= floor[i];
        free += root[i];
    }
    let lambda = if free > 0.0 { (1.0 - fixed) / free } else { 0.0 };
    let mut b: Vec<f64> = floor
        .iter()
        .zip(&root)
        .map(|(&l, &r)| l.max(lambda * r))
        .collect();
    let total: f64 = b.iter().sum();
    if total > 1.0 {
        b.iter_mut().for_each(|x| *x /= total);
    }
    b
}

fn check(terms: &[ClientTerms]) -> Result<()> {
    for c in terms {
        if !(c.upload > 0.0) || !c.upload.is_finite() || !(c.compute_latency >= 0.0) || !(c.power >= 0.0) {
            return Err(Error::domain("bandwidth terms must be finite with positive upload time"));
        }
    }
    Ok(())
}

fn bracket(terms: &[ClientTerms]) -> (f64, f64) {
    let lo = min_latency(terms);
    let root_sum: f64 = terms.iter().map(|c| math::sqrt(c.power * c.upload)).sum();
    let hi = if root_sum > 0.0 {
        terms
            .iter()
            .map(|c| {
                let share = math::sqrt(c.power * c.upload) / root_sum;
                if share > 0.0 {
                    c.latency(share)
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    } else {
        lo
    };
    (lo, if hi.is_finite() { hi.max(lo) } else { lo })
}

fn merit(terms: &[ClientTerms], t: f64, a1: f64, a2: f64) -> (f64, Vec<f64>) {
    let b = split_at(terms, t);
    let energy: f64 = terms.iter().zip(&b).map(|(c, &bk)| c.energy(bk)).sum();
    (a1 * t + a2 * energy, b)
}

/// Golden-section search over the latency bound.
pub fn solve_bandwidth(terms: &[ClientTerms], alpha1: f64, alpha2: f64) -> Result<BandwidthSolution> {
    if terms.is_empty() {
        return Ok(BandwidthSolution {
            bandwidth: vec![],
            latency: 0.0,
            objective: 0.0,
        });
    }
    check(terms)?;
    let (lo, hi) = bracket(terms);
    let mut best = merit(terms, lo, alpha1, alpha2);
    let consider = |t: f64, best: &mut (f64, Vec<f64>)| {
        let m = merit(terms, t, alpha1, alpha2);
        if m.0 < best.0 {
            *best = m;
        }
    };
    if hi > lo {
        consider(hi, &mut best);
        let ratio = 0.5 * (math::sqrt(5.0) - 1.0);
        let (mut a, mut b) = (lo, hi);
        let mut x1 = b - ratio * (b - a);
        let mut x2 = a + ratio * (b - a);
        let mut f1 = merit(terms, x1, alpha1, alpha2).0;
        let mut f2 = merit(terms, x2, alpha1, alpha2).0;
        for _ in 0..400 {
            if b - a <= 1e-13 * b {
                break;
            }
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - ratio * (b - a);
                f1 = merit(terms, x1, alpha1, alpha2).0;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + ratio * (b - a);
                f2 = merit(terms, x2, alpha1, alpha2).0;
            }
        }
        consider(0.5 * (a + b), &mut best);
    }
    Ok(evaluate(terms, &best.1, alpha1, alpha2))
}

/// Uniform grid over the latency bound at the given relative resolution.
pub fn solve_bandwidth_grid(
    terms: &[ClientTerms],
    alpha1: f64,
    alpha2: f64,
    resolution: f64,
) -> Result<BandwidthSolution> {
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(Error::domain("grid resolution must lie in (0, 1]"));
    }
    if terms.is_empty() {
        return solve_bandwidth(terms, alpha1, alpha2);
    }
    check(terms)?;
    let (lo, hi) = bracket(terms);
    let steps = math::floor(1.0 / resolution + 0.5) as usize;
    let mut best = merit(terms, lo, alpha1, alpha2);
    for i in 1..=steps {
        let t = lo + (hi - lo) * i as f64 / steps as f64;
        let m = merit(terms, t, alpha1, alpha2);
        if m.0 < best.0 {
            best = m;
        }
    }
    Ok(evaluate(terms, &best.1, alpha1, alpha2))
}
