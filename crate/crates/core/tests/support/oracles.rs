use csra_core::csra::RoundProblem;
use csra_core::fl::{Dataset, ModelParams};
use csra_core::genbound::BoundParams;
use csra_core::RoundDecision;
use csra_core::scenario::Scenario;

pub fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Positive root of `c3 x^3 + c2 x^2 + c1 x + c0` by plain bisection, for
/// `c3 > 0`, `c0 <= 0`.
pub fn bisect_cubic(c3: f64, c2: f64, c1: f64, c0: f64) -> f64 {
    let p = |x: f64| ((c3 * x + c2) * x + c1) * x + c0;
    if p(0.0) >= 0.0 {
        return 0.0;
    }
    let mut hi = 1.0;
    while p(hi) < 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if p(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Bound total written out directly from its five terms.
pub fn bound_total(p: &BoundParams) -> f64 {
    let e = p.epochs as f64;
    let mut drift = 0.0;
    for t in 0..p.round {
        let eta = p.learning_rates[t];
        drift += 4.0 * (e - 1.0)
            * (2.0 * eta.powi(2) * p.smoothness * p.lipschitz / e * p.optimality_gaps[t]
                + eta.powi(2) * p.grad_variance * p.lipschitz / e.powi(2));
    }
    let d: f64 = p.client_sizes.iter().sum();
    let sigma = p.client_sizes.iter().map(|x| x.sqrt()).sum::<f64>() / d;
    let c = p.loss_bound;
    let second = (c.powi(2) * (4.0 / p.confidence).ln() / 2.0).sqrt() * sigma;
    let third: f64 = p.kl_terms.iter().sum();
    let fourth = c.powi(2) / (8.0 * d);
    let fifth = (2.0 * p.stability + c / d) * (d * (2.0 / p.confidence).ln()).sqrt();
    drift + second + third + fourth + fifth
}

/// Minimum computing energy of the frequency problem for a fixed selection
/// and bandwidth: each client's smallest feasible frequency, found by
/// bisection on its latency constraint. `None` if some client cannot meet
/// `upsilon` even at its maximum frequency.
pub fn min_frequency_energy(decision: &RoundDecision, scenario: &Scenario, t: usize, upsilon: f64) -> Option<(f64, Vec<f64>)> {
    let cfg = scenario.config();
    let e = cfg.local_epochs as f64;
    let mut total = 0.0;
    let mut freqs = vec![0.0; decision.len()];
    for k in decision.selected() {
        let p = scenario.client(k);
        let d = p.dataset_size as f64;
        let rate = scenario.rate(k, t, decision.bandwidth[k]).unwrap();
        let lat = |f: f64| cfg.alpha1 * (p.model_bits / rate + e * p.cycles_per_bit * d / f);
        if lat(p.max_frequency) > upsilon * (1.0 + 1e-12) {
            return None;
        }
        let (mut lo, mut hi) = (0.0, p.max_frequency);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if lat(mid) > upsilon {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        freqs[k] = hi;
        total += cfg.alpha2 * e * cfg.capacitance * p.cycles_per_bit * d * hi * hi;
    }
    Some((total, freqs))
}

/// Cheapest utility over every nonempty selection of the problem's
/// clients that meets the data budget, each with bandwidth from a fine grid
/// search and frequencies at their maximum.
pub fn enumerate_at_max_frequency(problem: &RoundProblem) -> f64 {
    let n = problem.len();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << n) {
        let m: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let data: f64 = m.iter().map(|&i| problem.clients[i].data).sum();
        if data < problem.data_budget {
            continue;
        }
        let terms: Vec<_> = m.iter().map(|&i| problem.clients[i]).collect();
        let sol = csra_core::csra::solve_bandwidth_grid(&terms, problem.alpha1, problem.alpha2, 1e-4).unwrap();
        best = best.min(sol.objective);
    }
    best
}

/// Mean cross-entropy of a flat softmax model, written without the crate's
/// helpers.
pub fn softmax_loss(values: &[f64], dim: usize, classes: usize, data: &Dataset, idx: &[usize]) -> f64 {
    let mut total = 0.0;
    for &i in idx {
        let x = data.x(i);
        let z: Vec<f64> = (0..classes)
            .map(|c| values[classes * dim + c] + (0..dim).map(|j| values[c * dim + j] * x[j]).sum::<f64>())
            .collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - z[data.label(i)];
    }
    total / idx.len() as f64
}

/// Central finite-difference gradient of the mean loss.
pub fn finite_difference_gradient(model: &ModelParams, data: &Dataset, idx: &[usize], h: f64) -> Vec<f64> {
    let (dim, classes) = (model.dim(), model.classes());
    let base = model.as_slice().to_vec();
    (0..base.len())
        .map(|j| {
            let mut up = base.clone();
            let mut dn = base.clone();
            up[j] += h;
            dn[j] -= h;
            (softmax_loss(&up, dim, classes, data, idx) - softmax_loss(&dn, dim, classes, data, idx)) / (2.0 * h)
        })
        .collect()
}
