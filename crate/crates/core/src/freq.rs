//! CPU frequency allocation for selected clients.
//!
//! With selection, bandwidth and the epigraph value fixed, each client
//! minimizes its computation energy subject to `f <= f_max` and its weighted
//! latency staying below the epigraph value. The Lagrangian stationary point
//! solves `2 a2 d eps s E f^3 + gamma f^2 - E beta a1 s d = 0`; multipliers
//! follow projected subgradient ascent.

use alloc::format;
use alloc::vec::Vec;

use crate::decision::RoundDecision;
use crate::error::{Error, Result};
use crate::math;
use crate::scenario::Scenario;

/// Physical constants entering the stationarity cubic of one client.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicTerms {
    pub alpha1: f64,
    pub alpha2: f64,
    pub data: f64,
    pub capacitance: f64,
    pub cycles_per_bit: f64,
    pub epochs: f64,
}

impl CubicTerms {
    /// `(c3, c2, c0)` of `c3 f^3 + c2 f^2 + c0` for multipliers `(gamma, beta)`.
    pub fn coefficients(&self, gamma: f64, beta: f64) -> (f64, f64, f64) {
        let c3 = 2.0 * self.alpha2 * self.data * self.capacitance * self.cycles_per_bit * self.epochs;
        let c0 = -(self.epochs * beta * self.alpha1 * self.cycles_per_bit * self.data);
        (c3, gamma, c0)
    }
}

/// Unique nonnegative root of the stationarity cubic.
///
/// Substituting `w = 1/f` gives the depressed cubic `k w^3 - gamma w - c3 = 0`
/// with `k = E beta a1 s d`. Its discriminant picks the branch: one real root
/// (Cardano, written so both radicals are positive) or three real roots
/// (trigonometric form, largest root).
pub fn optimal_frequency(gamma: f64, beta: f64, t: &CubicTerms) -> Result<f64> {
    let positive = [
        ("alpha2", t.alpha2),
        ("data", t.data),
        ("capacitance", t.capacitance),
        ("cycles_per_bit", t.cycles_per_bit),
        ("epochs", t.epochs),
    ];
    for (name, v) in positive {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::domain(format!("{name} must be finite and > 0, got {v}")));
        }
    }
    if !(gamma >= 0.0) || !(beta >= 0.0) || !(t.alpha1 >= 0.0) {
        return Err(Error::domain("multipliers and alpha1 must be >= 0"));
    }
    let (c3, _, c0) = t.coefficients(gamma, beta);
    let k = -c0;
    if k == 0.0 {
        return if gamma > 0.0 {
            Ok(0.0)
        } else {
            Err(Error::Degenerate("both multipliers are zero"))
        };
    }
    if gamma == 0.0 {
        return Ok(math::cbrt(k / c3));
    }
    let half = c3 / (2.0 * k);
    let third = gamma / (3.0 * k);
    let disc = half * half - third * third * third;
    let w = if disc > 0.0 {
        let u = math::cbrt(half + math::sqrt(disc));
        u + third / u
    } else {
        let r = math::sqrt(third);
        let arg = (half / (third * r)).clamp(-1.0, 1.0);
        2.0 * r * math::cos(math::acos(arg) / 3.0)
    };
    Ok(1.0 / w)
}

/// Positive root of `c3 x^3 + c2 x^2 + c1 x + c0` by bracketed Newton.
///
/// Expects `c3 > 0`, `c0 <= 0` and a single sign change on `(0, inf)`;
/// returns 0 when `c0 == 0`. Iterates until the bracket is narrower than
/// `1e-12 * min(1, x)` or cannot shrink further in floating point.
pub fn numeric_cubic_root(c3: f64, c2: f64, c1: f64, c0: f64) -> f64 {
    if c0 >= 0.0 {
        return 0.0;
    }
    let p = |x: f64| ((c3 * x + c2) * x + c1) * x + c0;
    let dp = |x: f64| (3.0 * c3 * x + 2.0 * c2) * x + c1;
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while p(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..4000 {
        let v = p(x);
        if v == 0.0 {
            return x;
        }
        if v < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 1e-12 * hi.min(1.0) {
            break;
        }
        let slope = dp(x);
        let newton = x - v / slope;
        let mid = 0.5 * (lo + hi);
        x = if slope > 0.0 && newton > lo && newton < hi { newton } else { mid };
        if x <= lo || x >= hi {
            // No representable point strictly inside the bracket.
            break;
        }
    }
    if math::abs(p(lo)) <= math::abs(p(hi)) {
        lo
    } else {
        hi
    }
}

/// Step-size and stopping settings of the dual loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualParams {
    pub max_iters: usize,
    /// `s0` in the diminishing step `s0 / sqrt(iter + 1)`, in normalized
    /// multiplier units.
    pub step_scale: f64,
    /// Normalized residual counted as converged.
    pub tolerance: f64,
    /// Starting epigraph multiplier in normalized units.
    pub initial_beta: f64,
    /// Starting frequency-cap multiplier in normalized units.
    pub initial_gamma: f64,
}

impl Default for DualParams {
    fn default() -> Self {
        DualParams {
            max_iters: 500,
            step_scale: 1.0,
            tolerance: 1e-4,
            initial_beta: 1.0,
            initial_gamma: 0.0,
        }
    }
}

impl DualParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_scale > 0.0) || !self.step_scale.is_finite() {
            return Err(Error::config("dual_step_scale", "must be finite and > 0"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::config("dual_tolerance", "must be > 0"));
        }
        if !(self.initial_beta > 0.0) || !(self.initial_gamma >= 0.0) {
            return Err(Error::config(
                "dual_initial_beta",
                "initial beta must be > 0 and initial gamma >= 0",
            ));
        }
        Ok(())
    }
}

/// Multipliers per selected client, in physical units.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DualState {
    pub clients: Vec<usize>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    /// Per-client scales mapping normalized multipliers to physical ones.
    pub gamma_scale: Vec<f64>,
    pub beta_scale: Vec<f64>,
    /// Step used in the last update.
    pub step: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyAllocation {
    /// Frequency for every client (0 for unselected ones).
    pub frequency: Vec<f64>,
    pub state: DualState,
    pub converged: bool,
    /// Largest normalized constraint violation at the final multipliers.
    pub max_residual: f64,
    /// Largest normalized complementary-slackness product.
    pub complementary_slackness: f64,
    /// Primal allocation had to be projected onto the feasible interval.
    pub recovered: bool,
    /// `sum_k a2 * comp_energy_k` at the returned frequencies.
    pub primal_energy: f64,
    /// Lagrange dual function at the final multipliers, same constant terms
    /// as `primal_energy` (upload terms excluded).
    pub dual_value: f64,
}

struct Client {
    index: usize,
    terms: CubicTerms,
    f_max: f64,
    /// Weighted upload latency `a1 * C / (b R)`.
    upload: f64,
    /// `a1 * E s d`, so the weighted compute latency is `work / f`.
    work: f64,
}

impl Client {
    fn energy(&self, f: f64) -> f64 {
        let t = &self.terms;
        t.alpha2 * t.data * t.capacitance * t.cycles_per_bit * f * f * t.epochs
    }

    /// Weighted latency budget left for computing.
    fn budget(&self, upsilon: f64) -> f64 {
        upsilon - self.upload
    }

    fn latency_residual(&self, f: f64, upsilon: f64) -> f64 {
        let denom = if self.budget(upsilon) > 0.0 { self.budget(upsilon) } else { upsilon };
        if f > 0.0 {
            (self.upload + self.work / f - upsilon) / denom
        } else {
            f64::INFINITY
        }
    }
}

fn collect_clients(decision: &RoundDecision, scenario: &Scenario, t: usize) -> Result<Vec<Client>> {
    let cfg = scenario.config();
    let e = f64::from(cfg.local_epochs);
    let mut out = Vec::new();
    for k in decision.selected() {
        let p = scenario.client(k);
        let b = decision.bandwidth[k];
        if !(b > 0.0) {
            return Err(Error::InfeasibleDecision {
                client: k,
                reason: "selected client has zero bandwidth",
            });
        }
        let rate = scenario.rate(k, t, b.min(1.0))?;
        if !(rate > 0.0) {
            return Err(Error::InfeasibleDecision {
                client: k,
                reason: "selected client has zero uplink rate",
            });
        }
        let d = p.dataset_size as f64;
        out.push(Client {
            index: k,
            terms: CubicTerms {
                alpha1: cfg.alpha1,
                alpha2: cfg.alpha2,
                data: d,
                capacitance: cfg.capacitance,
                cycles_per_bit: p.cycles_per_bit,
                epochs: e,
            },
            f_max: p.max_frequency,
            upload: cfg.alpha1 * p.model_bits / rate,
            work: cfg.alpha1 * e * p.cycles_per_bit * d,
        });
    }
    Ok(out)
}

/// Projected dual subgradient ascent on the per-client frequency problem.
///
/// Multipliers are normalized per client: the frequency-cap multiplier by the
/// energy derivative at `f_max`, the epigraph multiplier by the price that
/// makes the latency constraint tight. The epigraph residual includes the
/// upload latency.
pub fn dual_subgradient_allocate(
    decision: &RoundDecision,
    scenario: &Scenario,
    t: usize,
    upsilon: f64,
    params: &DualParams,
) -> Result<FrequencyAllocation> {
    params.validate()?;
    let clients = collect_clients(decision, scenario, t)?;
    let n = clients.len();
    let mut frequency = alloc::vec![0.0; decision.len()];
    let mut state = DualState {
        clients: clients.iter().map(|c| c.index).collect(),
        ..DualState::default()
    };
    let cfg = scenario.config();

    if cfg.alpha2 == 0.0 || cfg.alpha1 == 0.0 {
        // No energy price: any feasible frequency is optimal, run flat out.
        // No latency price: the epigraph value carries no weight either.
        for c in &clients {
            frequency[c.index] = c.f_max;
        }
        let max_residual = clients
            .iter()
            .map(|c| c.latency_residual(c.f_max, upsilon).max(0.0))
            .fold(0.0, f64::max);
        let primal: f64 = clients.iter().map(|c| c.energy(frequency[c.index])).sum();
        state.gamma = alloc::vec![0.0; n];
        state.beta = alloc::vec![0.0; n];
        state.gamma_scale = alloc::vec![1.0; n];
        state.beta_scale = alloc::vec![1.0; n];
        return Ok(FrequencyAllocation {
            frequency,
            state,
            converged: max_residual <= params.tolerance,
            max_residual,
            complementary_slackness: 0.0,
            recovered: false,
            primal_energy: primal,
            dual_value: primal,
        });
    }

    if !(upsilon > 0.0) || !upsilon.is_finite() {
        return Err(Error::domain(format!("epigraph value must be finite and > 0, got {upsilon}")));
    }
    let mut gamma_n = alloc::vec![params.initial_gamma; n];
    let mut beta_n = alloc::vec![params.initial_beta; n];
    let mut gamma_scale = Vec::with_capacity(n);
    let mut beta_scale = Vec::with_capacity(n);
    for c in &clients {
        let tm = &c.terms;
        let f_req = if c.budget(upsilon) > 0.0 { c.work / c.budget(upsilon) } else { c.f_max };
        let f_ref = f_req.min(c.f_max);
        // Energy derivative at f_max, and the beta at which the stationary
        // point (gamma = 0) sits at f_ref.
        let (c3, _, _) = tm.coefficients(0.0, 0.0);
        gamma_scale.push(c3 * c.f_max);
        beta_scale.push(c3 * f_ref * f_ref * f_ref / (tm.epochs * tm.alpha1 * tm.cycles_per_bit * tm.data));
    }

    let stationary = |i: usize, g: f64, b: f64| -> Result<f64> {
        optimal_frequency(g * gamma_scale[i], b * beta_scale[i], &clients[i].terms)
    };

    let mut step = params.step_scale;
    let mut iterations = 0;
    for it in 0..params.max_iters {
        step = params.step_scale / math::sqrt(it as f64 + 1.0);
        let mut worst = 0.0f64;
        for i in 0..n {
            let c = &clients[i];
            let f = stationary(i, gamma_n[i], beta_n[i])?;
            let g_gamma = (f - c.f_max) / c.f_max;
            let g_beta = c.latency_residual(f, upsilon).min(1e6);
            worst = worst.max(g_gamma.max(0.0)).max(g_beta.max(0.0));
            worst = worst.max(gamma_n[i] * math::abs(g_gamma)).max(beta_n[i] * math::abs(g_beta));
            gamma_n[i] = (gamma_n[i] + step * g_gamma).max(0.0);
            beta_n[i] = (beta_n[i] + step * g_beta).max(0.0);
        }
        iterations = it + 1;
        if worst <= params.tolerance * 0.1 {
            break;
        }
    }

    // Primal response at the final multipliers.
    let mut cs = 0.0f64;
    let mut recovered = false;
    let mut primal = 0.0;
    let mut dual = 0.0;
    for i in 0..n {
        let c = &clients[i];
        let fs = if beta_n[i] > 0.0 {
            stationary(i, gamma_n[i], beta_n[i])?
        } else {
            0.0
        };
        let (gam, bet) = (gamma_n[i] * gamma_scale[i], beta_n[i] * beta_scale[i]);
        dual += c.energy(fs)
            + gam * (fs - c.f_max)
            + if fs > 0.0 { bet * (c.upload + c.work / fs - upsilon) } else { 0.0 };

        let mut f = fs.clamp(0.0, c.f_max);
        let res = c.latency_residual(f, upsilon);
        if res > params.tolerance {
            let f_req = if c.budget(upsilon) > 0.0 { c.work / c.budget(upsilon) } else { c.f_max };
            let fixed = f_req.min(c.f_max).max(f);
            if fixed != f {
                recovered = true;
                f = fixed;
            }
        }
        cs = cs
            .max(gamma_n[i] * math::abs((f - c.f_max) / c.f_max))
            .max(beta_n[i] * math::abs(c.latency_residual(f, upsilon)));
        frequency[c.index] = f;
        primal += c.energy(f);
    }
    // Clipping settles the cap; report what the returned frequencies achieve.
    let final_residual = clients
        .iter()
        .map(|c| c.latency_residual(frequency[c.index], upsilon).max(0.0))
        .fold(0.0, f64::max);
    state.gamma = gamma_n.iter().zip(&gamma_scale).map(|(g, s)| g * s).collect();
    state.beta = beta_n.iter().zip(&beta_scale).map(|(b, s)| b * s).collect();
    state.gamma_scale = gamma_scale;
    state.beta_scale = beta_scale;
    state.step = step;
    state.iterations = iterations;
    Ok(FrequencyAllocation {
        frequency,
        state,
        converged: final_residual <= params.tolerance && cs <= params.tolerance && !recovered,
        max_residual: final_residual,
        complementary_slackness: cs,
        recovered,
        primal_energy: primal,
        dual_value: dual,
    })
}
