//! Comparison methods: genetic-algorithm selection, greedy and random
//! resource allocation, loss-based and uniform random selection.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::decision::RoundDecision;
use crate::error::{Error, Result};
use crate::math;
use crate::scenario::Scenario;

/// Which reading of the greedy "maximum marginal gain" rule to apply. The
/// gain `-(a1 a + a2 P) C / (b^2 R)` is negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreedyOrientation {
    /// Grant the quantum where the objective drops the most (largest |gain|).
    LargestDecrease,
    /// Grant the quantum to the largest signed gain, as printed.
    LargestSigned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineParams {
    pub ga_population: usize,
    pub ga_generations: usize,
    pub ga_mutation_rate: f64,
    pub ga_tournament: usize,
    pub ga_elitism: usize,
    /// Penalty factor `M` of the GA fitness.
    pub penalty: f64,
    pub bandwidth_quantum: f64,
    /// Clients picked per round by the loss-based and random selectors.
    pub selection_count: usize,
    /// Pick as many clients as the distribution-aware selection would in the
    /// same round, falling back to `selection_count` when it has no answer.
    pub match_selection_count: bool,
    /// Use the fitness exactly as printed: heterogeneity excess summed per
    /// client and the budget term `sum a d - 1/e2`.
    pub printed_fitness: bool,
    pub greedy_orientation: GreedyOrientation,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            ga_population: 50,
            ga_generations: 200,
            ga_mutation_rate: 0.02,
            ga_tournament: 3,
            ga_elitism: 1,
            penalty: 1e6,
            bandwidth_quantum: 1e-3,
            selection_count: 20,
            match_selection_count: true,
            printed_fitness: false,
            greedy_orientation: GreedyOrientation::LargestDecrease,
        }
    }
}

impl BaselineParams {
    pub fn validate(&self) -> Result<()> {
        if self.ga_population < 2 {
            return Err(Error::config("ga_population", "must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.ga_mutation_rate) {
            return Err(Error::config("ga_mutation_rate", "must lie in [0, 1]"));
        }
        if self.ga_tournament == 0 {
            return Err(Error::config("ga_tournament", "must be at least 1"));
        }
        if self.ga_elitism > self.ga_population {
            return Err(Error::config("ga_elitism", "cannot exceed the population"));
        }
        if !(self.penalty > 0.0) {
            return Err(Error::config("penalty", "must be > 0"));
        }
        if !(self.bandwidth_quantum > 0.0 && self.bandwidth_quantum <= 1.0) {
            return Err(Error::config("bandwidth_quantum", "must lie in (0, 1]"));
        }
        if self.selection_count == 0 {
            return Err(Error::config("selection_count", "must be at least 1"));
        }
        Ok(())
    }
}

/// Bandwidth fractions and CPU frequencies for every client.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub bandwidth: Vec<f64>,
    pub frequency: Vec<f64>,
}

impl Allocation {
    /// Packs the allocation into a decision whose epigraph value is the
    /// weighted round latency it achieves.
    pub fn into_decision(self, selection: &[bool], scenario: &Scenario, t: usize) -> Result<RoundDecision> {
        let cfg = scenario.config();
        let mut d = RoundDecision::empty(selection.len());
        let mut latency = 0.0f64;
        for (k, &s) in selection.iter().enumerate() {
            if !s {
                continue;
            }
            d.select(k, self.bandwidth[k], self.frequency[k]);
            let p = scenario.client(k);
            let rate = scenario.rate(k, t, self.bandwidth[k].min(1.0))?;
            let e = f64::from(cfg.local_epochs);
            latency = latency.max(p.model_bits / rate + e * p.cycles_per_bit * p.dataset_size as f64 / self.frequency[k]);
        }
        d.epigraph = cfg.alpha1 * latency;
        Ok(d)
    }
}

/// GA fitness `M (c1^2 + c2^2)`.
pub fn ga_fitness(
    selection: &[bool],
    divergences: &[f64],
    sizes: &[f64],
    kl_threshold: f64,
    data_budget: f64,
    params: &BaselineParams,
) -> f64 {
    let mut kl = 0.0;
    let mut data = 0.0;
    for ((&a, &d), &n) in selection.iter().zip(divergences).zip(sizes) {
        if a {
            kl += d;
            data += n;
        }
    }
    let (c1, c2) = if params.printed_fitness {
        let k = selection.len() as f64;
        let c2 = if data_budget > 0.0 { data - 1.0 / data_budget } else { f64::INFINITY };
        ((kl - k * kl_threshold).max(0.0), c2.max(0.0))
    } else {
        ((kl - kl_threshold).max(0.0), (data_budget - data).max(0.0))
    };
    params.penalty * (c1 * c1 + c2 * c2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaResult {
    pub selection: Vec<bool>,
    pub fitness: f64,
    /// Best fitness after each generation.
    pub history: Vec<f64>,
}

/// Genetic search over selection bit strings with tournament selection,
/// uniform crossover, bit-flip mutation and elitism.
pub fn ga_select<R: Rng + ?Sized>(
    divergences: &[f64],
    sizes: &[f64],
    kl_threshold: f64,
    data_budget: f64,
    params: &BaselineParams,
    rng: &mut R,
) -> Result<GaResult> {
    params.validate()?;
    let k = divergences.len();
    if sizes.len() != k {
        return Err(Error::shape("divergences and sizes differ in length"));
    }
    let fit = |c: &[bool]| ga_fitness(c, divergences, sizes, kl_threshold, data_budget, params);
    let mut pop: Vec<Vec<bool>> = (0..params.ga_population)
        .map(|_| (0..k).map(|_| rng.random_bool(0.5)).collect())
        .collect();
    let mut scores: Vec<f64> = pop.iter().map(|c| fit(c)).collect();
    let best_of = |scores: &[f64]| {
        (0..scores.len())
            .min_by(|&i, &j| scores[i].total_cmp(&scores[j]).then(i.cmp(&j)))
            .expect("population is nonempty")
    };
    let b = best_of(&scores);
    let mut best = (pop[b].clone(), scores[b]);
    let mut history = Vec::with_capacity(params.ga_generations);
    for _ in 0..params.ga_generations {
        if best.1 == 0.0 {
            break;
        }
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]).then(i.cmp(&j)));
        let mut next: Vec<Vec<bool>> = order[..params.ga_elitism].iter().map(|&i| pop[i].clone()).collect();
        let tournament = |rng: &mut R| {
            (0..params.ga_tournament)
                .map(|_| rng.random_range(0..pop.len()))
                .min_by(|&i, &j| scores[i].total_cmp(&scores[j]).then(i.cmp(&j)))
                .expect("tournament size >= 1")
        };
        while next.len() < params.ga_population {
            let (p1, p2) = (tournament(rng), tournament(rng));
            let child: Vec<bool> = (0..k)
                .map(|g| {
                    let bit = if rng.random_bool(0.5) { pop[p1][g] } else { pop[p2][g] };
                    bit ^ rng.random_bool(params.ga_mutation_rate)
                })
                .collect();
            next.push(child);
        }
        pop = next;
        scores = pop.iter().map(|c| fit(c)).collect();
        let b = best_of(&scores);
        if scores[b] < best.1 {
            best = (pop[b].clone(), scores[b]);
        }
        history.push(best.1);
    }
    Ok(GaResult {
        selection: best.0,
        fitness: best.1,
        history,
    })
}

fn selected_clients(selection: &[bool], scenario: &Scenario) -> Result<Vec<usize>> {
    if selection.len() != scenario.num_clients() {
        return Err(Error::shape(format!(
            "selection covers {} clients, scenario has {}",
            selection.len(),
            scenario.num_clients()
        )));
    }
    let s: Vec<usize> = (0..selection.len()).filter(|&k| selection[k]).collect();
    if s.is_empty() {
        return Err(Error::domain("allocation needs at least one selected client"));
    }
    Ok(s)
}

/// CPU frequency of the greedy rule, `(a1 / (2 a2 d eps s E))^(1/3)` capped.
fn greedy_frequency(scenario: &Scenario, k: usize) -> f64 {
    let cfg = scenario.config();
    let p = scenario.client(k);
    let denom = 2.0 * cfg.alpha2 * p.dataset_size as f64 * cfg.capacitance * p.cycles_per_bit * f64::from(cfg.local_epochs);
    let f = if denom > 0.0 { math::cbrt(cfg.alpha1 / denom) } else { f64::INFINITY };
    f.min(p.max_frequency).max(0.0)
}

/// Hands out bandwidth one quantum at a time by marginal gain.
pub fn greedy_allocate(
    selection: &[bool],
    scenario: &Scenario,
    t: usize,
    quantum: f64,
    orientation: GreedyOrientation,
) -> Result<Allocation> {
    let s = selected_clients(selection, scenario)?;
    if !(quantum > 0.0 && quantum <= 1.0) {
        return Err(Error::domain("bandwidth quantum must lie in (0, 1]"));
    }
    let quanta = math::floor(1.0 / quantum + 1e-9) as usize;
    if quanta < s.len() {
        return Err(Error::infeasible(
            crate::error::Constraint::Bandwidth,
            format!("{quanta} quanta for {} selected clients", s.len()),
        ));
    }
    let cfg = scenario.config();
    // Gain per client is weight / b^2 in magnitude.
    let weight: Vec<f64> = s
        .iter()
        .map(|&k| {
            let p = scenario.client(k);
            (cfg.alpha1 + cfg.alpha2 * p.transmit_power) * p.model_bits / scenario.full_band_rate(k, t)
        })
        .collect();
    let mut units = vec![1usize; s.len()];
    for _ in s.len()..quanta {
        let gain = |i: usize| {
            let b = units[i] as f64 * quantum;
            -weight[i] / (b * b)
        };
        let pick = match orientation {
            GreedyOrientation::LargestDecrease => (0..s.len()).min_by(|&i, &j| gain(i).total_cmp(&gain(j)).then(i.cmp(&j))),
            GreedyOrientation::LargestSigned => (0..s.len()).max_by(|&i, &j| gain(i).total_cmp(&gain(j)).then(j.cmp(&i))),
        };
        units[pick.expect("nonempty selection")] += 1;
    }
    let mut alloc = Allocation {
        bandwidth: vec![0.0; selection.len()],
        frequency: vec![0.0; selection.len()],
    };
    for (i, &k) in s.iter().enumerate() {
        alloc.bandwidth[k] = units[i] as f64 * quantum;
        alloc.frequency[k] = greedy_frequency(scenario, k);
    }
    Ok(alloc)
}

/// Uniform point on the bandwidth simplex and uniform frequencies on
/// `(0, f_max]`.
pub fn random_allocate<R: Rng + ?Sized>(selection: &[bool], scenario: &Scenario, rng: &mut R) -> Result<Allocation> {
    let s = selected_clients(selection, scenario)?;
    let draws: Vec<f64> = s.iter().map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    let mut alloc = Allocation {
        bandwidth: vec![0.0; selection.len()],
        frequency: vec![0.0; selection.len()],
    };
    for (i, &k) in s.iter().enumerate() {
        alloc.bandwidth[k] = if s.len() == 1 { 1.0 } else { draws[i] / total };
        let u: f64 = rng.random();
        alloc.frequency[k] = scenario.client(k).max_frequency * (1.0 - u);
    }
    Ok(alloc)
}

/// The `m` clients with the largest losses; ties go to lower indices.
pub fn pow_select(losses: &[f64], m: usize) -> Result<Vec<bool>> {
    if m > losses.len() {
        return Err(Error::domain(format!("cannot pick {m} of {} clients", losses.len())));
    }
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&i, &j| losses[j].total_cmp(&losses[i]).then(i.cmp(&j)));
    let mut sel = vec![false; losses.len()];
    for &k in &order[..m] {
        sel[k] = true;
    }
    Ok(sel)
}

/// Uniform `m`-subset of `0..k` without replacement.
pub fn random_select<R: Rng + ?Sized>(k: usize, m: usize, rng: &mut R) -> Result<Vec<bool>> {
    if m > k {
        return Err(Error::domain(format!("cannot pick {m} of {k} clients")));
    }
    let mut sel = vec![false; k];
    for i in index::sample(rng, k, m) {
        sel[i] = true;
    }
    Ok(sel)
}
