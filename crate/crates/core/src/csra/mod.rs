//! Joint client selection and bandwidth allocation.
//!
//! The round problem is put in epigraph form, the reciprocal bandwidth
//! `z = 1/b` and the product `u = a z` are introduced with McCormick
//! envelopes, and integrality is moved into the objective as the penalty
//! `rho * sum(a - a^2)`. The penalized problem is a difference of convex
//! functions; [`solve_dc`] linearizes the concave part and solves each convex
//! subproblem with a log-barrier interior point method. [`round_and_repair`]
//! turns the relaxed point into a binary decision.

use alloc::format;
use alloc::vec::Vec;

use crate::decision::RoundDecision;
use crate::error::{Error, Result};
use crate::freq::{dual_subgradient_allocate, DualParams, FrequencyAllocation};
use crate::heterogeneity::kl_filter;
use crate::scenario::Scenario;
use crate::wireless::{round_cost, CostReport};

mod bandwidth;
mod barrier;
mod dc;
mod feasibility;
mod oracle;
mod rounding;

pub use bandwidth::{solve_bandwidth, solve_bandwidth_grid, BandwidthSolution};
pub use barrier::{solve_subproblem, RelaxedPoint, Subproblem, SubproblemSolution};
pub use dc::{penalized_objective, rlt_gap, solve_dc, DcState, DcStep};
pub use feasibility::{verify_feasibility, ConstraintCheck, FeasibilityReport, FEASIBILITY_TOLERANCE};
pub use oracle::{brute_force_oracle, BandwidthMethod, OracleResult, DEFAULT_ORACLE_LIMIT};
pub use rounding::{round_and_repair, RepairReport};

/// Per-client constants of one round at fixed CPU frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientTerms {
    /// Client index in the scenario.
    pub index: usize,
    /// Upload latency `C / R` when holding the whole band, in seconds.
    pub upload: f64,
    /// Transmit power in W; the upload energy is `power * upload / b`.
    pub power: f64,
    /// Computation latency `E s d / f`.
    pub compute_latency: f64,
    /// Computation energy `eps s d f^2 E`.
    pub compute_energy: f64,
    pub frequency: f64,
    pub data: f64,
}

impl ClientTerms {
    /// Latency with bandwidth fraction `b`.
    pub fn latency(&self, b: f64) -> f64 {
        self.upload / b + self.compute_latency
    }

    /// Energy with bandwidth fraction `b`.
    pub fn energy(&self, b: f64) -> f64 {
        self.power * self.upload / b + self.compute_energy
    }
}

/// One round of the selection problem restricted to the eligible clients.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundProblem {
    pub clients: Vec<ClientTerms>,
    pub alpha1: f64,
    pub alpha2: f64,
    pub data_budget: f64,
    pub num_clients: usize,
    pub round: usize,
}

impl RoundProblem {
    /// Builds the problem for `eligible` clients with frequencies taken from
    /// `frequency` (indexed by client).
    pub fn new(scenario: &Scenario, t: usize, eligible: &[usize], frequency: &[f64]) -> Result<Self> {
        let cfg = scenario.config();
        let e = f64::from(cfg.local_epochs);
        if frequency.len() != scenario.num_clients() {
            return Err(Error::shape("frequency vector must cover every client"));
        }
        let mut clients = Vec::with_capacity(eligible.len());
        for &k in eligible {
            if k >= scenario.num_clients() {
                return Err(Error::shape(format!("eligible client {k} out of range")));
            }
            let p = scenario.client(k);
            let f = frequency[k];
            if !(f > 0.0) {
                return Err(Error::InfeasibleDecision {
                    client: k,
                    reason: "eligible client needs a positive CPU frequency",
                });
            }
            let rate = scenario.full_band_rate(k, t);
            if !(rate > 0.0) {
                return Err(Error::InfeasibleDecision {
                    client: k,
                    reason: "eligible client has zero uplink rate",
                });
            }
            let work = e * p.cycles_per_bit * p.dataset_size as f64;
            clients.push(ClientTerms {
                index: k,
                upload: p.model_bits / rate,
                power: p.transmit_power,
                compute_latency: work / f,
                compute_energy: cfg.capacitance * work * f * f,
                frequency: f,
                data: p.dataset_size as f64,
            });
        }
        Ok(RoundProblem {
            clients,
            alpha1: cfg.alpha1,
            alpha2: cfg.alpha2,
            data_budget: cfg.data_budget,
            num_clients: scenario.num_clients(),
            round: t,
        })
    }

    /// Every eligible client runs at its maximum frequency.
    pub fn at_max_frequency(scenario: &Scenario, t: usize, eligible: &[usize]) -> Result<Self> {
        let f: Vec<f64> = scenario.clients().iter().map(|c| c.max_frequency).collect();
        Self::new(scenario, t, eligible, &f)
    }

    pub fn len(&self) -> usize {
        self.clients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }

    pub fn total_data(&self) -> f64 {
        self.clients.iter().map(|c| c.data).sum()
    }

    /// Utility of selecting `members` (positions into `clients`) with their
    /// bandwidth fractions `b`.
    pub fn utility(&self, members: &[usize], b: &[f64]) -> f64 {
        let mut latency = 0.0f64;
        let mut energy = 0.0;
        for (&i, &bi) in members.iter().zip(b) {
            let c = &self.clients[i];
            latency = latency.max(c.latency(bi));
            energy += c.energy(bi);
        }
        self.alpha1 * latency + self.alpha2 * energy
    }

    /// Utility of `members` with bandwidth `b` after every client slows its CPU
    /// to finish exactly at the round latency (capped at the frequency used in
    /// this problem). This is what frequency allocation attains afterwards.
    pub fn utility_after_frequency(&self, members: &[usize], b: &[f64]) -> f64 {
        let latency = members
            .iter()
            .zip(b)
            .map(|(&i, &bi)| self.clients[i].latency(bi))
            .fold(0.0, f64::max);
        let mut energy = 0.0;
        for (&i, &bi) in members.iter().zip(b) {
            let c = &self.clients[i];
            let spare = latency - c.upload / bi;
            // Compute energy scales with f^2, i.e. with the inverse square of
            // the computation time.
            let ratio = if spare > c.compute_latency { c.compute_latency / spare } else { 1.0 };
            energy += c.power * c.upload / bi + c.compute_energy * ratio * ratio;
        }
        self.alpha1 * latency + self.alpha2 * energy
    }

    /// Exact bandwidth allocation and its utility for `members`.
    pub fn subset_cost(&self, members: &[usize]) -> Result<BandwidthSolution> {
        let terms: Vec<ClientTerms> = members.iter().map(|&i| self.clients[i]).collect();
        solve_bandwidth(&terms, self.alpha1, self.alpha2)
    }
}

/// Optimizer settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    /// Initial penalty weight; `None` derives it from the objective scale.
    pub rho: Option<f64>,
    /// Initial penalty as a multiple of the objective at the start point.
    pub rho_init_factor: f64,
    pub rho_growth: f64,
    /// Consecutive iterations without a tenfold drop of the integrality
    /// residual before the penalty grows.
    pub rho_patience: usize,
    pub b_min: f64,
    pub dc_max_iters: usize,
    /// Relative objective improvement below which the iteration stops.
    pub dc_tolerance: f64,
    /// Duality-gap target of each convex subproblem, relative to the
    /// objective scale.
    pub subproblem_tolerance: f64,
    pub rounding_threshold: f64,
    /// Per-client `a - a^2` counted as integral.
    pub integrality_tolerance: f64,
    /// Drop/add/swap search on the rounded selection.
    pub local_refinement: bool,
    /// Force-select large clients when rounding breaks the data budget.
    pub budget_retry: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            rho: None,
            rho_init_factor: 1e-2,
            rho_growth: 2.0,
            rho_patience: 1,
            b_min: 1e-4,
            dc_max_iters: 50,
            dc_tolerance: 1e-6,
            subproblem_tolerance: 1e-8,
            rounding_threshold: 0.5,
            integrality_tolerance: 1e-6,
            local_refinement: true,
            budget_retry: true,
        }
    }
}

impl SolverParams {
    pub fn validate(&self, eligible: usize) -> Result<()> {
        if let Some(rho) = self.rho {
            if !(rho > 0.0) || !rho.is_finite() {
                return Err(Error::config("rho", "must be finite and > 0"));
            }
        }
        if !(self.rho_init_factor > 0.0) {
            return Err(Error::config("rho_init_factor", "must be > 0"));
        }
        if !(self.rho_growth >= 1.0) {
            return Err(Error::config("rho_growth", "must be >= 1"));
        }
        if !(self.b_min > 0.0) || self.b_min * eligible.max(1) as f64 >= 1.0 {
            return Err(Error::config(
                "b_min",
                format!("must satisfy 0 < b_min < 1/{}", eligible.max(1)),
            ));
        }
        if !(self.dc_tolerance > 0.0) || !(self.subproblem_tolerance > 0.0) || !(self.integrality_tolerance > 0.0) {
            return Err(Error::config("dc_tolerance", "tolerances must be > 0"));
        }
        if !(0.0..1.0).contains(&self.rounding_threshold) {
            return Err(Error::config("rounding_threshold", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Everything produced by one optimized round.
#[derive(Debug, Clone, PartialEq)]
pub struct CsraOutcome {
    pub eligible: Vec<usize>,
    pub decision: RoundDecision,
    pub dc: Option<DcState>,
    pub repair: Option<RepairReport>,
    pub frequency: Option<FrequencyAllocation>,
    pub cost: CostReport,
    pub feasibility: FeasibilityReport,
}

/// Client selection stage: rounded and repaired DC solution with bandwidth
/// and frequencies still at their selection-time values.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub eligible: Vec<usize>,
    pub decision: RoundDecision,
    pub dc: DcState,
    pub repair: RepairReport,
}

/// KL filter, penalized DC selection and rounding with repair.
pub fn select_round(scenario: &Scenario, t: usize, divergences: &[f64], solver: &SolverParams) -> Result<Selection> {
    let eligible = kl_filter(divergences, scenario.config().kl_threshold)?;
    let problem = RoundProblem::at_max_frequency(scenario, t, &eligible)?;
    let dc = solve_dc(&problem, solver)?;
    let (decision, repair) = round_and_repair(&dc, &problem, solver)?;
    Ok(Selection {
        eligible,
        decision,
        dc,
        repair,
    })
}

/// KL filter, penalized DC selection, rounding with repair, then CPU
/// frequency allocation.
pub fn solve_round(
    scenario: &Scenario,
    t: usize,
    divergences: &[f64],
    solver: &SolverParams,
    dual: &DualParams,
) -> Result<CsraOutcome> {
    let Selection {
        eligible,
        mut decision,
        dc,
        repair,
    } = select_round(scenario, t, divergences, solver)?;
    let frequency = if decision.selected_count() > 0 {
        let alloc = dual_subgradient_allocate(&decision, scenario, t, decision.epigraph, dual)?;
        decision.frequency = alloc.frequency.clone();
        Some(alloc)
    } else {
        None
    };
    finish(scenario, t, divergences, eligible, decision, Some(dc), Some(repair), frequency)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    scenario: &Scenario,
    t: usize,
    divergences: &[f64],
    eligible: Vec<usize>,
    decision: RoundDecision,
    dc: Option<DcState>,
    repair: Option<RepairReport>,
    frequency: Option<FrequencyAllocation>,
) -> Result<CsraOutcome> {
    let cfg = scenario.config();
    let feasibility = verify_feasibility(&decision, scenario, t, divergences);
    if let Some(fail) = feasibility.first_failure() {
        return Err(Error::infeasible(
            fail.constraint,
            format!("client {:?} slack {}", fail.client, fail.slack),
        ));
    }
    let cost = round_cost(&decision, scenario, t, cfg.alpha1, cfg.alpha2)?;
    Ok(CsraOutcome {
        eligible,
        decision,
        dc,
        repair,
        frequency,
        cost,
        feasibility,
    })
}
