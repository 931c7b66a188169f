//! Exhaustive search over selections for small eligible sets.

use alloc::vec::Vec;

use super::{solve_bandwidth, solve_bandwidth_grid, ClientTerms, RoundProblem};
use crate::decision::RoundDecision;
use crate::error::{Error, Result};
use crate::freq::{dual_subgradient_allocate, DualParams};
use crate::scenario::Scenario;
use crate::wireless::{round_cost, CostReport};

pub const DEFAULT_ORACLE_LIMIT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthMethod {
    /// Golden-section search on the latency bound.
    DualSearch,
    /// Uniform grid over the latency bound.
    Grid { resolution: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub decision: RoundDecision,
    pub cost: CostReport,
    pub objective: f64,
    /// Utility of the best selection at maximum frequency, before frequency
    /// allocation.
    pub bandwidth_objective: f64,
    pub subsets_evaluated: usize,
}

/// Enumerates every selection of `eligible` meeting the data budget, splits
/// the band exactly at maximum frequency, allocates CPU frequencies and
/// returns the lowest-utility decision.
pub fn brute_force_oracle(
    scenario: &Scenario,
    t: usize,
    eligible: &[usize],
    method: BandwidthMethod,
    dual: &DualParams,
    limit: usize,
) -> Result<OracleResult> {
    if eligible.len() > limit {
        return Err(Error::TooLarge {
            eligible: eligible.len(),
            limit,
        });
    }
    let cfg = scenario.config();
    let problem = RoundProblem::at_max_frequency(scenario, t, eligible)?;
    let n = problem.len();
    let mut best: Option<OracleResult> = None;
    let mut evaluated = 0usize;
    for mask in 0u32..(1u32 << n) {
        let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let data: f64 = members.iter().map(|&i| problem.clients[i].data).sum();
        if data < problem.data_budget {
            continue;
        }
        evaluated += 1;
        let terms: Vec<ClientTerms> = members.iter().map(|&i| problem.clients[i]).collect();
        let split = match method {
            BandwidthMethod::DualSearch => solve_bandwidth(&terms, cfg.alpha1, cfg.alpha2)?,
            BandwidthMethod::Grid { resolution } => {
                solve_bandwidth_grid(&terms, cfg.alpha1, cfg.alpha2, resolution)?
            }
        };
        let mut decision = RoundDecision::empty(scenario.num_clients());
        for (c, &b) in terms.iter().zip(&split.bandwidth) {
            decision.select(c.index, b, c.frequency);
        }
        decision.epigraph = cfg.alpha1 * split.latency;
        if !members.is_empty() && cfg.alpha1 > 0.0 {
            let f = dual_subgradient_allocate(&decision, scenario, t, decision.epigraph, dual)?;
            decision.frequency = f.frequency;
        }
        let cost = round_cost(&decision, scenario, t, cfg.alpha1, cfg.alpha2)?;
        let better = best.as_ref().is_none_or(|b| cost.utility < b.objective);
        if better {
            best = Some(OracleResult {
                objective: cost.utility,
                decision,
                cost,
                bandwidth_objective: split.objective,
                subsets_evaluated: 0,
            });
        }
    }
    let mut best = best.ok_or_else(|| {
        Error::infeasible(
            crate::error::Constraint::DataBudget,
            "no selection of the eligible clients meets the data budget",
        )
    })?;
    best.subsets_evaluated = evaluated;
    Ok(best)
}
