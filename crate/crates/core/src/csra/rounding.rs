//! Threshold rounding of the relaxed selection with feasibility repair.

use alloc::format;
use alloc::vec::Vec;

use super::dc::DcState;
use super::{BandwidthSolution, RoundProblem, SolverParams};
use crate::decision::RoundDecision;
use crate::error::{Constraint, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RepairReport {
    /// Scenario indices kept by the threshold rule.
    pub rounded: Vec<usize>,
    /// Clients force-selected to restore the data budget.
    pub forced: Vec<usize>,
    /// The rounded bandwidth `1/u` was replaced by the exact split.
    pub bandwidth_repaired: bool,
    /// Accepted drop/add/swap moves.
    pub refinement_moves: usize,
    /// Utility straight after rounding and repair, before refinement. Both
    /// objectives assume the frequency step that follows.
    pub rounded_objective: f64,
    pub final_objective: f64,
}

fn data(problem: &RoundProblem, members: &[usize]) -> f64 {
    members.iter().map(|&i| problem.clients[i].data).sum()
}

fn meets_budget(problem: &RoundProblem, members: &[usize]) -> bool {
    data(problem, members) >= problem.data_budget
}

/// Candidate selections one move away. Tier 0 drops one, adds one or
/// swaps one for one; tier 1 exchanges two members for one outsider or one
/// member for two outsiders.
fn neighbours(members: &[usize], n: usize, tier: usize) -> Vec<Vec<usize>> {
    let outside: Vec<usize> = (0..n).filter(|i| !members.contains(i)).collect();
    let mut out = Vec::new();
    let mut emit = |drop: &[usize], add: &[usize]| {
        let mut m: Vec<usize> = members.iter().copied().filter(|i| !drop.contains(i)).collect();
        m.extend_from_slice(add);
        m.sort_unstable();
        out.push(m);
    };
    if tier == 0 {
        for &i in members {
            emit(&[i], &[]);
        }
        for &j in &outside {
            emit(&[], &[j]);
        }
        for &i in members {
            for &j in &outside {
                emit(&[i], &[j]);
            }
        }
        return out;
    }
    for (x, &i) in members.iter().enumerate() {
        for &i2 in &members[x + 1..] {
            for &j in &outside {
                emit(&[i, i2], &[j]);
            }
        }
    }
    for &i in members {
        for (y, &j) in outside.iter().enumerate() {
            for &j2 in &outside[y + 1..] {
                emit(&[i], &[j, j2]);
            }
        }
    }
    out
}

/// Best neighbouring selection of the cheapest tier that lowers the utility.
fn improve(problem: &RoundProblem, members: &[usize], current: f64) -> Result<Option<(Vec<usize>, BandwidthSolution, f64)>> {
    for tier in 0..2 {
        let mut best = None;
        let mut best_value = current * (1.0 - 1e-12);
        for m in neighbours(members, problem.len(), tier) {
            if m.is_empty() || !meets_budget(problem, &m) {
                continue;
            }
            let sol = problem.subset_cost(&m)?;
            let value = problem.utility_after_frequency(&m, &sol.bandwidth);
            if value < best_value {
                best_value = value;
                best = Some((m, sol, value));
            }
        }
        if best.is_some() {
            return Ok(best);
        }
    }
    Ok(None)
}

/// Rounds `a > threshold` to one, takes `b = 1/u`, restores the data budget
/// and the bandwidth sum if needed, and optionally refines the selection by
/// local search.
pub fn round_and_repair(
    state: &DcState,
    problem: &RoundProblem,
    params: &SolverParams,
) -> Result<(RoundDecision, RepairReport)> {
    let n = problem.len();
    if state.point.len() != n {
        return Err(Error::shape("DC state does not match the problem"));
    }
    let mut members: Vec<usize> = (0..n)
        .filter(|&i| state.point.a[i] > params.rounding_threshold)
        .collect();
    let rounded: Vec<usize> = members.iter().map(|&i| problem.clients[i].index).collect();
    let mut forced = Vec::new();
    if !meets_budget(problem, &members) {
        if !params.budget_retry {
            return Err(Error::infeasible(
                Constraint::DataBudget,
                format!(
                    "rounded selection holds {} samples, budget is {}",
                    data(problem, &members),
                    problem.data_budget
                ),
            ));
        }
        let mut outside: Vec<usize> = (0..n).filter(|i| !members.contains(i)).collect();
        // Largest data first, lowest index on ties.
        outside.sort_by(|&i, &j| problem.clients[j].data.total_cmp(&problem.clients[i].data).then(i.cmp(&j)));
        for j in outside {
            if meets_budget(problem, &members) {
                break;
            }
            members.push(j);
            forced.push(problem.clients[j].index);
        }
        members.sort_unstable();
        if !meets_budget(problem, &members) {
            return Err(Error::infeasible(
                Constraint::DataBudget,
                format!("eligible clients cannot reach the budget {}", problem.data_budget),
            ));
        }
    }

    let mut bandwidth: Vec<f64> = members
        .iter()
        .map(|&i| if forced.contains(&problem.clients[i].index) { 0.0 } else { 1.0 / state.point.u[i] })
        .collect();
    let band_ok = bandwidth.iter().all(|&b| b > 0.0) && bandwidth.iter().sum::<f64>() <= 1.0 + 1e-9;
    let rounded_value = if band_ok {
        problem.utility_after_frequency(&members, &bandwidth)
    } else {
        f64::INFINITY
    };
    let exact = problem.subset_cost(&members)?;
    let exact_value = problem.utility_after_frequency(&members, &exact.bandwidth);
    let mut bandwidth_repaired = false;
    let mut value = rounded_value;
    if exact_value < rounded_value * (1.0 - 1e-12) || !band_ok {
        bandwidth = exact.bandwidth;
        value = exact_value;
        bandwidth_repaired = true;
    }
    let rounded_objective = value;

    let mut moves = 0usize;
    if params.local_refinement {
        let limit = 4 * n + 4;
        while moves < limit {
            match improve(problem, &members, value)? {
                Some((m, sol, v)) => {
                    members = m;
                    bandwidth = sol.bandwidth;
                    value = v;
                    moves += 1;
                }
                None => break,
            }
        }
        if moves > 0 {
            bandwidth_repaired = true;
        }
    }

    let mut decision = RoundDecision::empty(problem.num_clients);
    let mut latency = 0.0f64;
    for (&i, &b) in members.iter().zip(&bandwidth) {
        let c = &problem.clients[i];
        decision.select(c.index, b, c.frequency);
        latency = latency.max(c.latency(b));
    }
    decision.epigraph = problem.alpha1 * latency;
    Ok((
        decision,
        RepairReport {
            rounded,
            forced,
            bandwidth_repaired,
            refinement_moves: moves,
            rounded_objective,
            final_objective: value,
        },
    ))
}
