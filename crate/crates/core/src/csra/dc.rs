//! Penalized difference-of-convex iteration over the relaxed selection.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::barrier::{solve_subproblem, RelaxedPoint, Subproblem};
use super::{RoundProblem, SolverParams};
use crate::error::{Constraint, Error, Result};
use crate::math;

/// One linearize-and-solve step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcStep {
    pub rho: f64,
    /// Penalized objective at the anchor.
    pub objective_before: f64,
    /// Penalized objective at the accepted iterate (same penalty weight).
    pub objective_after: f64,
    /// `sum(a - a^2)` after the step.
    pub integrality_residual: f64,
    /// The subproblem solution does not increase the objective.
    pub accepted: bool,
    pub gap: f64,
    pub newton_steps: usize,
    /// Largest `|u - a z|`, recorded when the iterate is integral.
    pub rlt_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcState {
    /// Scenario indices of the eligible clients, aligned with the point.
    pub eligible: Vec<usize>,
    pub point: RelaxedPoint,
    pub rho: f64,
    pub iterations: usize,
    pub trace: Vec<DcStep>,
    pub b_min: f64,
    /// Objective at the start point with no penalty.
    pub initial_objective: f64,
}

impl DcState {
    pub fn integrality_residual(&self) -> f64 {
        self.point.a.iter().map(|a| a - a * a).sum()
    }
}

/// `Upsilon + a2 sum(P c u + a e) + rho sum(a - a^2)`.
pub fn penalized_objective(problem: &RoundProblem, x: &RelaxedPoint, rho: f64) -> f64 {
    let mut v = x.upsilon;
    for (i, c) in problem.clients.iter().enumerate() {
        let a = x.a[i];
        v += problem.alpha2 * (c.power * c.upload * x.u[i] + a * c.compute_energy);
        v += rho * (a - a * a);
    }
    v
}

/// Largest envelope gap `|u - a z|`.
pub fn rlt_gap(x: &RelaxedPoint) -> f64 {
    (0..x.len())
        .map(|i| math::abs(x.u[i] - x.a[i] * x.z[i]))
        .fold(0.0, f64::max)
}

fn is_integral(x: &RelaxedPoint, tol: f64) -> bool {
    x.a.iter().all(|&a| a <= tol || a >= 1.0 - tol)
}

fn epigraph_floor(problem: &RoundProblem, x: &RelaxedPoint) -> f64 {
    problem
        .clients
        .iter()
        .enumerate()
        .map(|(i, c)| problem.alpha1 * (c.upload * x.u[i] + c.compute_latency * x.a[i]))
        .fold(0.0, f64::max)
}

/// Everybody selected with an equal bandwidth share.
fn uniform_start(problem: &RoundProblem) -> RelaxedPoint {
    let n = problem.len();
    let mut x = RelaxedPoint {
        a: vec![1.0; n],
        z: vec![n as f64; n],
        u: vec![n as f64; n],
        upsilon: 0.0,
    };
    x.upsilon = epigraph_floor(problem, &x);
    x
}

/// A point strictly inside every constraint.
fn central_point(problem: &RoundProblem, z_max: f64) -> RelaxedPoint {
    let n = problem.len() as f64;
    let total = problem.total_data();
    let margin = if problem.data_budget > 0.0 {
        (0.5 * (1.0 - problem.data_budget / total)).min(0.5)
    } else {
        0.5
    };
    let a = 1.0 - margin;
    let z = (2.0 * n).min(0.5 * (n + z_max));
    let lo = a.max(z - (1.0 - a) * z_max);
    let hi = (z_max * a).min(z + a - 1.0);
    let mut x = RelaxedPoint {
        a: vec![a; problem.len()],
        z: vec![z; problem.len()],
        u: vec![0.5 * (lo + hi); problem.len()],
        upsilon: 0.0,
    };
    x.upsilon = 1.5 * epigraph_floor(problem, &x) + 1e-12;
    x
}

/// Runs the penalized DC iteration from the uniform start.
///
/// The penalty weight grows geometrically while the selection stays
/// fractional. A subproblem solution is accepted only if it does not raise
/// the penalized objective, so every recorded step is a descent step.
pub fn solve_dc(problem: &RoundProblem, params: &SolverParams) -> Result<DcState> {
    let n = problem.len();
    if n == 0 {
        return Err(Error::NoEligibleClients { threshold: f64::NAN });
    }
    params.validate(n)?;
    let total = problem.total_data();
    if total < problem.data_budget {
        return Err(Error::infeasible(
            Constraint::DataBudget,
            format!("eligible clients hold {total} samples, budget is {}", problem.data_budget),
        ));
    }
    let z_max = 1.0 / params.b_min;
    let start = uniform_start(problem);
    let initial_objective = penalized_objective(problem, &start, 0.0);
    let scale = initial_objective.max(1e-300);
    let mut rho = params.rho.unwrap_or(params.rho_init_factor * scale);
    let mut state = DcState {
        eligible: problem.clients.iter().map(|c| c.index).collect(),
        point: start,
        rho,
        iterations: 0,
        trace: Vec::new(),
        b_min: params.b_min,
        initial_objective,
    };
    // With no slack in the budget every eligible client must participate.
    if total <= problem.data_budget * (1.0 + 1e-12) {
        return Ok(state);
    }

    let center = central_point(problem, z_max);
    let mut last_residual = state.integrality_residual();
    let mut stale = 0usize;
    for _ in 0..params.dc_max_iters {
        let anchor = state.point.a.clone();
        let sub = Subproblem {
            problem,
            rho,
            anchor: &anchor,
            b_min: params.b_min,
            scale: scale + rho * n as f64,
        };
        let warm = state.point.blend(&center, 0.9);
        let sol = solve_subproblem(&sub, &warm, params.subproblem_tolerance)?;
        let before = penalized_objective(problem, &state.point, rho);
        let after = penalized_objective(problem, &sol.point, rho);
        let accepted = after <= before;
        if accepted {
            state.point = sol.point;
        }
        let objective_after = if accepted { after } else { before };
        let residual = state.integrality_residual();
        let integral = is_integral(&state.point, 1e-9);
        state.trace.push(DcStep {
            rho,
            objective_before: before,
            objective_after,
            integrality_residual: residual,
            accepted,
            gap: sol.gap,
            newton_steps: sol.newton_steps,
            rlt_gap: integral.then(|| rlt_gap(&state.point)),
        });
        state.iterations += 1;
        state.rho = rho;

        let settled = residual <= params.integrality_tolerance * n as f64;
        let improvement = before - objective_after;
        if settled && improvement <= params.dc_tolerance * math::abs(before) {
            break;
        }
        if residual * 10.0 <= last_residual {
            stale = 0;
        } else {
            stale += 1;
        }
        last_residual = last_residual.min(residual);
        if !settled && stale >= params.rho_patience {
            rho *= params.rho_growth;
            stale = 0;
        }
    }
    Ok(state)
}
