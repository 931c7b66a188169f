//! Constraint-by-constraint audit of a round decision.

use alloc::vec::Vec;

use crate::decision::RoundDecision;
use crate::error::Constraint;
use crate::scenario::Scenario;

/// Slacks at or above `-FEASIBILITY_TOLERANCE` pass.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintCheck {
    pub constraint: Constraint,
    /// `None` for constraints over the whole round.
    pub client: Option<usize>,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub checks: Vec<ConstraintCheck>,
    pub feasible: bool,
}

impl FeasibilityReport {
    pub fn first_failure(&self) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| !c.pass)
    }

    /// Smallest slack of one constraint family.
    pub fn min_slack(&self, constraint: Constraint) -> Option<f64> {
        self.checks
            .iter()
            .filter(|c| c.constraint == constraint)
            .map(|c| c.slack)
            .reduce(f64::min)
    }

    /// Checks attached to client `k`.
    pub fn for_client(&self, k: usize) -> impl Iterator<Item = &ConstraintCheck> {
        self.checks.iter().filter(move |c| c.client == Some(k))
    }
}

/// Recomputes every constraint of the round problem for `decision`.
///
/// Frequency and heterogeneity slacks are in their natural units relative to
/// `f_max` and nats; the data budget slack is relative to the budget; the
/// epigraph slack is relative to the epigraph value.
pub fn verify_feasibility(
    decision: &RoundDecision,
    scenario: &Scenario,
    t: usize,
    divergences: &[f64],
) -> FeasibilityReport {
    let cfg = scenario.config();
    let k_total = scenario.num_clients();
    let mut checks = Vec::new();
    let mut push = |constraint, client, slack: f64| {
        checks.push(ConstraintCheck {
            constraint,
            client,
            slack,
            pass: slack >= -FEASIBILITY_TOLERANCE,
        });
    };
    if decision.len() != k_total || divergences.len() != k_total {
        push(Constraint::Integrality, None, f64::NEG_INFINITY);
        return FeasibilityReport {
            feasible: false,
            checks,
        };
    }

    let mut band = 0.0;
    let mut data = 0.0;
    for k in 0..k_total {
        let a = decision.selection[k];
        let (b, f) = (decision.bandwidth[k], decision.frequency[k]);
        let profile = scenario.client(k);
        let f_max = profile.max_frequency;
        push(Constraint::Integrality, Some(k), -(a.abs().min((1.0 - a).abs())));
        band += b;
        if !decision.is_selected(k) {
            push(Constraint::Inactive, Some(k), -(b.abs().max((f / f_max).abs())));
            continue;
        }
        data += profile.dataset_size as f64;
        push(Constraint::Frequency, Some(k), (f / f_max).min(1.0 - f / f_max));
        let d = divergences[k];
        push(
            Constraint::Heterogeneity,
            Some(k),
            if d.is_finite() { cfg.kl_threshold - d } else { f64::NEG_INFINITY },
        );
        let latency = match (b > 0.0 && b <= 1.0 + 1e-9, f > 0.0) {
            (true, true) => match scenario.rate(k, t, b.min(1.0)) {
                Ok(r) if r > 0.0 => {
                    let e = f64::from(cfg.local_epochs);
                    profile.model_bits / r + e * profile.cycles_per_bit * profile.dataset_size as f64 / f
                }
                _ => f64::INFINITY,
            },
            _ => f64::INFINITY,
        };
        let weighted = cfg.alpha1 * latency;
        let slack = if weighted.is_finite() {
            (decision.epigraph - weighted) / decision.epigraph.abs().max(1e-300)
        } else {
            f64::NEG_INFINITY
        };
        push(Constraint::Epigraph, Some(k), if cfg.alpha1 == 0.0 && latency.is_finite() { 0.0 } else { slack });
    }
    push(Constraint::Bandwidth, None, 1.0 - band);
    push(
        Constraint::DataBudget,
        None,
        (data - cfg.data_budget) / cfg.data_budget.max(1.0),
    );
    let feasible = checks.iter().all(|c| c.pass);
    FeasibilityReport { checks, feasible }
}
