//! The five subcommands. Each one builds its tables in memory and hands them
//! back; nothing touches the filesystem here.

use anyhow::{Context, Result};
use csra_core::csra::{brute_force_oracle, solve_round, BandwidthMethod, FeasibilityReport};
use csra_core::error::Constraint;
use csra_core::fl::{run_method, Federation, Method, MethodRun};
use csra_core::genbound::{evaluate_bound, BoundParams};
use csra_core::heterogeneity::kl_filter;
use csra_core::RoundDecision;

use crate::config::{ExperimentConfig, Resolved};
use crate::output::{num, Outputs, Table};

pub const TRACE_HEADER: [&str; 9] = [
    "round",
    "method",
    "selected_count",
    "T_t",
    "E_t",
    "Y_t",
    "train_loss",
    "test_accuracy",
    "bound_total",
];

/// Per-client constraint families reported in decision dumps.
const CLIENT_SLACKS: [Constraint; 5] = [
    Constraint::Integrality,
    Constraint::Inactive,
    Constraint::Frequency,
    Constraint::Heterogeneity,
    Constraint::Epigraph,
];

pub const SUMMARY_HEADER: [&str; 7] = [
    "method",
    "rounds",
    "final_accuracy",
    "cumulative_latency",
    "cumulative_energy",
    "cumulative_utility",
    "error",
];

pub const BOUND_HEADER: [&str; 8] = [
    "round",
    "drift_term",
    "sample_term",
    "kl_term",
    "size_term",
    "stability_term",
    "sigma_d2",
    "total",
];

pub fn decision_header(extra: &[&'static str]) -> Vec<String> {
    let mut h: Vec<String> = ["round", "client", "a", "b", "f"].iter().map(|s| s.to_string()).collect();
    h.extend(CLIENT_SLACKS.iter().map(|c| format!("slack_{}", c.name())));
    h.extend(extra.iter().map(|s| s.to_string()));
    h
}

fn decision_table(name: &str, extra: &[&'static str]) -> Result<Table> {
    let header = decision_header(extra);
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    Table::new(name, &refs)
}

fn decision_rows(
    table: &mut Table,
    round: usize,
    decision: &RoundDecision,
    report: &FeasibilityReport,
    extra: &[String],
) -> Result<()> {
    for k in 0..decision.len() {
        let mut row = vec![
            round.to_string(),
            k.to_string(),
            num(decision.selection[k]),
            num(decision.bandwidth[k]),
            num(decision.frequency[k]),
        ];
        for c in CLIENT_SLACKS {
            row.push(
                report
                    .for_client(k)
                    .find(|x| x.constraint == c)
                    .map(|x| num(x.slack))
                    .unwrap_or_default(),
            );
        }
        row.extend(extra.iter().cloned());
        table.row(&row)?;
    }
    Ok(())
}

fn federation(r: &Resolved) -> Result<Federation> {
    Federation::build(&r.system, &r.ranges, &r.task).context("building the federation")
}

/// Label counts per client and category, plus one row per client.
pub fn partition(r: &Resolved) -> Result<Outputs> {
    let fed = federation(r)?;
    let mut counts = Table::new("partition.csv", &["client", "category", "count"])?;
    for (k, c, n) in fed.partition().table() {
        counts.row([k.to_string(), c.to_string(), n.to_string()])?;
    }
    let mut clients = Table::new(
        "clients.csv",
        &[
            "client",
            "dataset_size",
            "kl_divergence",
            "eligible",
            "distance_m",
            "transmit_power_w",
            "max_frequency_hz",
            "cycles_per_bit",
        ],
    )?;
    let threshold = r.system.kl_threshold;
    for (k, p) in fed.scenario().clients().iter().enumerate() {
        let kl = fed.divergences()[k];
        clients.row([
            k.to_string(),
            p.dataset_size.to_string(),
            num(kl),
            u8::from(kl <= threshold).to_string(),
            num(p.distance),
            num(p.transmit_power),
            num(p.max_frequency),
            num(p.cycles_per_bit),
        ])?;
    }
    let mut out = Outputs::default();
    out.add(counts)?;
    out.add(clients)?;
    Ok(out)
}

/// One optimized round at t = 0, optionally compared with brute force.
pub fn solve(r: &Resolved, oracle: bool, warnings: &mut Vec<String>) -> Result<Outputs> {
    let fed = federation(r)?;
    let s = fed.scenario();
    let out = solve_round(s, 0, fed.divergences(), &r.run.solver, &r.run.dual).context("solving round 0")?;

    let reference = if oracle {
        let eligible = kl_filter(fed.divergences(), r.system.kl_threshold)?;
        if eligible.len() <= r.oracle_limit {
            let o = brute_force_oracle(s, 0, &eligible, BandwidthMethod::DualSearch, &r.run.dual, r.oracle_limit)
                .context("brute-force reference")?;
            Some(o.objective)
        } else {
            warnings.push(format!(
                "oracle skipped: {} eligible clients exceed the limit of {}",
                eligible.len(),
                r.oracle_limit
            ));
            None
        }
    } else {
        None
    };
    let gap = reference.map(|y| (out.cost.utility - y) / y);

    let extra: &[&'static str] = if gap.is_some() { &["oracle_gap"] } else { &[] };
    let mut decision = decision_table("decision.csv", extra)?;
    let extra_values: Vec<String> = gap.map(num).into_iter().collect();
    decision_rows(&mut decision, 0, &out.decision, &out.feasibility, &extra_values)?;

    let mut checks = Table::new("feasibility.csv", &["constraint", "client", "slack", "pass"])?;
    for c in &out.feasibility.checks {
        checks.row([
            c.constraint.name().to_string(),
            c.client.map(|k| k.to_string()).unwrap_or_default(),
            num(c.slack),
            u8::from(c.pass).to_string(),
        ])?;
    }

    let mut header = vec![
        "round",
        "eligible_count",
        "selected_count",
        "T_t",
        "E_t",
        "Y_t",
        "feasible",
        "dc_iterations",
        "dual_converged",
    ];
    if gap.is_some() {
        header.extend(["oracle_Y", "oracle_gap"]);
    }
    let mut summary = Table::new("solve.csv", &header)?;
    let mut row = vec![
        "0".to_string(),
        out.eligible.len().to_string(),
        out.decision.selected_count().to_string(),
        num(out.cost.round_latency),
        num(out.cost.round_energy),
        num(out.cost.utility),
        u8::from(out.feasibility.feasible).to_string(),
        out.dc.as_ref().map(|d| d.iterations).unwrap_or(0).to_string(),
        out.frequency.as_ref().map(|f| u8::from(f.converged).to_string()).unwrap_or_default(),
    ];
    if let (Some(y), Some(g)) = (reference, gap) {
        row.push(num(y));
        row.push(num(g));
    }
    summary.row(&row)?;

    let mut outputs = Outputs::default();
    outputs.add(decision)?;
    outputs.add(checks)?;
    outputs.add(summary)?;
    Ok(outputs)
}

/// Bound breakdown for rounds 0..=t over the KL-eligible clients.
pub fn bound(cfg: &ExperimentConfig, r: &Resolved) -> Result<Outputs> {
    let fed = federation(r)?;
    let eligible = kl_filter(fed.divergences(), r.system.kl_threshold)?;
    let sizes: Vec<f64> = eligible.iter().map(|&k| fed.scenario().client(k).dataset_size as f64).collect();
    let kl: Vec<f64> = eligible.iter().map(|&k| fed.divergences()[k]).collect();
    let b = &cfg.bound;
    let mut table = Table::new("bound.csv", &BOUND_HEADER)?;
    for t in 0..=b.round {
        let p = BoundParams {
            round: t,
            learning_rates: (0..t).map(|i| r.system.learning_rate.rate(i)).collect(),
            smoothness: b.smoothness,
            lipschitz: b.lipschitz,
            grad_variance: b.grad_variance,
            epochs: r.system.local_epochs,
            optimality_gaps: vec![b.optimality_gap; t],
            loss_bound: b.loss_bound,
            confidence: b.confidence,
            stability: b.stability,
            client_sizes: sizes.clone(),
            kl_terms: kl.clone(),
        };
        let br = evaluate_bound(&p).with_context(|| format!("bound at round {t}"))?;
        table.row([
            t.to_string(),
            num(br.drift_term),
            num(br.sample_term),
            num(br.kl_term),
            num(br.size_term),
            num(br.stability_term),
            num(br.sigma_d2),
            num(br.total),
        ])?;
    }
    let mut out = Outputs::default();
    out.add(table)?;
    Ok(out)
}

fn trace_rows(table: &mut Table, run: &MethodRun) -> Result<()> {
    for tr in &run.traces {
        table.row([
            tr.round.to_string(),
            tr.method.name().to_string(),
            tr.selection.len().to_string(),
            num(tr.cost.round_latency),
            num(tr.cost.round_energy),
            num(tr.cost.utility),
            num(tr.train_loss),
            num(tr.test_accuracy),
            tr.bound.as_ref().map(|b| num(b.total)).unwrap_or_default(),
        ])?;
    }
    Ok(())
}

fn decisions_of(run: &MethodRun) -> Result<Table> {
    let mut table = decision_table(&format!("decisions_{}.csv", run.method.name()), &[])?;
    for tr in &run.traces {
        decision_rows(&mut table, tr.round, &tr.decision, &tr.feasibility, &[])?;
    }
    Ok(table)
}

fn summary_of(runs: &[MethodRun], warnings: &mut Vec<String>) -> Result<Table> {
    let mut table = Table::new("summary.csv", &SUMMARY_HEADER)?;
    for run in runs {
        let s = run.summary();
        let error = run.error.as_ref().map(|e| e.to_string()).unwrap_or_default();
        if !error.is_empty() {
            warnings.push(format!("{} stopped early: {error}", run.method));
        }
        table.row([
            run.method.name().to_string(),
            s.rounds.to_string(),
            num(s.final_accuracy),
            num(s.cumulative_latency),
            num(s.cumulative_energy),
            num(s.cumulative_utility),
            error,
        ])?;
    }
    Ok(table)
}

/// Training runs of the configured methods, one after another.
pub fn simulate(r: &Resolved, rounds: usize, warnings: &mut Vec<String>) -> Result<Outputs> {
    let fed = federation(r)?;
    let runs: Vec<MethodRun> = r.methods.iter().map(|&m| run_method(&fed, m, rounds, &r.run)).collect();
    let mut trace = Table::new("trace.csv", &TRACE_HEADER)?;
    for run in &runs {
        trace_rows(&mut trace, run)?;
    }
    let mut out = Outputs::default();
    out.add(trace)?;
    for run in &runs {
        out.add(decisions_of(run)?)?;
    }
    out.add(summary_of(&runs, warnings)?)?;
    Ok(out)
}

/// Every method on the same federation, one thread per method and one trace
/// file per method.
pub fn bench(r: &Resolved, rounds: usize, warnings: &mut Vec<String>) -> Result<Outputs> {
    let fed = federation(r)?;
    let runs: Vec<MethodRun> = std::thread::scope(|scope| {
        let handles: Vec<_> = Method::ALL
            .iter()
            .map(|&m| {
                let fed = &fed;
                scope.spawn(move || run_method(fed, m, rounds, &r.run))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("method thread panicked")).collect()
    });
    let mut out = Outputs::default();
    for run in &runs {
        let mut trace = Table::new(format!("trace_{}.csv", run.method.name()), &TRACE_HEADER)?;
        trace_rows(&mut trace, run)?;
        out.add(trace)?;
        out.add(decisions_of(run)?)?;
    }
    out.add(summary_of(&runs, warnings)?)?;
    Ok(out)
}
