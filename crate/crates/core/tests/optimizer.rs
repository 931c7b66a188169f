mod support;

use csra_core::csra::{
    brute_force_oracle, round_and_repair, solve_bandwidth, solve_bandwidth_grid, solve_dc, solve_round,
    solve_subproblem, verify_feasibility, BandwidthMethod, DcState, RelaxedPoint, RoundProblem, SolverParams,
    Subproblem,
};
use csra_core::error::{Constraint, Error};
use csra_core::freq::DualParams;
use csra_core::scenario::{ClientProfile, Scenario, SystemConfig};
use csra_core::RoundDecision;
use support::instances::round_instance;
use support::oracles::{enumerate_at_max_frequency, rel};

fn all_eligible(k: usize) -> Vec<usize> {
    (0..k).collect()
}

#[test]
fn pipeline_near_oracle_and_feasible() {
    let solver = SolverParams::default();
    let dual = DualParams::default();
    let mut within = 0;
    let mut total = 0;
    for seed in 0..15 {
        for k in [4, 6, 8] {
            let s = round_instance(1000 + seed, k);
            let div = vec![0.0; k];
            let out = solve_round(&s, 0, &div, &solver, &dual).unwrap();
            assert!(out.feasibility.feasible);
            let dc = out.dc.as_ref().unwrap();
            for step in &dc.trace {
                assert!(step.objective_after <= step.objective_before + 1e-9);
                if let Some(g) = step.rlt_gap {
                    assert!(g <= 1e-9 * (1.0 + dc.point.z.iter().cloned().fold(0.0, f64::max)), "rlt gap {g}");
                }
            }
            let oracle = brute_force_oracle(&s, 0, &all_eligible(k), BandwidthMethod::DualSearch, &dual, 8).unwrap();
            total += 1;
            if out.cost.utility <= 1.02 * oracle.objective {
                within += 1;
            }
        }
    }
    assert!(within as f64 >= 0.95 * total as f64, "{within}/{total}");
}

#[test]
fn single_client_takes_everything() {
    let s = round_instance(3, 1);
    let out = solve_round(&s, 0, &[0.0], &SolverParams::default(), &DualParams::default()).unwrap();
    assert!(out.decision.is_selected(0));
    assert!((out.decision.bandwidth[0] - 1.0).abs() < 1e-12);
    let oracle = brute_force_oracle(&s, 0, &[0], BandwidthMethod::DualSearch, &DualParams::default(), 8).unwrap();
    assert!(rel(out.cost.utility, oracle.objective) < 1e-9);
    // At maximum frequency the epigraph is the full latency.
    let p = RoundProblem::at_max_frequency(&s, 0, &[0]).unwrap();
    let (d, _) = round_and_repair(&solve_dc(&p, &SolverParams::default()).unwrap(), &p, &SolverParams::default()).unwrap();
    let c = s.client(0);
    let want = s.config().alpha1
        * (c.model_bits / s.full_band_rate(0, 0)
            + s.config().local_epochs as f64 * c.cycles_per_bit * c.dataset_size as f64 / c.max_frequency);
    assert!(rel(d.epigraph, want) < 1e-12);
}

#[test]
fn twin_clients_pick_one() {
    let base = round_instance(8, 1);
    let profile: ClientProfile = base.client(0).clone();
    let cfg = SystemConfig {
        num_clients: 2,
        data_budget: profile.dataset_size as f64,
        ..base.config().clone()
    };
    let s = Scenario::new(cfg, vec![profile.clone(), profile], 8).unwrap();
    let out = solve_round(&s, 0, &[0.0, 0.0], &SolverParams::default(), &DualParams::default()).unwrap();
    let oracle = brute_force_oracle(&s, 0, &[0, 1], BandwidthMethod::DualSearch, &DualParams::default(), 8).unwrap();
    assert_eq!(out.decision.selected_count(), 1);
    assert_eq!(oracle.decision.selected_count(), 1);
    assert!(rel(out.cost.utility, oracle.objective) < 1e-6);
}

fn strictly_feasible(problem: &RoundProblem, z_max: f64) -> RelaxedPoint {
    let n = problem.len() as f64;
    let a: f64 = 0.75;
    let z = 2.0 * n;
    let lo = a.max(z - (1.0 - a) * z_max);
    let hi = (z_max * a).min(z + a - 1.0);
    let u = 0.5 * (lo + hi);
    let floor = problem
        .clients
        .iter()
        .map(|c| problem.alpha1 * (c.upload * u + c.compute_latency * a))
        .fold(0.0, f64::max);
    RelaxedPoint {
        a: vec![a; problem.len()],
        z: vec![z; problem.len()],
        u: vec![u; problem.len()],
        upsilon: 1.5 * floor,
    }
}

#[test]
fn plain_relaxation_is_a_lower_bound() {
    for seed in 0..20 {
        for k in [3, 5] {
            let s = round_instance(2000 + seed, k);
            let p = RoundProblem::at_max_frequency(&s, 0, &all_eligible(k)).unwrap();
            let anchor = vec![0.0; k];
            let sub = Subproblem {
                problem: &p,
                rho: 0.0,
                anchor: &anchor,
                b_min: 1e-4,
                scale: p.utility(&all_eligible(k), &vec![1.0 / k as f64; k]),
            };
            let start = strictly_feasible(&p, 1e4);
            assert!(sub.is_interior(&start));
            let sol = solve_subproblem(&sub, &start, 1e-10).unwrap();
            let best = enumerate_at_max_frequency(&p);
            assert!(sol.objective <= best * (1.0 + 1e-6), "seed {seed}: {} > {best}", sol.objective);
        }
    }
}

#[test]
fn bandwidth_solvers_agree() {
    for seed in 0..30 {
        let s = round_instance(3000 + seed, 5);
        let p = RoundProblem::at_max_frequency(&s, 0, &all_eligible(5)).unwrap();
        for mask in [0b11111u32, 0b10101, 0b00110, 0b01000] {
            let terms: Vec<_> = (0..5).filter(|i| mask >> i & 1 == 1).map(|i| p.clients[i]).collect();
            let exact = solve_bandwidth(&terms, p.alpha1, p.alpha2).unwrap();
            let grid = solve_bandwidth_grid(&terms, p.alpha1, p.alpha2, 1e-4).unwrap();
            assert!(rel(exact.objective, grid.objective) < 1e-3, "seed {seed} mask {mask:b}");
            assert!(exact.objective <= grid.objective * (1.0 + 1e-12));
            assert!(exact.bandwidth.iter().sum::<f64>() <= 1.0 + 1e-9);
        }
    }
}

#[test]
fn oracle_methods_agree() {
    for seed in 0..10 {
        let s = round_instance(4000 + seed, 4);
        let dual = DualParams::default();
        let a = brute_force_oracle(&s, 0, &all_eligible(4), BandwidthMethod::DualSearch, &dual, 8).unwrap();
        let b = brute_force_oracle(&s, 0, &all_eligible(4), BandwidthMethod::Grid { resolution: 1e-4 }, &dual, 8).unwrap();
        assert!(rel(a.objective, b.objective) < 1e-3);
        assert_eq!(a.subsets_evaluated, b.subsets_evaluated);
    }
    let s = round_instance(1, 9);
    let err = brute_force_oracle(&s, 0, &all_eligible(9), BandwidthMethod::DualSearch, &DualParams::default(), 8);
    assert!(matches!(err, Err(Error::TooLarge { .. })));
}

fn relaxed(a: Vec<f64>, u: Vec<f64>) -> DcState {
    let n = a.len();
    DcState {
        eligible: (0..n).collect(),
        point: RelaxedPoint { z: u.clone(), a, u, upsilon: 1.0 },
        rho: 1.0,
        iterations: 0,
        trace: vec![],
        b_min: 1e-4,
        initial_objective: 1.0,
    }
}

#[test]
fn rounding_examples() {
    let s = round_instance(5, 2);
    let cfg = SystemConfig { data_budget: 1.0, ..s.config().clone() };
    let s = s.with_config(cfg).unwrap();
    let p = RoundProblem::at_max_frequency(&s, 0, &[0, 1]).unwrap();
    let no_refine = SolverParams { local_refinement: false, ..SolverParams::default() };

    let (d, rep) = round_and_repair(&relaxed(vec![0.9, 0.2], vec![2.5, 1.0]), &p, &no_refine).unwrap();
    assert!(d.is_selected(0) && !d.is_selected(1));
    assert_eq!(rep.rounded, vec![0]);
    // 1/u = 0.4 wastes the band; the repair gives the sole client all of it.
    assert!(rep.bandwidth_repaired);
    assert!((d.bandwidth[0] - 1.0).abs() < 1e-9);
    assert_eq!((d.bandwidth[1], d.frequency[1]), (0.0, 0.0));

    // An optimal integral point comes back as is.
    let sol = p.subset_cost(&[0, 1]).unwrap();
    let z: Vec<f64> = sol.bandwidth.iter().map(|b| 1.0 / b).collect();
    let (d, rep) = round_and_repair(&relaxed(vec![1.0, 1.0], z), &p, &no_refine).unwrap();
    assert!(!rep.bandwidth_repaired);
    for k in 0..2 {
        assert!(rel(d.bandwidth[k], sol.bandwidth[k]) < 1e-12);
    }

    // Nothing above one half and no retry: the budget is broken.
    let strict = SolverParams { budget_retry: false, ..no_refine.clone() };
    let err = round_and_repair(&relaxed(vec![0.5, 0.1], vec![2.0, 2.0]), &p, &strict);
    assert!(matches!(err, Err(Error::Infeasible { constraint: Constraint::DataBudget, .. })));
    // With retry the largest client is forced in.
    let (d, rep) = round_and_repair(&relaxed(vec![0.5, 0.1], vec![2.0, 2.0]), &p, &no_refine).unwrap();
    assert_eq!(d.selected_count(), 1);
    assert_eq!(rep.forced.len(), 1);
}

#[test]
fn budget_beyond_reach_is_reported() {
    let s = round_instance(6, 3);
    let total: u64 = s.clients().iter().map(|c| c.dataset_size).sum();
    let cfg = SystemConfig { data_budget: total as f64 + 1.0, ..s.config().clone() };
    let s = s.with_config(cfg).unwrap();
    let err = solve_round(&s, 0, &[0.0; 3], &SolverParams::default(), &DualParams::default());
    assert!(matches!(err, Err(Error::Infeasible { constraint: Constraint::DataBudget, .. })), "{err:?}");
}

#[test]
fn feasibility_report_flags_overbooked_band() {
    let s = round_instance(7, 2);
    let mut d = RoundDecision::empty(2);
    d.select(0, 0.51, s.client(0).max_frequency);
    d.select(1, 0.5, s.client(1).max_frequency);
    d.epigraph = 1e9;
    let rep = verify_feasibility(&d, &s, 0, &[0.0, 0.0]);
    let band = rep.checks.iter().find(|c| c.constraint == Constraint::Bandwidth).unwrap();
    assert!(!band.pass);
    assert!((band.slack + 0.01).abs() < 1e-12);
    assert!(!rep.feasible);

    d.bandwidth[0] = 0.5;
    let rep = verify_feasibility(&d, &s, 0, &[0.0, 0.0]);
    assert!(rep.feasible);
    assert!(rep.checks.iter().all(|c| c.slack >= 0.0));
}
