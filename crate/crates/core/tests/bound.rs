mod support;

use csra_core::genbound::{dv_gap, evaluate_bound, BoundParams};
use csra_core::heterogeneity::LabelDistribution;
use csra_core::rng::{stream, Domain};
use rand::Rng;
use support::oracles::{bound_total, rel};

fn random_params(r: &mut impl Rng) -> BoundParams {
    let round = r.random_range(0..12);
    let k = r.random_range(1..10);
    BoundParams {
        round,
        learning_rates: (0..round).map(|_| r.random_range(1e-4..0.5)).collect(),
        smoothness: r.random_range(0.0..5.0),
        lipschitz: r.random_range(0.0..5.0),
        grad_variance: r.random_range(0.0..5.0),
        epochs: r.random_range(1..20),
        optimality_gaps: (0..round).map(|_| r.random_range(0.0..3.0)).collect(),
        loss_bound: r.random_range(0.1..20.0),
        confidence: r.random_range(0.01..0.99),
        stability: r.random_range(0.0..1.0),
        client_sizes: (0..k).map(|_| r.random_range(1.0..1000.0f64).floor()).collect(),
        kl_terms: (0..k).map(|_| r.random_range(0.0..2.0)).collect(),
    }
}

fn total(p: &BoundParams) -> f64 {
    evaluate_bound(p).unwrap().total
}

#[test]
fn matches_term_by_term_evaluation() {
    let mut r = stream(5, Domain::Instance, 0, 0);
    for _ in 0..100 {
        let p = random_params(&mut r);
        let b = evaluate_bound(&p).unwrap();
        assert!(rel(b.total, bound_total(&p)) <= 1e-12, "{p:?}");
        let parts = b.drift_term + b.sample_term + b.kl_term + b.size_term + b.stability_term;
        assert!(rel(b.total, parts) <= 1e-15);
    }
}

#[test]
fn directional_sweeps() {
    let mut r = stream(6, Domain::Instance, 0, 0);
    for _ in 0..50 {
        let p = random_params(&mut r);
        let base = total(&p);
        for k in 0..p.kl_terms.len() {
            let mut q = p.clone();
            q.kl_terms[k] += 0.3;
            assert!(total(&q) >= base);
        }
        for t in 0..p.round {
            let mut q = p.clone();
            q.optimality_gaps[t] += 0.3;
            assert!(total(&q) >= base);
        }
        let mut q = p.clone();
        q.stability += 0.1;
        assert!(total(&q) >= base);
        let mut q = p.clone();
        q.loss_bound *= 1.5;
        assert!(total(&q) >= base);
        let mut q = p.clone();
        q.confidence = (p.confidence + 1.0) / 2.0;
        assert!(total(&q) <= base);

        let mut q = p.clone();
        q.client_sizes.iter_mut().for_each(|d| *d *= 2.0);
        let (a, b) = (evaluate_bound(&p).unwrap(), evaluate_bound(&q).unwrap());
        assert!(rel(b.size_term, a.size_term / 2.0) <= 1e-14);
    }
}

fn compositions(d: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 1 {
        return vec![vec![d]];
    }
    (0..=d)
        .flat_map(|first| {
            compositions(d - first, k - 1).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

#[test]
fn size_spread_extremes() {
    let sigma = |sizes: &[usize]| {
        let p = BoundParams {
            round: 0,
            learning_rates: vec![],
            smoothness: 1.0,
            lipschitz: 1.0,
            grad_variance: 1.0,
            epochs: 1,
            optimality_gaps: vec![],
            loss_bound: 1.0,
            confidence: 0.1,
            stability: 0.0,
            client_sizes: sizes.iter().map(|&x| x as f64).collect(),
            kl_terms: vec![0.0; sizes.len()],
        };
        evaluate_bound(&p).unwrap().sigma_d2
    };
    for k in 1..=4 {
        for d in 1..=20 {
            let all = compositions(d, k);
            let values: Vec<f64> = all.iter().map(|c| sigma(c)).collect();
            let max = values.iter().cloned().fold(f64::MIN, f64::max);
            let min = values.iter().cloned().fold(f64::MAX, f64::min);
            assert!((min - 1.0 / (d as f64).sqrt()).abs() < 1e-14);
            let bound = (k as f64 / d as f64).sqrt();
            assert!(max <= bound + 1e-14);
            if d % k == 0 {
                assert!((max - bound).abs() < 1e-14);
                assert!((sigma(&vec![d / k; k]) - max).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn variational_gap_is_nonnegative() {
    let mut r = stream(7, Domain::Instance, 0, 0);
    let dist = |r: &mut rand_chacha::ChaCha8Rng, z: usize, zeros: bool| {
        let mut w: Vec<f64> = (0..z).map(|_| r.random_range(0.0..1.0)).collect();
        if zeros {
            let i = r.random_range(0..z);
            w[i] = 0.0;
        }
        if w.iter().sum::<f64>() == 0.0 {
            w[0] = 1.0;
        }
        let s: f64 = w.iter().sum();
        let mut p: Vec<f64> = w.iter().map(|x| x / s).collect();
        let drift = 1.0 - p.iter().sum::<f64>();
        let i = p.iter().position(|&x| x > 0.0).unwrap();
        p[i] += drift;
        LabelDistribution::new(p).unwrap()
    };
    let mut worst = f64::INFINITY;
    for i in 0..10_000 {
        let z = r.random_range(2..12);
        let pg = dist(&mut r, z, i % 3 == 0);
        let pk = dist(&mut r, z, false);
        let scale = r.random_range(0.1..50.0);
        let q: Vec<f64> = (0..z).map(|_| r.random_range(-scale..scale)).collect();
        worst = worst.min(dv_gap(&pg, &pk, &q).unwrap());
    }
    assert!(worst >= -1e-10, "{worst}");
}
