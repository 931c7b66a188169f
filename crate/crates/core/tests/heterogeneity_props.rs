use csra_core::heterogeneity::{
    client_divergences, estimate_distributions, kl_divergence, kl_filter, partition_hybrid, LabelDistribution,
};
use csra_core::rng::{stream, Domain};
use proptest::prelude::*;

fn distribution(weights: Vec<f64>) -> LabelDistribution {
    let total: f64 = weights.iter().sum();
    let mut p: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let drift: f64 = 1.0 - p.iter().sum::<f64>();
    p[0] += drift;
    LabelDistribution::new(p).unwrap()
}

proptest! {
    #[test]
    fn kl_is_nonnegative(w in prop::collection::vec((0.01f64..1.0, 0.01f64..1.0), 2..12)) {
        let p = distribution(w.iter().map(|x| x.0).collect());
        let q = distribution(w.iter().map(|x| x.1).collect());
        prop_assert!(kl_divergence(&p, &q).unwrap() >= -1e-15);
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn filter_grows_with_threshold(d in prop::collection::vec(0.0f64..2.0, 1..40), e in 0.0f64..2.0, extra in 0.0f64..1.0) {
        if let Ok(small) = kl_filter(&d, e) {
            let large = kl_filter(&d, e + extra).unwrap();
            prop_assert!(small.iter().all(|k| large.contains(k)));
        }
    }

    #[test]
    fn partition_conserves_every_category(
        seed in any::<u64>(),
        per_class in prop::collection::vec(0usize..60, 2..8),
        k in 1usize..25,
        frac in 0.0f64..1.0,
        alpha in 0.05f64..20.0,
    ) {
        let labels: Vec<usize> = per_class.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat(c).take(n)).collect();
        prop_assume!(!labels.is_empty());
        let spec = partition_hybrid(&labels, per_class.len(), k, frac, alpha, &mut stream(seed, Domain::Partition, 0, 0)).unwrap();
        let totals: Vec<u64> = per_class.iter().map(|&n| n as u64).collect();
        prop_assert_eq!(spec.category_totals(), totals);
        let mut all: Vec<usize> = spec.assignment.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        for (row, idx) in spec.label_counts.iter().zip(&spec.assignment) {
            for (c, &n) in row.iter().enumerate() {
                prop_assert_eq!(idx.iter().filter(|&&i| labels[i] == c).count() as u64, n);
            }
        }
    }
}

#[test]
fn larger_alpha_means_smaller_divergence() {
    let labels: Vec<usize> = (0..10).flat_map(|c| std::iter::repeat(c).take(400)).collect();
    let mean_kl = |alpha: f64| {
        let mut sum = 0.0;
        let mut n = 0.0;
        for seed in 0..20 {
            let spec = partition_hybrid(&labels, 10, 40, 0.0, alpha, &mut stream(seed, Domain::Partition, 0, 0)).unwrap();
            let est = estimate_distributions(&spec.label_counts, 0.5).unwrap();
            for d in client_divergences(&est.local, &est.global) {
                sum += d;
                n += 1.0;
            }
        }
        sum / n
    };
    let (a, b, c) = (mean_kl(0.1), mean_kl(1.0), mean_kl(10.0));
    assert!(a > b && b > c, "{a} {b} {c}");
}

#[test]
fn default_split_counts() {
    let labels: Vec<usize> = (0..10).flat_map(|c| std::iter::repeat(c).take(800)).collect();
    let spec = partition_hybrid(&labels, 10, 80, 0.1, 0.5, &mut stream(1, Domain::Partition, 0, 0)).unwrap();
    assert_eq!(spec.iid_clients, 8);
    for row in &spec.label_counts[..8] {
        assert!(row.iter().all(|&n| n == 10));
    }
    let est = estimate_distributions(&spec.label_counts, 0.0).unwrap();
    let div = client_divergences(&est.local, &est.global);
    assert!(div[..8].iter().all(|&d| d < 1e-12));
    assert!(div[8..].iter().any(|&d| d > 0.1));
}
