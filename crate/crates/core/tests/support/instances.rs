use csra_core::rng::{stream, Domain};
use csra_core::scenario::{sample_scenario, SamplingRanges, Scenario, SystemConfig};
use rand::Rng;

/// Seeded `k`-client round instance over the default sampling ranges, with
/// an upload size drawn log-uniformly from `[1e4, 2e6]` bits and a data
/// budget of 40% of the total data.
pub fn round_instance(seed: u64, k: usize) -> Scenario {
    let mut r = stream(seed, Domain::Instance, k as u64, 0);
    let bits = 10f64.powf(r.random_range(4.0..6.3));
    let cfg = SystemConfig {
        num_clients: k,
        data_budget: 0.0,
        ..SystemConfig::default()
    };
    let s = sample_scenario(&cfg, &SamplingRanges::default(), seed)
        .unwrap()
        .with_model_bits(bits)
        .unwrap();
    let total: f64 = s.clients().iter().map(|c| c.dataset_size as f64).sum();
    let cfg = SystemConfig {
        data_budget: (0.4 * total).floor(),
        ..cfg
    };
    s.with_config(cfg).unwrap()
}

/// Same instance with both trade-off weights replaced.
pub fn reweighted(s: &Scenario, alpha1: f64, alpha2: f64) -> Scenario {
    let cfg = SystemConfig {
        alpha1,
        alpha2,
        ..s.config().clone()
    };
    s.clone().with_config(cfg).unwrap()
}
