//! Label partitioning, distribution estimates and KL-based eligibility.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::math;

/// Category proportions summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution(Vec<f64>);

impl LabelDistribution {
    pub fn new(proportions: Vec<f64>) -> Result<Self> {
        if proportions.is_empty() {
            return Err(Error::shape("distribution needs at least one category"));
        }
        if proportions.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::domain("proportions must lie in [0, 1]"));
        }
        let total: f64 = proportions.iter().sum();
        if math::abs(total - 1.0) > 1e-12 {
            return Err(Error::domain(format!("proportions sum to {total}, not 1")));
        }
        Ok(LabelDistribution(proportions))
    }

    /// Empirical proportions `d_z / d`.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        Self::from_counts_smoothed(counts, 0.0)
    }

    /// Proportions after adding `pseudo` to every category count.
    pub fn from_counts_smoothed(counts: &[u64], pseudo: f64) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::shape("distribution needs at least one category"));
        }
        if !(pseudo >= 0.0) || !pseudo.is_finite() {
            return Err(Error::domain("smoothing pseudo-count must be finite and >= 0"));
        }
        let total = counts.iter().sum::<u64>() as f64 + pseudo * counts.len() as f64;
        if total == 0.0 {
            return Err(Error::domain("cannot normalize an empty count vector"));
        }
        Ok(LabelDistribution(
            counts.iter().map(|&c| (c as f64 + pseudo) / total).collect(),
        ))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn has_full_support(&self) -> bool {
        self.0.iter().all(|&p| p > 0.0)
    }
}

/// Client-by-category sample counts together with the sample assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    /// `label_counts[k][z]` samples of category `z` held by client `k`.
    pub label_counts: Vec<Vec<u64>>,
    /// Indices into the global label list owned by each client.
    pub assignment: Vec<Vec<usize>>,
    pub iid_clients: usize,
    pub iid_fraction: f64,
    pub dirichlet_alpha: f64,
}

impl PartitionSpec {
    pub fn num_clients(&self) -> usize {
        self.label_counts.len()
    }

    pub fn num_categories(&self) -> usize {
        self.label_counts.first().map_or(0, Vec::len)
    }

    pub fn dataset_sizes(&self) -> Vec<u64> {
        self.label_counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn category_totals(&self) -> Vec<u64> {
        let mut totals = vec![0u64; self.num_categories()];
        for row in &self.label_counts {
            for (t, &c) in totals.iter_mut().zip(row) {
                *t += c;
            }
        }
        totals
    }

    /// `(client, category, count)` rows in client-major order.
    pub fn table(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.label_counts
            .iter()
            .enumerate()
            .flat_map(|(k, row)| row.iter().enumerate().map(move |(z, &c)| (k, z, c)))
    }
}

fn dirichlet_weights<R: Rng + ?Sized>(alpha: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated positive");
    let mut w: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 && total.is_finite() {
        w.iter_mut().for_each(|x| *x /= total);
    } else {
        // All draws underflowed (tiny alpha): the limit is a point mass.
        w.iter_mut().for_each(|x| *x = 0.0);
        w[rng.random_range(0..n)] = 1.0;
    }
    w
}

/// Splits `total` by `weights` with largest-remainder rounding.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|&x| math::floor(x) as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| {
        let fi = exact[i] - counts[i] as f64;
        let fj = exact[j] - counts[j] as f64;
        fj.total_cmp(&fi).then(i.cmp(&j))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Hybrid split: `floor(iid_fraction * K)` clients receive an equal share of
/// every category, the rest split what remains of each category by
/// Dirichlet(`dirichlet_alpha`) weights.
///
/// `labels[i]` is the category of global sample `i`; categories are
/// `0..num_categories`.
pub fn partition_hybrid<R: Rng + ?Sized>(
    labels: &[usize],
    num_categories: usize,
    num_clients: usize,
    iid_fraction: f64,
    dirichlet_alpha: f64,
    rng: &mut R,
) -> Result<PartitionSpec> {
    if num_clients == 0 {
        return Err(Error::domain("partition needs at least one client"));
    }
    if labels.is_empty() {
        return Err(Error::domain("partition needs at least one sample"));
    }
    if !(dirichlet_alpha > 0.0) || !dirichlet_alpha.is_finite() {
        return Err(Error::domain(format!(
            "dirichlet_alpha must be finite and > 0, got {dirichlet_alpha}"
        )));
    }
    if !(0.0..=1.0).contains(&iid_fraction) {
        return Err(Error::domain(format!("iid_fraction {iid_fraction} outside [0, 1]")));
    }
    if let Some(&bad) = labels.iter().find(|&&z| z >= num_categories) {
        return Err(Error::domain(format!(
            "label {bad} outside 0..{num_categories}"
        )));
    }

    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); num_categories];
    for (i, &z) in labels.iter().enumerate() {
        pools[z].push(i);
    }
    for pool in &mut pools {
        pool.shuffle(rng);
    }

    let iid_clients = (math::floor(iid_fraction * num_clients as f64 + 1e-9) as usize).min(num_clients);
    let skewed = num_clients - iid_clients;
    let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); num_clients];
    let mut counts = vec![vec![0u64; num_categories]; num_clients];

    for (z, pool) in pools.iter().enumerate() {
        let mut next = 0usize;
        let mut give = |k: usize, n: usize, assignment: &mut Vec<Vec<usize>>| {
            assignment[k].extend_from_slice(&pool[next..next + n]);
            counts[k][z] += n as u64;
            next += n;
        };
        let share = pool.len() / num_clients;
        for k in 0..iid_clients {
            give(k, share, &mut assignment);
        }
        let rest = pool.len() - share * iid_clients;
        if skewed == 0 {
            // Fully IID: hand the remainder out round-robin, rotating by category.
            for j in 0..rest {
                give((z + j) % num_clients, 1, &mut assignment);
            }
        } else {
            let w = dirichlet_weights(dirichlet_alpha, skewed, rng);
            for (j, n) in apportion(rest, &w).into_iter().enumerate() {
                give(iid_clients + j, n, &mut assignment);
            }
        }
    }
    for a in &mut assignment {
        a.sort_unstable();
    }
    Ok(PartitionSpec {
        label_counts: counts,
        assignment,
        iid_clients,
        iid_fraction,
        dirichlet_alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EstimationWarning {
    pub client: usize,
    pub reason: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    /// `None` for clients without data.
    pub local: Vec<Option<LabelDistribution>>,
    pub global: LabelDistribution,
    pub warnings: Vec<EstimationWarning>,
}

/// Local proportions per client and their size-weighted average.
///
/// `smoothing` adds a pseudo-count to every local category (0 disables it).
pub fn estimate_distributions(label_counts: &[Vec<u64>], smoothing: f64) -> Result<Estimates> {
    let z = label_counts.first().map_or(0, Vec::len);
    if z == 0 {
        return Err(Error::shape("no clients or no categories"));
    }
    if label_counts.iter().any(|r| r.len() != z) {
        return Err(Error::shape("clients disagree on the number of categories"));
    }
    let mut local = Vec::with_capacity(label_counts.len());
    let mut warnings = Vec::new();
    let mut global = vec![0.0; z];
    let total: u64 = label_counts.iter().flatten().sum();
    if total == 0 {
        return Err(Error::domain("no client holds any data"));
    }
    for (k, row) in label_counts.iter().enumerate() {
        let d_k: u64 = row.iter().sum();
        if d_k == 0 {
            warnings.push(EstimationWarning {
                client: k,
                reason: "client holds no samples; excluded",
            });
            local.push(None);
            continue;
        }
        let raw = LabelDistribution::from_counts(row)?;
        let weight = d_k as f64 / total as f64;
        for (g, &p) in global.iter_mut().zip(raw.as_slice()) {
            *g += weight * p;
        }
        local.push(Some(if smoothing > 0.0 {
            LabelDistribution::from_counts_smoothed(row, smoothing)?
        } else {
            raw
        }));
    }
    // Drop accumulated rounding so the invariant holds to the last ulp class.
    let s: f64 = global.iter().sum();
    global.iter_mut().for_each(|g| *g /= s);
    Ok(Estimates {
        local,
        global: LabelDistribution(global),
        warnings,
    })
}

/// `sum_z p_z ln(p_z / q_z)` in nats.
pub fn kl_divergence(p: &LabelDistribution, q: &LabelDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::shape(format!(
            "distributions over {} and {} categories",
            p.len(),
            q.len()
        )));
    }
    let mut d = 0.0;
    for (z, (&pz, &qz)) in p.as_slice().iter().zip(q.as_slice()).enumerate() {
        if pz == 0.0 {
            continue;
        }
        if qz == 0.0 {
            return Err(Error::DivergenceUndefined { category: z, mass: pz });
        }
        d += pz * math::ln(pz / qz);
    }
    Ok(d.max(0.0))
}

/// `D(global || local_k)` per client; undefined or missing entries are +inf.
pub fn client_divergences(local: &[Option<LabelDistribution>], global: &LabelDistribution) -> Vec<f64> {
    local
        .iter()
        .map(|p| match p {
            Some(p) => kl_divergence(global, p).unwrap_or(f64::INFINITY),
            None => f64::INFINITY,
        })
        .collect()
}

/// Clients whose divergence does not exceed `threshold`, in index order.
pub fn kl_filter(divergences: &[f64], threshold: f64) -> Result<Vec<usize>> {
    let eligible: Vec<usize> = divergences
        .iter()
        .enumerate()
        .filter(|(_, &d)| d <= threshold)
        .map(|(k, _)| k)
        .collect();
    if eligible.is_empty() {
        return Err(Error::NoEligibleClients { threshold });
    }
    Ok(eligible)
}
