//! The TOML experiment document and its translation into core settings.
//!
//! Every key is optional. Missing keys take the library defaults, and unknown
//! keys are rejected so that typos do not silently fall back to a default.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use csra_core::baselines::{BaselineParams, GreedyOrientation};
use csra_core::csra::SolverParams;
use csra_core::fl::{BoundSettings, Method, RunParams, TaskConfig};
use csra_core::freq::DualParams;
use csra_core::scenario::{dbm_per_hz_to_watts_per_hz, Interval, LearningRateSchedule, SamplingRanges, SystemConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    pub client_ranges: ClientRanges,
    pub optimizer: OptimizerSection,
    pub fl: FlSection,
    pub bound: BoundSection,
    pub baselines: BaselinesSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LearningRate {
    Constant(f64),
    PerRound(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub num_clients: usize,
    /// Hz.
    pub total_bandwidth: f64,
    pub noise_density_dbm_per_hz: f64,
    /// Hz.
    pub carrier_freq: f64,
    pub path_loss_exp: f64,
    pub mean_channel_gain: f64,
    pub capacitance: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub kl_threshold: f64,
    pub data_budget: f64,
    pub local_epochs: u32,
    pub learning_rate: LearningRate,
    pub batch_size: usize,
    pub rng_seed: u64,
    /// Accepted for completeness of the parameter table; not used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_energy: Option<[f64; 2]>,
    /// Accepted for completeness of the parameter table; not used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

impl Default for SystemSection {
    fn default() -> Self {
        let d = SystemConfig::default();
        let learning_rate = match d.learning_rate {
            LearningRateSchedule::Constant(eta) => LearningRate::Constant(eta),
            LearningRateSchedule::PerRound(r) => LearningRate::PerRound(r),
        };
        SystemSection {
            num_clients: d.num_clients,
            total_bandwidth: d.total_bandwidth,
            noise_density_dbm_per_hz: -174.0,
            carrier_freq: d.carrier_freq,
            path_loss_exp: d.path_loss_exp,
            mean_channel_gain: d.mean_channel_gain,
            capacitance: d.capacitance,
            alpha1: d.alpha1,
            alpha2: d.alpha2,
            kl_threshold: d.kl_threshold,
            data_budget: d.data_budget,
            local_epochs: d.local_epochs,
            learning_rate,
            batch_size: d.batch_size,
            rng_seed: d.rng_seed,
            max_energy: None,
            mu: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientRanges {
    pub distance_m: [f64; 2],
    pub transmit_power_dbm: [f64; 2],
    pub max_frequency_hz: [f64; 2],
    pub cycles_per_bit: [f64; 2],
}

impl Default for ClientRanges {
    fn default() -> Self {
        let d = SamplingRanges::default();
        let pair = |i: Interval| [i.lo, i.hi];
        ClientRanges {
            distance_m: pair(d.distance_m),
            transmit_power_dbm: pair(d.transmit_power_dbm),
            max_frequency_hz: pair(d.max_frequency_hz),
            cycles_per_bit: pair(d.cycles_per_bit),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    pub rho_init_factor: f64,
    pub rho_growth: f64,
    pub rho_patience: usize,
    pub b_min: f64,
    pub dc_max_iters: usize,
    pub dc_tolerance: f64,
    pub subproblem_tolerance: f64,
    pub rounding_threshold: f64,
    pub integrality_tolerance: f64,
    pub local_refinement: bool,
    pub budget_retry: bool,
    pub dual_max_iters: usize,
    pub dual_step_scale: f64,
    pub dual_tolerance: f64,
    pub dual_initial_beta: f64,
    pub dual_initial_gamma: f64,
    /// Largest eligible set the brute-force reference will enumerate.
    pub oracle_limit: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let s = SolverParams::default();
        let d = DualParams::default();
        OptimizerSection {
            rho: s.rho,
            rho_init_factor: s.rho_init_factor,
            rho_growth: s.rho_growth,
            rho_patience: s.rho_patience,
            b_min: s.b_min,
            dc_max_iters: s.dc_max_iters,
            dc_tolerance: s.dc_tolerance,
            subproblem_tolerance: s.subproblem_tolerance,
            rounding_threshold: s.rounding_threshold,
            integrality_tolerance: s.integrality_tolerance,
            local_refinement: s.local_refinement,
            budget_retry: s.budget_retry,
            dual_max_iters: d.max_iters,
            dual_step_scale: d.step_scale,
            dual_tolerance: d.tolerance,
            dual_initial_beta: d.initial_beta,
            dual_initial_gamma: d.initial_gamma,
            oracle_limit: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlSection {
    pub classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub separation: f64,
    pub noise: f64,
    pub iid_fraction: f64,
    pub dirichlet_alpha: f64,
    pub smoothing: f64,
    /// Upload size in bits; parameters x 32 when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_bits: Option<f64>,
    pub loss_floor: f64,
    pub rounds: usize,
    pub methods: Vec<String>,
}

impl Default for FlSection {
    fn default() -> Self {
        let t = TaskConfig::default();
        FlSection {
            classes: t.classes,
            dim: t.dim,
            train_per_class: t.train_per_class,
            test_per_class: t.test_per_class,
            separation: t.separation,
            noise: t.noise,
            iid_fraction: t.iid_fraction,
            dirichlet_alpha: t.dirichlet_alpha,
            smoothing: t.smoothing,
            model_bits: t.model_bits,
            loss_floor: t.loss_floor,
            rounds: 100,
            methods: vec![Method::Csra.name().to_string()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundSection {
    /// Attach a bound evaluation to every training round.
    pub enabled: bool,
    pub smoothness: f64,
    pub lipschitz: f64,
    pub grad_variance: f64,
    pub loss_bound: f64,
    pub confidence: f64,
    pub stability: f64,
    /// Last round evaluated by the `bound` subcommand.
    pub round: usize,
    /// Loss gap assumed for every round by the `bound` subcommand.
    pub optimality_gap: f64,
}

impl Default for BoundSection {
    fn default() -> Self {
        let b = BoundSettings::default();
        BoundSection {
            enabled: true,
            smoothness: b.smoothness,
            lipschitz: b.lipschitz,
            grad_variance: b.grad_variance,
            loss_bound: b.loss_bound,
            confidence: b.confidence,
            stability: b.stability,
            round: 0,
            optimality_gap: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    LargestDecrease,
    LargestSigned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselinesSection {
    pub ga_population: usize,
    pub ga_generations: usize,
    pub ga_mutation_rate: f64,
    pub ga_tournament: usize,
    pub ga_elitism: usize,
    pub penalty: f64,
    pub bandwidth_quantum: f64,
    pub selection_count: usize,
    pub match_selection_count: bool,
    pub printed_fitness: bool,
    pub greedy_orientation: Orientation,
}

impl Default for BaselinesSection {
    fn default() -> Self {
        let b = BaselineParams::default();
        BaselinesSection {
            ga_population: b.ga_population,
            ga_generations: b.ga_generations,
            ga_mutation_rate: b.ga_mutation_rate,
            ga_tournament: b.ga_tournament,
            ga_elitism: b.ga_elitism,
            penalty: b.penalty,
            bandwidth_quantum: b.bandwidth_quantum,
            selection_count: b.selection_count,
            match_selection_count: b.match_selection_count,
            printed_fitness: b.printed_fitness,
            greedy_orientation: match b.greedy_orientation {
                GreedyOrientation::LargestDecrease => Orientation::LargestDecrease,
                GreedyOrientation::LargestSigned => Orientation::LargestSigned,
            },
        }
    }
}

/// Core settings resolved from a document.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub system: SystemConfig,
    pub ranges: SamplingRanges,
    pub task: TaskConfig,
    pub run: RunParams,
    pub methods: Vec<Method>,
    pub rounds: usize,
    pub oracle_limit: usize,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| anyhow!("invalid config: {e}"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    /// SHA-256 of the canonical serialization of the resolved document.
    pub fn hash(&self) -> Result<String> {
        let canonical = toml::to_string(self).context("serializing config")?;
        Ok(format!("{:x}", Sha256::digest(canonical.as_bytes())))
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let s = &self.system;
        let system = SystemConfig {
            num_clients: s.num_clients,
            total_bandwidth: s.total_bandwidth,
            noise_density: dbm_per_hz_to_watts_per_hz(s.noise_density_dbm_per_hz),
            carrier_freq: s.carrier_freq,
            path_loss_exp: s.path_loss_exp,
            mean_channel_gain: s.mean_channel_gain,
            capacitance: s.capacitance,
            alpha1: s.alpha1,
            alpha2: s.alpha2,
            kl_threshold: s.kl_threshold,
            data_budget: s.data_budget,
            local_epochs: s.local_epochs,
            learning_rate: match &s.learning_rate {
                LearningRate::Constant(eta) => LearningRateSchedule::Constant(*eta),
                LearningRate::PerRound(r) => LearningRateSchedule::PerRound(r.clone()),
            },
            batch_size: s.batch_size,
            rng_seed: s.rng_seed,
        };
        system.validate().context("[system]")?;

        let r = &self.client_ranges;
        let interval = |p: [f64; 2]| Interval::new(p[0], p[1]);
        let ranges = SamplingRanges {
            distance_m: interval(r.distance_m),
            transmit_power_dbm: interval(r.transmit_power_dbm),
            max_frequency_hz: interval(r.max_frequency_hz),
            cycles_per_bit: interval(r.cycles_per_bit),
            num_categories: self.fl.classes,
            ..SamplingRanges::default()
        };
        ranges.validate().context("[client_ranges]")?;

        let f = &self.fl;
        let b = &self.bound;
        let task = TaskConfig {
            classes: f.classes,
            dim: f.dim,
            train_per_class: f.train_per_class,
            test_per_class: f.test_per_class,
            separation: f.separation,
            noise: f.noise,
            iid_fraction: f.iid_fraction,
            dirichlet_alpha: f.dirichlet_alpha,
            smoothing: f.smoothing,
            model_bits: f.model_bits,
            loss_floor: f.loss_floor,
            bound: b.enabled.then_some(BoundSettings {
                smoothness: b.smoothness,
                lipschitz: b.lipschitz,
                grad_variance: b.grad_variance,
                loss_bound: b.loss_bound,
                confidence: b.confidence,
                stability: b.stability,
            }),
        };
        task.validate().context("[fl]")?;
        let methods = f
            .methods
            .iter()
            .map(|m| Method::parse(m).ok_or_else(|| anyhow!("[fl] methods: unknown method `{m}`")))
            .collect::<Result<Vec<_>>>()?;
        if methods.is_empty() {
            bail!("[fl] methods: at least one method is required");
        }
        if !(b.optimality_gap.is_finite()) {
            bail!("[bound] optimality_gap: must be finite");
        }

        let o = &self.optimizer;
        let solver = SolverParams {
            rho: o.rho,
            rho_init_factor: o.rho_init_factor,
            rho_growth: o.rho_growth,
            rho_patience: o.rho_patience,
            b_min: o.b_min,
            dc_max_iters: o.dc_max_iters,
            dc_tolerance: o.dc_tolerance,
            subproblem_tolerance: o.subproblem_tolerance,
            rounding_threshold: o.rounding_threshold,
            integrality_tolerance: o.integrality_tolerance,
            local_refinement: o.local_refinement,
            budget_retry: o.budget_retry,
        };
        solver.validate(system.num_clients).context("[optimizer]")?;
        let dual = DualParams {
            max_iters: o.dual_max_iters,
            step_scale: o.dual_step_scale,
            tolerance: o.dual_tolerance,
            initial_beta: o.dual_initial_beta,
            initial_gamma: o.dual_initial_gamma,
        };
        dual.validate().context("[optimizer]")?;

        let g = &self.baselines;
        let baselines = BaselineParams {
            ga_population: g.ga_population,
            ga_generations: g.ga_generations,
            ga_mutation_rate: g.ga_mutation_rate,
            ga_tournament: g.ga_tournament,
            ga_elitism: g.ga_elitism,
            penalty: g.penalty,
            bandwidth_quantum: g.bandwidth_quantum,
            selection_count: g.selection_count,
            match_selection_count: g.match_selection_count,
            printed_fitness: g.printed_fitness,
            greedy_orientation: match g.greedy_orientation {
                Orientation::LargestDecrease => GreedyOrientation::LargestDecrease,
                Orientation::LargestSigned => GreedyOrientation::LargestSigned,
            },
        };
        baselines.validate().context("[baselines]")?;

        Ok(Resolved {
            system,
            ranges,
            task,
            run: RunParams { solver, dual, baselines },
            methods,
            rounds: f.rounds,
            oracle_limit: o.oracle_limit,
        })
    }
}
