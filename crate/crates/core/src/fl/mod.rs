//! Federated training of a softmax-regression classifier on synthetic
//! non-IID data, with per-round selection, allocation and cost accounting.

use alloc::vec;
use alloc::vec::Vec;

use crate::baselines::{
    ga_select, greedy_allocate, pow_select, random_allocate, random_select, Allocation, BaselineParams,
};
use crate::csra::{select_round, solve_round, verify_feasibility, FeasibilityReport, SolverParams};
use crate::decision::RoundDecision;
use crate::error::{Error, Result};
use crate::freq::DualParams;
use crate::genbound::{evaluate_bound, BoundBreakdown, BoundParams};
use crate::heterogeneity::{client_divergences, estimate_distributions, partition_hybrid, PartitionSpec};
use crate::rng::{stream, Domain};
use crate::scenario::{sample_scenario, SamplingRanges, Scenario, SystemConfig};
use crate::wireless::{round_cost, CostReport};

pub mod data;
pub mod model;

pub use data::{Dataset, GaussianMixture};
pub use model::{aggregate, evaluate, local_update, Evaluation, ModelParams};

/// Bits per model parameter in the upload-size estimate.
pub const BITS_PER_PARAMETER: f64 = 32.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Csra,
    CsGreedy,
    CsRandom,
    GaGreedy,
    GaRandom,
    Pow,
    FedAvg,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Csra,
        Method::CsGreedy,
        Method::CsRandom,
        Method::GaGreedy,
        Method::GaRandom,
        Method::Pow,
        Method::FedAvg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Csra => "csra",
            Method::CsGreedy => "cs-greedy",
            Method::CsRandom => "cs-random",
            Method::GaGreedy => "ga-greedy",
            Method::GaRandom => "ga-random",
            Method::Pow => "pow",
            Method::FedAvg => "fedavg",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }

    fn id(self) -> u64 {
        self as u64
    }
}

impl core::fmt::Display for Method {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Constants fed to the generalization bound each round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSettings {
    pub smoothness: f64,
    pub lipschitz: f64,
    pub grad_variance: f64,
    pub loss_bound: f64,
    pub confidence: f64,
    pub stability: f64,
}

impl Default for BoundSettings {
    fn default() -> Self {
        BoundSettings {
            smoothness: 1.0,
            lipschitz: 1.0,
            grad_variance: 1.0,
            loss_bound: 10.0,
            confidence: 0.05,
            stability: 0.01,
        }
    }
}

/// The synthetic learning task and how it is split across clients.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    pub classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Typical distance of class centres from the origin.
    pub separation: f64,
    pub noise: f64,
    pub iid_fraction: f64,
    pub dirichlet_alpha: f64,
    /// Additive pseudo-count for the label distribution estimates.
    pub smoothing: f64,
    /// Upload size in bits; `None` means parameters x 32.
    pub model_bits: Option<f64>,
    /// Subtracted from the training loss to form the bound's loss gap.
    pub loss_floor: f64,
    pub bound: Option<BoundSettings>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            classes: 10,
            dim: 32,
            train_per_class: 4000,
            test_per_class: 200,
            separation: 2.0,
            noise: 1.0,
            iid_fraction: 0.1,
            dirichlet_alpha: 0.5,
            smoothing: 0.0,
            model_bits: None,
            loss_floor: 0.0,
            bound: Some(BoundSettings::default()),
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::config("classes", "must be at least 2"));
        }
        if self.dim == 0 {
            return Err(Error::config("dim", "must be at least 1"));
        }
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(Error::config("train_per_class", "train and test sets must be nonempty"));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::config("separation", "must be finite and >= 0"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::config("noise", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.iid_fraction) {
            return Err(Error::config("iid_fraction", "must lie in [0, 1]"));
        }
        if !(self.dirichlet_alpha > 0.0 && self.dirichlet_alpha.is_finite()) {
            return Err(Error::config("dirichlet_alpha", "must be finite and > 0"));
        }
        if !(self.smoothing >= 0.0) {
            return Err(Error::config("smoothing", "must be >= 0"));
        }
        if let Some(b) = self.model_bits {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::config("model_bits", "must be finite and > 0"));
            }
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.classes * self.dim + self.classes
    }

    pub fn upload_bits(&self) -> f64 {
        self.model_bits
            .unwrap_or(self.parameter_count() as f64 * BITS_PER_PARAMETER)
    }
}

/// Shared environment of an experiment: radio scenario, partitioned
/// training data, test set and client divergences.
#[derive(Debug, Clone, PartialEq)]
pub struct Federation {
    scenario: Scenario,
    train: Dataset,
    test: Dataset,
    partition: PartitionSpec,
    divergences: Vec<f64>,
    task: TaskConfig,
}

impl Federation {
    /// Samples data, partitions it and draws client profiles, all from
    /// `config.rng_seed`.
    pub fn build(config: &SystemConfig, ranges: &SamplingRanges, task: &TaskConfig) -> Result<Self> {
        config.validate()?;
        task.validate()?;
        let seed = config.rng_seed;
        let mix = GaussianMixture::sample_means(
            task.classes,
            task.dim,
            task.separation,
            task.noise,
            &mut stream(seed, Domain::Dataset, 0, 0),
        )?;
        let train = mix.sample(&vec![task.train_per_class; task.classes], &mut stream(seed, Domain::Dataset, 1, 0))?;
        let test = mix.sample(&vec![task.test_per_class; task.classes], &mut stream(seed, Domain::Dataset, 2, 0))?;
        let partition = partition_hybrid(
            train.labels(),
            task.classes,
            config.num_clients,
            task.iid_fraction,
            task.dirichlet_alpha,
            &mut stream(seed, Domain::Partition, 0, 0),
        )?;
        let ranges = SamplingRanges {
            num_categories: task.classes,
            ..ranges.clone()
        };
        let scenario = sample_scenario(config, &ranges, seed)?
            .with_label_counts(&partition.label_counts)?
            .with_model_bits(task.upload_bits())?;
        let est = estimate_distributions(&partition.label_counts, task.smoothing)?;
        let divergences = client_divergences(&est.local, &est.global);
        Ok(Federation {
            scenario,
            train,
            test,
            partition,
            divergences,
            task: task.clone(),
        })
    }

    /// Same clients and data under another system configuration, for
    /// paired sweeps over thresholds, bandwidth or weights.
    pub fn with_config(&self, config: SystemConfig) -> Result<Self> {
        if config.num_clients != self.scenario.num_clients() {
            return Err(Error::config("num_clients", "cannot change in a paired sweep"));
        }
        let mut out = self.clone();
        out.scenario = self.scenario.clone().with_config(config)?;
        Ok(out)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }

    pub fn test(&self) -> &Dataset {
        &self.test
    }

    pub fn partition(&self) -> &PartitionSpec {
        &self.partition
    }

    pub fn divergences(&self) -> &[f64] {
        &self.divergences
    }

    pub fn task(&self) -> &TaskConfig {
        &self.task
    }

    pub fn initial_model(&self) -> ModelParams {
        ModelParams::zeros(self.task.dim, self.task.classes)
    }

    /// Mean training loss over every client's samples.
    pub fn train_loss(&self, model: &ModelParams) -> f64 {
        evaluate(model, &self.train).loss
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunParams {
    pub solver: SolverParams,
    pub dual: DualParams,
    pub baselines: BaselineParams,
}

/// Global model and running totals of one method's run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub model: ModelParams,
    pub round: usize,
    /// Training loss of `model`.
    pub train_loss: f64,
    pub cumulative_latency: f64,
    pub cumulative_energy: f64,
    pub cumulative_utility: f64,
    learning_rates: Vec<f64>,
    gaps: Vec<f64>,
}

impl RunState {
    pub fn new(fed: &Federation) -> Self {
        let model = fed.initial_model();
        RunState {
            train_loss: fed.train_loss(&model),
            model,
            round: 0,
            cumulative_latency: 0.0,
            cumulative_energy: 0.0,
            cumulative_utility: 0.0,
            learning_rates: Vec::new(),
            gaps: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub round: usize,
    pub method: Method,
    pub selection: Vec<usize>,
    pub decision: RoundDecision,
    pub cost: CostReport,
    pub feasibility: FeasibilityReport,
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub test_loss: f64,
    pub bound: Option<BoundBreakdown>,
    pub cumulative_latency: f64,
    pub cumulative_energy: f64,
    pub cumulative_utility: f64,
}

fn clients_with_data(scenario: &Scenario) -> Vec<usize> {
    (0..scenario.num_clients())
        .filter(|&k| scenario.client(k).dataset_size > 0)
        .collect()
}

/// Full bandwidth split evenly, CPUs at their maximum.
fn uniform_allocation(selection: &[bool], scenario: &Scenario) -> Allocation {
    let m = selection.iter().filter(|&&s| s).count().max(1) as f64;
    let mut alloc = Allocation {
        bandwidth: vec![0.0; selection.len()],
        frequency: vec![0.0; selection.len()],
    };
    for (k, _) in selection.iter().enumerate().filter(|(_, &s)| s) {
        alloc.bandwidth[k] = 1.0 / m;
        alloc.frequency[k] = scenario.client(k).max_frequency;
    }
    alloc
}

fn allocate(method: Method, selection: &[bool], fed: &Federation, t: usize, params: &RunParams) -> Result<RoundDecision> {
    let scenario = fed.scenario();
    if !selection.iter().any(|&s| s) {
        return Ok(RoundDecision::empty(selection.len()));
    }
    let seed = scenario.seed();
    let alloc = match method {
        Method::CsGreedy | Method::GaGreedy => greedy_allocate(
            selection,
            scenario,
            t,
            params.baselines.bandwidth_quantum,
            params.baselines.greedy_orientation,
        )?,
        Method::CsRandom | Method::GaRandom => random_allocate(
            selection,
            scenario,
            &mut stream(seed, Domain::Allocation, method.id(), t as u64),
        )?,
        _ => uniform_allocation(selection, scenario),
    };
    alloc.into_decision(selection, scenario, t)
}

fn selection_target(fed: &Federation, t: usize, params: &RunParams) -> usize {
    if params.baselines.match_selection_count {
        if let Ok(sel) = select_round(fed.scenario(), t, fed.divergences(), &params.solver) {
            if sel.decision.selected_count() > 0 {
                return sel.decision.selected_count();
            }
        }
    }
    params.baselines.selection_count
}

fn choose(method: Method, fed: &Federation, state: &RunState, params: &RunParams) -> Result<RoundDecision> {
    let scenario = fed.scenario();
    let cfg = scenario.config();
    let t = state.round;
    let k = scenario.num_clients();
    let seed = scenario.seed();
    let selection: Vec<bool> = match method {
        Method::Csra => {
            return Ok(solve_round(scenario, t, fed.divergences(), &params.solver, &params.dual)?.decision);
        }
        Method::CsGreedy | Method::CsRandom => {
            let sel = select_round(scenario, t, fed.divergences(), &params.solver)?;
            (0..k).map(|i| sel.decision.is_selected(i)).collect()
        }
        Method::GaGreedy | Method::GaRandom => {
            let sizes: Vec<f64> = scenario.clients().iter().map(|c| c.dataset_size as f64).collect();
            ga_select(
                fed.divergences(),
                &sizes,
                cfg.kl_threshold,
                cfg.data_budget,
                &params.baselines,
                &mut stream(seed, Domain::Genetic, method.id(), t as u64),
            )?
            .selection
        }
        Method::Pow | Method::FedAvg => {
            let candidates = clients_with_data(scenario);
            let m = selection_target(fed, t, params).min(candidates.len());
            let picked = if method == Method::Pow {
                let losses: Vec<f64> = candidates
                    .iter()
                    .map(|&i| state.model.mean_loss(fed.train(), &fed.partition().assignment[i]))
                    .collect();
                pow_select(&losses, m)?
            } else {
                random_select(
                    candidates.len(),
                    m,
                    &mut stream(seed, Domain::Selection, method.id(), t as u64),
                )?
            };
            let mut sel = vec![false; k];
            for (j, &c) in candidates.iter().enumerate() {
                sel[c] = picked[j];
            }
            sel
        }
    };
    allocate(method, &selection, fed, t, params)
}

/// One training round: select and allocate, train the selected clients
/// locally, aggregate, evaluate and account the round's cost.
pub fn run_round(fed: &Federation, state: &mut RunState, method: Method, params: &RunParams) -> Result<RoundTrace> {
    let t = state.round;
    let mut inner = || -> Result<RoundTrace> {
        let scenario = fed.scenario();
        let cfg = scenario.config();
        let decision = choose(method, fed, state, params)?;
        let selection: Vec<usize> = decision.selected().collect();
        let lr = cfg.learning_rate.rate(t);

        let mut models = Vec::with_capacity(selection.len());
        let mut sizes = Vec::with_capacity(selection.len());
        for &k in &selection {
            let idx = &fed.partition().assignment[k];
            if idx.is_empty() {
                continue;
            }
            let mut rng = stream(scenario.seed(), Domain::LocalUpdate, k as u64, t as u64);
            models.push(local_update(&state.model, fed.train(), idx, lr, cfg.local_epochs, cfg.batch_size, &mut rng)?);
            sizes.push(idx.len() as f64);
        }
        let model = if models.is_empty() {
            state.model.clone()
        } else {
            aggregate(&models, &sizes)?
        };

        let cost = round_cost(&decision, scenario, t, cfg.alpha1, cfg.alpha2)?;
        let feasibility = verify_feasibility(&decision, scenario, t, fed.divergences());
        let test = evaluate(&model, fed.test());
        let train_loss = fed.train_loss(&model);

        let mut learning_rates = state.learning_rates.clone();
        learning_rates.push(lr);
        let mut gaps = state.gaps.clone();
        gaps.push((state.train_loss - fed.task().loss_floor).max(0.0));
        let bound = fed.task().bound.filter(|_| !selection.is_empty()).and_then(|b| {
            evaluate_bound(&BoundParams {
                round: t + 1,
                learning_rates: learning_rates.clone(),
                smoothness: b.smoothness,
                lipschitz: b.lipschitz,
                grad_variance: b.grad_variance,
                epochs: cfg.local_epochs,
                optimality_gaps: gaps.clone(),
                loss_bound: b.loss_bound,
                confidence: b.confidence,
                stability: b.stability,
                client_sizes: selection.iter().map(|&k| scenario.client(k).dataset_size as f64).collect(),
                kl_terms: selection.iter().map(|&k| fed.divergences()[k]).collect(),
            })
            .ok()
        });

        state.model = model;
        state.train_loss = train_loss;
        state.learning_rates = learning_rates;
        state.gaps = gaps;
        state.cumulative_latency += cost.round_latency;
        state.cumulative_energy += cost.round_energy;
        state.cumulative_utility += cost.utility;
        Ok(RoundTrace {
            round: t,
            method,
            selection,
            decision,
            feasibility,
            cost,
            train_loss,
            test_accuracy: test.accuracy,
            test_loss: test.loss,
            bound,
            cumulative_latency: state.cumulative_latency,
            cumulative_energy: state.cumulative_energy,
            cumulative_utility: state.cumulative_utility,
        })
    };
    let trace = inner().map_err(|e| e.at_round(t))?;
    state.round += 1;
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub rounds: usize,
    pub final_accuracy: f64,
    pub cumulative_latency: f64,
    pub cumulative_energy: f64,
    pub cumulative_utility: f64,
}

/// Traces of one method. `error` holds the failure that stopped the run
/// early, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub method: Method,
    pub initial: Evaluation,
    pub traces: Vec<RoundTrace>,
    pub error: Option<Error>,
}

impl MethodRun {
    pub fn summary(&self) -> RunSummary {
        match self.traces.last() {
            Some(last) => RunSummary {
                rounds: self.traces.len(),
                final_accuracy: last.test_accuracy,
                cumulative_latency: last.cumulative_latency,
                cumulative_energy: last.cumulative_energy,
                cumulative_utility: last.cumulative_utility,
            },
            None => RunSummary {
                rounds: 0,
                final_accuracy: self.initial.accuracy,
                cumulative_latency: 0.0,
                cumulative_energy: 0.0,
                cumulative_utility: 0.0,
            },
        }
    }
}

/// Runs `rounds` rounds of one method from the initial model.
pub fn run_method(fed: &Federation, method: Method, rounds: usize, params: &RunParams) -> MethodRun {
    let mut state = RunState::new(fed);
    let initial = evaluate(&state.model, fed.test());
    let mut traces = Vec::with_capacity(rounds);
    let mut error = None;
    for _ in 0..rounds {
        match run_round(fed, &mut state, method, params) {
            Ok(tr) => traces.push(tr),
            Err(e) => {
                error = Some(e);
                break;
            }
        }
    }
    MethodRun {
        method,
        initial,
        traces,
        error,
    }
}

/// Every method on the same federation; a failing method does not stop
/// the others.
pub fn run_experiment(fed: &Federation, methods: &[Method], rounds: usize, params: &RunParams) -> Vec<MethodRun> {
    methods.iter().map(|&m| run_method(fed, m, rounds, params)).collect()
}
