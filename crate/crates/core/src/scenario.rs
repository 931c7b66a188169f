//! Simulated wireless cell: system constants, client profiles and channels.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::math;
use crate::rng::{self, Domain};
use crate::wireless;

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    math::powf(10.0, dbm / 10.0) * 1e-3
}

/// Converts a spectral density in dBm/Hz to W/Hz.
pub fn dbm_per_hz_to_watts_per_hz(dbm_per_hz: f64) -> f64 {
    dbm_to_watts(dbm_per_hz)
}

#[derive(Debug, Clone, PartialEq)]
pub enum LearningRateSchedule {
    Constant(f64),
    /// One rate per round; rounds past the end reuse the last entry.
    PerRound(Vec<f64>),
}

impl LearningRateSchedule {
    pub fn rate(&self, round: usize) -> f64 {
        match self {
            LearningRateSchedule::Constant(eta) => *eta,
            LearningRateSchedule::PerRound(rates) => {
                rates[round.min(rates.len().saturating_sub(1))]
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |eta: f64| eta.is_finite() && eta >= 0.0;
        match self {
            LearningRateSchedule::Constant(eta) if ok(*eta) => Ok(()),
            LearningRateSchedule::PerRound(r) if !r.is_empty() && r.iter().all(|&e| ok(e)) => {
                Ok(())
            }
            _ => Err(Error::config(
                "learning_rate",
                "rates must be finite, nonnegative and nonempty",
            )),
        }
    }
}

/// Cell-wide constants. All quantities are SI.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub num_clients: usize,
    /// Total uplink bandwidth B in Hz.
    pub total_bandwidth: f64,
    /// Noise spectral density N0 in W/Hz.
    pub noise_density: f64,
    /// Carrier frequency in Hz.
    pub carrier_freq: f64,
    pub path_loss_exp: f64,
    /// Mean of the small-scale fading power.
    pub mean_channel_gain: f64,
    /// Effective switched capacitance ε.
    pub capacitance: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// KL eligibility threshold in nats.
    pub kl_threshold: f64,
    /// Minimum number of samples held by the selected clients.
    pub data_budget: f64,
    pub local_epochs: u32,
    pub learning_rate: LearningRateSchedule,
    pub batch_size: usize,
    pub rng_seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            num_clients: 80,
            total_bandwidth: 2e6,
            noise_density: dbm_per_hz_to_watts_per_hz(-174.0),
            carrier_freq: 2.4e9,
            path_loss_exp: 2.7,
            mean_channel_gain: 1.0,
            capacitance: 1e-27,
            alpha1: 1.0,
            alpha2: 1.0,
            kl_threshold: 0.2,
            data_budget: 2000.0,
            local_epochs: 10,
            learning_rate: LearningRateSchedule::Constant(0.05),
            batch_size: 32,
            rng_seed: 0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be finite and > 0, got {v}")))
            }
        };
        let nonneg = |field: &'static str, v: f64| {
            if !v.is_nan() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be >= 0, got {v}")))
            }
        };
        if self.num_clients == 0 {
            return Err(Error::config("num_clients", "must be at least 1"));
        }
        positive("total_bandwidth", self.total_bandwidth)?;
        positive("noise_density", self.noise_density)?;
        positive("carrier_freq", self.carrier_freq)?;
        positive("path_loss_exp", self.path_loss_exp)?;
        positive("mean_channel_gain", self.mean_channel_gain)?;
        positive("capacitance", self.capacitance)?;
        nonneg("alpha1", self.alpha1)?;
        nonneg("alpha2", self.alpha2)?;
        if !(self.alpha1 + self.alpha2 > 0.0) || !(self.alpha1 + self.alpha2).is_finite() {
            return Err(Error::config("alpha1", "alpha1 + alpha2 must be finite and > 0"));
        }
        nonneg("kl_threshold", self.kl_threshold)?;
        nonneg("data_budget", self.data_budget)?;
        if !self.data_budget.is_finite() {
            return Err(Error::config("data_budget", "must be finite"));
        }
        if self.local_epochs == 0 {
            return Err(Error::config("local_epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        self.learning_rate.validate()
    }
}

/// Closed interval used for uniform sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub const fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    fn check(&self, field: &'static str, positive: bool) -> Result<()> {
        if !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::config(field, "bounds must be finite"));
        }
        if self.lo > self.hi {
            return Err(Error::config(
                field,
                format!("inverted interval [{}, {}]", self.lo, self.hi),
            ));
        }
        if positive && self.lo <= 0.0 {
            return Err(Error::config(field, "lower bound must be > 0"));
        }
        Ok(())
    }

    /// Uniform draw on the closed interval; zero-width intervals return `lo`.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

/// Per-field sampling intervals for client profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingRanges {
    pub distance_m: Interval,
    pub transmit_power_dbm: Interval,
    pub max_frequency_hz: Interval,
    pub cycles_per_bit: Interval,
    pub model_bits: Interval,
    /// Inclusive range of per-client sample counts.
    pub dataset_size: (u64, u64),
    pub num_categories: usize,
}

impl Default for SamplingRanges {
    fn default() -> Self {
        SamplingRanges {
            distance_m: Interval::new(200.0, 250.0),
            transmit_power_dbm: Interval::new(20.0, 33.0),
            max_frequency_hz: Interval::new(2e6, 5e6),
            cycles_per_bit: Interval::new(1.0, 10.0),
            model_bits: Interval::point(10_560.0),
            dataset_size: (200, 1000),
            num_categories: 10,
        }
    }
}

impl SamplingRanges {
    pub fn validate(&self) -> Result<()> {
        self.distance_m.check("distance_m", true)?;
        self.transmit_power_dbm.check("transmit_power_dbm", false)?;
        self.max_frequency_hz.check("max_frequency_hz", true)?;
        self.cycles_per_bit.check("cycles_per_bit", true)?;
        self.model_bits.check("model_bits", true)?;
        let (lo, hi) = self.dataset_size;
        if lo > hi {
            return Err(Error::config(
                "dataset_size",
                format!("inverted interval [{lo}, {hi}]"),
            ));
        }
        if self.num_categories == 0 {
            return Err(Error::config("num_categories", "must be at least 1"));
        }
        Ok(())
    }
}

/// Static physical and data parameters of one client.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientProfile {
    pub dataset_size: u64,
    pub cycles_per_bit: f64,
    /// Transmit power in W.
    pub transmit_power: f64,
    pub max_frequency: f64,
    pub model_bits: f64,
    pub distance: f64,
    /// Sample count per label category; sums to `dataset_size`.
    pub label_counts: Vec<u64>,
}

impl ClientProfile {
    pub fn validate(&self, index: usize) -> Result<()> {
        let fields = [
            ("cycles_per_bit", self.cycles_per_bit),
            ("transmit_power", self.transmit_power),
            ("max_frequency", self.max_frequency),
            ("model_bits", self.model_bits),
            ("distance", self.distance),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(
                    "client_profile",
                    format!("client {index}: {name} must be finite and > 0, got {v}"),
                ));
            }
        }
        let total: u64 = self.label_counts.iter().sum();
        if total != self.dataset_size {
            return Err(Error::config(
                "client_profile",
                format!(
                    "client {index}: label counts sum to {total}, dataset size is {}",
                    self.dataset_size
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelState {
    /// Large-scale power gain θ.
    pub path_loss: f64,
    /// Small-scale fading power |h|².
    pub fading_power: f64,
}

/// Immutable environment: configuration, clients and a seeded channel process.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    config: SystemConfig,
    clients: Vec<ClientProfile>,
    path_loss: Vec<f64>,
    seed: u64,
}

/// Splits `total` samples as evenly as possible over `categories`.
fn balanced_counts(total: u64, categories: usize) -> Vec<u64> {
    let z = categories as u64;
    (0..z)
        .map(|c| total / z + u64::from(c < total % z))
        .collect()
}

/// Draws client profiles uniformly from `ranges`.
///
/// Label counts are split evenly over `ranges.num_categories`; use
/// [`Scenario::with_label_counts`] to install a real partition.
pub fn sample_scenario(config: &SystemConfig, ranges: &SamplingRanges, seed: u64) -> Result<Scenario> {
    config.validate()?;
    ranges.validate()?;
    let clients = (0..config.num_clients)
        .map(|k| {
            let mut r = rng::stream(seed, Domain::Profile, k as u64, 0);
            let distance = ranges.distance_m.sample(&mut r);
            let power_dbm = ranges.transmit_power_dbm.sample(&mut r);
            let max_frequency = ranges.max_frequency_hz.sample(&mut r);
            let cycles_per_bit = ranges.cycles_per_bit.sample(&mut r);
            let model_bits = ranges.model_bits.sample(&mut r);
            let (lo, hi) = ranges.dataset_size;
            let dataset_size = if lo == hi { lo } else { r.random_range(lo..=hi) };
            ClientProfile {
                dataset_size,
                cycles_per_bit,
                transmit_power: dbm_to_watts(power_dbm),
                max_frequency,
                model_bits,
                distance,
                label_counts: balanced_counts(dataset_size, ranges.num_categories),
            }
        })
        .collect();
    Scenario::new(config.clone(), clients, seed)
}

impl Scenario {
    /// Builds a scenario from explicit profiles.
    pub fn new(config: SystemConfig, clients: Vec<ClientProfile>, seed: u64) -> Result<Self> {
        config.validate()?;
        if clients.len() != config.num_clients {
            return Err(Error::shape(format!(
                "{} profiles for {} clients",
                clients.len(),
                config.num_clients
            )));
        }
        for (k, c) in clients.iter().enumerate() {
            c.validate(k)?;
        }
        let path_loss = clients
            .iter()
            .map(|c| wireless::path_loss(c.distance, config.carrier_freq, config.path_loss_exp))
            .collect::<Result<Vec<_>>>()?;
        Ok(Scenario {
            config,
            clients,
            path_loss,
            seed,
        })
    }

    /// Replaces every client's label counts (and therefore dataset size).
    pub fn with_label_counts(mut self, counts: &[Vec<u64>]) -> Result<Self> {
        if counts.len() != self.clients.len() {
            return Err(Error::shape(format!(
                "{} label rows for {} clients",
                counts.len(),
                self.clients.len()
            )));
        }
        for (c, row) in self.clients.iter_mut().zip(counts) {
            c.label_counts = row.clone();
            c.dataset_size = row.iter().sum();
        }
        Ok(self)
    }

    /// Overrides every client's model size in bits.
    pub fn with_model_bits(mut self, bits: f64) -> Result<Self> {
        if !(bits.is_finite() && bits > 0.0) {
            return Err(Error::config("model_bits", "must be finite and > 0"));
        }
        for c in &mut self.clients {
            c.model_bits = bits;
        }
        Ok(self)
    }

    /// Same clients under a different system configuration.
    pub fn with_config(mut self, config: SystemConfig) -> Result<Self> {
        let clients = core::mem::take(&mut self.clients);
        Scenario::new(config, clients, self.seed)
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn clients(&self) -> &[ClientProfile] {
        &self.clients
    }

    pub fn client(&self, k: usize) -> &ClientProfile {
        &self.clients[k]
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Channel of client `k` in round `t`. Fading is drawn on demand from a
    /// stream keyed by `(k, t)`, so lookups in any order agree.
    pub fn channel(&self, k: usize, t: usize) -> ChannelState {
        let mut r = rng::stream(self.seed, Domain::Fading, k as u64, t as u64);
        let draw: f64 = Exp1.sample(&mut r);
        ChannelState {
            path_loss: self.path_loss[k],
            fading_power: self.config.mean_channel_gain * draw,
        }
    }

    /// Uplink rate of client `k` in round `t` when it holds the whole band.
    pub fn full_band_rate(&self, k: usize, t: usize) -> f64 {
        let ch = self.channel(k, t);
        let cfg = &self.config;
        wireless::spectral_efficiency(ch, self.clients[k].transmit_power, cfg.total_bandwidth, cfg.noise_density)
            * cfg.total_bandwidth
    }

    /// Uplink rate of client `k` in round `t` with bandwidth fraction `b`.
    pub fn rate(&self, k: usize, t: usize, b: f64) -> Result<f64> {
        let ch = self.channel(k, t);
        let cfg = &self.config;
        wireless::uplink_rate(
            b,
            cfg.total_bandwidth,
            ch.path_loss,
            ch.fading_power,
            self.clients[k].transmit_power,
            cfg.noise_density,
        )
    }
}
