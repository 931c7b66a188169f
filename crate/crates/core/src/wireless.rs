//! Channel rate and per-round latency/energy cost model.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{LN_2, PI};

use crate::decision::RoundDecision;
use crate::error::{Error, Result};
use crate::math;
use crate::scenario::{ChannelState, ClientProfile, Scenario};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Large-scale power gain `(c0 / (4 pi fc))^2 * dist^-gamma`.
pub fn path_loss(distance: f64, carrier_freq: f64, exponent: f64) -> Result<f64> {
    if !(distance > 0.0) || !(carrier_freq > 0.0) || !distance.is_finite() || !carrier_freq.is_finite() {
        return Err(Error::domain(format!(
            "path loss needs positive distance and carrier frequency, got {distance} m, {carrier_freq} Hz"
        )));
    }
    if !(exponent >= 0.0) {
        return Err(Error::domain(format!("path loss exponent {exponent} is negative")));
    }
    let free_space = SPEED_OF_LIGHT / (4.0 * PI * carrier_freq);
    Ok(free_space * free_space * math::powf(distance, -exponent))
}

/// `log2(1 + SNR)` for a client holding the whole band.
pub(crate) fn spectral_efficiency(ch: ChannelState, power: f64, bandwidth: f64, noise: f64) -> f64 {
    let snr = ch.path_loss * ch.fading_power * power / (bandwidth * noise);
    math::ln_1p(snr) / LN_2
}

/// Shannon rate `b * B * log2(1 + theta * h2 * P / (B * N0))` in bit/s.
pub fn uplink_rate(
    fraction: f64,
    bandwidth: f64,
    gain: f64,
    fading_power: f64,
    power: f64,
    noise_density: f64,
) -> Result<f64> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::domain(format!(
            "bandwidth fraction must lie in (0, 1], got {fraction}"
        )));
    }
    if !(bandwidth > 0.0) || !(noise_density > 0.0) {
        return Err(Error::domain("bandwidth and noise density must be > 0"));
    }
    let ch = ChannelState {
        path_loss: gain,
        fading_power,
    };
    Ok(fraction * bandwidth * spectral_efficiency(ch, power, bandwidth, noise_density))
}

/// Latency and energy of one client in one round.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClientCost {
    pub comp_latency: f64,
    pub comp_energy: f64,
    pub upload_latency: f64,
    pub upload_energy: f64,
}

impl ClientCost {
    pub const ZERO: ClientCost = ClientCost {
        comp_latency: 0.0,
        comp_energy: 0.0,
        upload_latency: 0.0,
        upload_energy: 0.0,
    };

    pub fn latency(&self) -> f64 {
        self.comp_latency + self.upload_latency
    }

    pub fn energy(&self) -> f64 {
        self.comp_energy + self.upload_energy
    }
}

/// Cost of `E` local epochs at frequency `f` followed by one upload at `rate`.
pub fn client_round_cost(
    client: usize,
    profile: &ClientProfile,
    frequency: f64,
    rate: f64,
    epochs: u32,
    capacitance: f64,
) -> Result<ClientCost> {
    if !(frequency > 0.0) {
        return Err(Error::InfeasibleDecision {
            client,
            reason: "selected client has zero CPU frequency",
        });
    }
    if !(rate > 0.0) {
        return Err(Error::InfeasibleDecision {
            client,
            reason: "selected client has zero uplink rate",
        });
    }
    let e = f64::from(epochs);
    let work = e * profile.cycles_per_bit * profile.dataset_size as f64;
    let upload_latency = profile.model_bits / rate;
    Ok(ClientCost {
        comp_latency: work / frequency,
        comp_energy: capacitance * work * frequency * frequency,
        upload_latency,
        upload_energy: profile.transmit_power * upload_latency,
    })
}

/// Per-client and aggregate costs of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub per_client: Vec<ClientCost>,
    pub selected: Vec<bool>,
    pub round_latency: f64,
    pub round_energy: f64,
    pub utility: f64,
}

impl CostReport {
    /// Aggregates per-client costs; unselected entries must be zero.
    pub fn from_clients(per_client: Vec<ClientCost>, selected: Vec<bool>, alpha1: f64, alpha2: f64) -> Self {
        let mut latency = 0.0f64;
        let mut energy = 0.0;
        for (c, &s) in per_client.iter().zip(&selected) {
            if s {
                latency = latency.max(c.latency());
                energy += c.energy();
            }
        }
        CostReport {
            per_client,
            selected,
            round_latency: latency,
            round_energy: energy,
            utility: alpha1 * latency + alpha2 * energy,
        }
    }

    pub fn empty(num_clients: usize) -> Self {
        CostReport {
            per_client: alloc::vec![ClientCost::ZERO; num_clients],
            selected: alloc::vec![false; num_clients],
            round_latency: 0.0,
            round_energy: 0.0,
            utility: 0.0,
        }
    }

    pub fn selected_count(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }
}

/// Costs of `decision` in round `t`.
pub fn round_cost(
    decision: &RoundDecision,
    scenario: &Scenario,
    t: usize,
    alpha1: f64,
    alpha2: f64,
) -> Result<CostReport> {
    let k_total = scenario.num_clients();
    if decision.len() != k_total {
        return Err(Error::shape(format!(
            "decision covers {} clients, scenario has {k_total}",
            decision.len()
        )));
    }
    let cfg = scenario.config();
    let mut per_client = Vec::with_capacity(k_total);
    let mut selected = Vec::with_capacity(k_total);
    for k in 0..k_total {
        if !decision.is_selected(k) {
            per_client.push(ClientCost::ZERO);
            selected.push(false);
            continue;
        }
        let b = decision.bandwidth[k];
        if !(b > 0.0) {
            return Err(Error::InfeasibleDecision {
                client: k,
                reason: "selected client has zero bandwidth",
            });
        }
        let rate = scenario.rate(k, t, b.min(1.0))?;
        per_client.push(client_round_cost(
            k,
            scenario.client(k),
            decision.frequency[k],
            rate,
            cfg.local_epochs,
            cfg.capacitance,
        )?);
        selected.push(true);
    }
    Ok(CostReport::from_clients(per_client, selected, alpha1, alpha2))
}
