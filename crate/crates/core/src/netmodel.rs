//! Latency, energy and utility model of one hierarchical FL task.
//!
//! Units: Hz, bits, seconds, Watts, Joules. Channel gains are linear. Downlink
//! and aggregation costs are not modeled.

use serde::{Deserialize, Serialize};

use crate::dist::JsDenominator;
use crate::error::{Error, Result};
use crate::game::Partition;

/// Relative slack applied when comparing a latency to the deadline budget,
/// so that a client tuned to hit the budget exactly is not flagged by rounding.
pub const DEADLINE_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientProfile {
    /// Number of local training items.
    pub data_size: u64,
    /// CPU cycles needed per item.
    pub cycles_per_item: f64,
    /// CPU frequency, cycles/s.
    pub cpu_freq: f64,
    /// Linear channel gain towards each edge server.
    pub channel_gains: Vec<f64>,
    /// Maximum transmit power, W.
    pub p_max: f64,
    pub label_counts: Vec<u64>,
}

impl ClientProfile {
    pub fn validate(&self, num_edges: usize, classes: usize) -> Result<()> {
        let positive = [
            ("cycles_per_item", self.cycles_per_item),
            ("cpu_freq", self.cpu_freq),
            ("p_max", self.p_max),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.data_size == 0 {
            return Err(Error::invalid("data_size", "must be positive"));
        }
        if self.channel_gains.len() != num_edges {
            return Err(Error::invalid(
                "channel_gains",
                format!("expected {num_edges} entries, got {}", self.channel_gains.len()),
            ));
        }
        if let Some(g) = self.channel_gains.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::invalid("channel_gains", format!("must be positive, got {g}")));
        }
        if self.label_counts.len() != classes {
            return Err(Error::DimensionMismatch {
                left: classes,
                right: self.label_counts.len(),
            });
        }
        if self.label_counts.iter().sum::<u64>() != self.data_size {
            return Err(Error::invalid("label_counts", "must sum to data_size"));
        }
        Ok(())
    }

    pub fn gain(&self, edge: usize, mode: GainMode) -> f64 {
        match mode {
            GainMode::PerEdge => self.channel_gains[edge],
            GainMode::ClientOnly => self.channel_gains[0],
        }
    }
}

/// Whether the channel gain depends on the associated edge server.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainMode {
    #[default]
    PerEdge,
    /// Every edge sees the client's first gain entry.
    ClientOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Total uplink bandwidth B, Hz.
    pub total_bandwidth: f64,
    /// Noise power spectral density N0, W/Hz.
    pub noise_power: f64,
    /// Model size Z, bits.
    pub model_size: f64,
    pub tau_c: u32,
    pub tau_e: u32,
    pub tau_g: u32,
    /// Task deadline I, seconds.
    pub deadline: f64,
    /// Effective switched capacitance of the client chipsets.
    pub capacitance: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    #[serde(default)]
    pub gain_mode: GainMode,
    #[serde(default)]
    pub js_denominator: JsDenominator,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            total_bandwidth: 10e6,
            noise_power: 1e-15,
            model_size: 1e6,
            tau_c: 5,
            tau_e: 12,
            tau_g: 100,
            deadline: 3600.0,
            capacitance: 1e-28,
            lambda1: 1.0,
            lambda2: 1.0,
            gain_mode: GainMode::PerEdge,
            js_denominator: JsDenominator::Coalitions,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("total_bandwidth", self.total_bandwidth),
            ("noise_power", self.noise_power),
            ("model_size", self.model_size),
            ("deadline", self.deadline),
            ("capacitance", self.capacitance),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [("tau_c", self.tau_c), ("tau_e", self.tau_e), ("tau_g", self.tau_g)] {
            if v == 0 {
                return Err(Error::invalid(name, "must be at least 1"));
            }
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// Per-edge-iteration latency cap I / (tau_e * tau_g).
    pub fn deadline_budget(&self) -> f64 {
        self.deadline / (f64::from(self.tau_e) * f64::from(self.tau_g))
    }

    pub fn meets_budget(&self, iteration_latency: f64) -> bool {
        iteration_latency <= self.deadline_budget() * (1.0 + DEADLINE_RTOL)
    }
}

/// Local computation time per edge iteration: tau_c * c_n * |D_n| / f_n.
pub fn comp_latency(client: &ClientProfile, config: &NetworkConfig) -> f64 {
    f64::from(config.tau_c) * client.cycles_per_item * client.data_size as f64 / client.cpu_freq
}

/// Local computation energy per edge iteration: tau_c * phi * c_n * |D_n| * f_n^2.
pub fn comp_energy(client: &ClientProfile, config: &NetworkConfig) -> f64 {
    f64::from(config.tau_c)
        * config.capacitance
        * client.cycles_per_item
        * client.data_size as f64
        * client.cpu_freq
        * client.cpu_freq
}

/// Shannon rate B^U log2(1 + p h / (B^U N0)) in bits/s.
pub fn uplink_rate(bandwidth_share: f64, power: f64, gain: f64, config: &NetworkConfig) -> Result<f64> {
    if !(bandwidth_share > 0.0 && bandwidth_share.is_finite()) {
        return Err(Error::invalid("bandwidth_share", format!("must be positive, got {bandwidth_share}")));
    }
    if !(power > 0.0 && power.is_finite()) {
        return Err(Error::invalid("power", format!("must be positive, got {power}")));
    }
    let snr = power * gain / (bandwidth_share * config.noise_power);
    Ok(bandwidth_share * snr.ln_1p() / std::f64::consts::LN_2)
}

/// Upload time Z / R.
pub fn tx_latency(bandwidth_share: f64, power: f64, gain: f64, config: &NetworkConfig) -> Result<f64> {
    let rate = uplink_rate(bandwidth_share, power, gain, config)?;
    if rate <= 0.0 {
        return Err(Error::invalid("rate", "zero uplink rate"));
    }
    Ok(config.model_size / rate)
}

/// Upload energy per edge iteration, T^U * p.
pub fn tx_energy(bandwidth_share: f64, power: f64, gain: f64, config: &NetworkConfig) -> Result<f64> {
    Ok(tx_latency(bandwidth_share, power, gain, config)? * power)
}

/// Per-edge-iteration quantities for one client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientMetrics {
    pub edge: usize,
    pub bandwidth: f64,
    pub power: f64,
    pub comp_latency: f64,
    pub tx_latency: f64,
    pub iteration_latency: f64,
    pub comp_energy: f64,
    pub tx_energy: f64,
    pub iteration_energy: f64,
    pub meets_deadline: bool,
}

pub fn client_metrics(
    client: &ClientProfile,
    edge: usize,
    bandwidth_share: f64,
    power: f64,
    config: &NetworkConfig,
) -> Result<ClientMetrics> {
    let gain = client.gain(edge, config.gain_mode);
    let t_c = comp_latency(client, config);
    let t_u = tx_latency(bandwidth_share, power, gain, config)?;
    let e_c = comp_energy(client, config);
    let e_u = t_u * power;
    Ok(ClientMetrics {
        edge,
        bandwidth: bandwidth_share,
        power,
        comp_latency: t_c,
        tx_latency: t_u,
        iteration_latency: t_c + t_u,
        comp_energy: e_c,
        tx_energy: e_u,
        iteration_energy: e_c + e_u,
        meets_deadline: config.meets_budget(t_c + t_u),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub per_client: Vec<f64>,
    pub per_coalition: Vec<f64>,
    pub system: f64,
}

/// T_m = tau_e * max over members of T_{n,t}; T = tau_g * max_m T_m.
pub fn round_and_total_latency(partition: &Partition, clients: &[ClientMetrics], config: &NetworkConfig) -> LatencyBreakdown {
    let per_client: Vec<f64> = clients.iter().map(|c| c.iteration_latency).collect();
    let per_coalition: Vec<f64> = partition
        .coalitions()
        .iter()
        .map(|members| {
            let slowest = members.iter().map(|&n| per_client[n]).fold(0.0, f64::max);
            // Every edge iteration has the same straggler in a static model.
            f64::from(config.tau_e) * slowest
        })
        .collect();
    let system = f64::from(config.tau_g) * per_coalition.iter().copied().fold(0.0, f64::max);
    LatencyBreakdown {
        per_client,
        per_coalition,
        system,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub per_coalition: Vec<f64>,
    pub per_coalition_tx: Vec<f64>,
    pub system: f64,
    pub system_tx: f64,
}

/// E_m = sum over members of tau_g * tau_e * E_{n,t}; E = sum_m E_m. The
/// transmission-only share is tracked alongside.
pub fn energies(partition: &Partition, clients: &[ClientMetrics], config: &NetworkConfig) -> EnergyBreakdown {
    let rounds = f64::from(config.tau_g) * f64::from(config.tau_e);
    let mut per_coalition = Vec::with_capacity(partition.num_coalitions());
    let mut per_coalition_tx = Vec::with_capacity(partition.num_coalitions());
    for members in partition.coalitions() {
        per_coalition.push(members.iter().map(|&n| rounds * clients[n].iteration_energy).sum::<f64>());
        per_coalition_tx.push(members.iter().map(|&n| rounds * clients[n].tx_energy).sum::<f64>());
    }
    EnergyBreakdown {
        system: per_coalition.iter().sum(),
        system_tx: per_coalition_tx.iter().sum(),
        per_coalition,
        per_coalition_tx,
    }
}

/// U = lambda1 * (1 - avg JSD) - lambda2 * E.
pub fn network_utility(avg_js: f64, energy: f64, config: &NetworkConfig) -> f64 {
    config.lambda1 * (1.0 - avg_js) - config.lambda2 * energy
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadlineReport {
    pub budget: f64,
    pub per_client: Vec<bool>,
    pub all_met: bool,
}

pub fn check_deadline(clients: &[ClientMetrics], config: &NetworkConfig) -> DeadlineReport {
    let per_client: Vec<bool> = clients
        .iter()
        .map(|c| config.meets_budget(c.iteration_latency))
        .collect();
    DeadlineReport {
        budget: config.deadline_budget(),
        all_met: per_client.iter().all(|&ok| ok),
        per_client,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemMetrics {
    pub avg_js: f64,
    pub latency: f64,
    pub energy: f64,
    pub tx_energy: f64,
    pub utility: f64,
    pub feasible: bool,
}

/// Full metric set for a partition under given per-client bandwidth shares
/// and powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub clients: Vec<ClientMetrics>,
    pub latency: LatencyBreakdown,
    pub energy: EnergyBreakdown,
    pub deadline: DeadlineReport,
    pub system: SystemMetrics,
}

pub fn evaluate(
    partition: &Partition,
    profiles: &[ClientProfile],
    bandwidth_per_client: &[f64],
    power_per_client: &[f64],
    config: &NetworkConfig,
) -> Result<Metrics> {
    let n = partition.num_clients();
    for len in [profiles.len(), bandwidth_per_client.len(), power_per_client.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { left: n, right: len });
        }
    }
    let clients = (0..n)
        .map(|i| {
            client_metrics(
                &profiles[i],
                partition.assignment()[i],
                bandwidth_per_client[i],
                power_per_client[i],
                config,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let latency = round_and_total_latency(partition, &clients, config);
    let energy = energies(partition, &clients, config);
    let deadline = check_deadline(&clients, config);
    let avg_js = partition.avg_js();
    let system = SystemMetrics {
        avg_js,
        latency: latency.system,
        energy: energy.system,
        tx_energy: energy.system_tx,
        utility: network_utility(avg_js, energy.system, config),
        feasible: deadline.all_met,
    };
    if !(system.latency.is_finite() && system.energy.is_finite()) {
        return Err(Error::NonFinite("metrics"));
    }
    Ok(Metrics {
        clients,
        latency,
        energy,
        deadline,
        system,
    })
}
