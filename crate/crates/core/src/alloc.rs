//! Bandwidth and transmit-power allocation for a fixed partition.
//!
//! Bandwidth is split across coalitions by projected gradient descent on the
//! worst-case transmission-energy surrogate; members of a coalition share its
//! bandwidth equally. Power is then set per client in closed form as the
//! smallest value that still meets the per-iteration deadline, capped at
//! `p_max`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Partition;
use crate::netmodel::{self, ClientProfile, Metrics, NetworkConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    /// Initial step size, in units of the bandwidth fraction per unit of
    /// normalized objective gradient. Halved while a step fails to decrease.
    pub step_size: f64,
    /// Stop when the relative objective change drops below this...
    pub tolerance: f64,
    /// ...and the projected-gradient norm (normalized units) is at most this.
    #[serde(default = "default_gradient_tolerance")]
    pub gradient_tolerance: f64,
    pub max_iters: usize,
    /// Lower bound on every B_m in Hz; `None` means 1e-6 of the total.
    #[serde(default)]
    pub min_bandwidth_floor: Option<f64>,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            step_size: 0.5,
            tolerance: 1e-8,
            gradient_tolerance: default_gradient_tolerance(),
            max_iters: 10_000,
            min_bandwidth_floor: None,
        }
    }
}

fn default_gradient_tolerance() -> f64 {
    1e-6
}

impl GpConfig {
    pub fn floor(&self, total_bandwidth: f64) -> f64 {
        self.min_bandwidth_floor.unwrap_or(1e-6 * total_bandwidth)
    }

    pub fn validate(&self, total_bandwidth: f64, coalitions: usize) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid("step_size", "must be positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance", "must be positive"));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::invalid("gradient_tolerance", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be at least 1"));
        }
        let floor = self.floor(total_bandwidth);
        if !(floor > 0.0 && floor * coalitions as f64 <= total_bandwidth) {
            return Err(Error::invalid(
                "min_bandwidth_floor",
                format!("{floor} Hz x {coalitions} coalitions does not fit in {total_bandwidth} Hz"),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpTrace {
    /// Objective before the first step and after every accepted step.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Norm of x - P(x - grad) at the returned point, in normalized units.
    pub projected_gradient_norm: f64,
}

/// |x - P(x - g)| with a unit step on the normalized simplex.
fn projected_gradient_norm(x: &[f64], g: &[f64], floor: f64) -> Result<f64> {
    let probe: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi - gi).collect();
    let projected = project_to_simplex(&probe, 1.0, floor)?;
    Ok(x.iter()
        .zip(&projected)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Member with the smallest `p_max * h` towards `edge`; ties go to the lower id.
pub fn worst_client(members: &[usize], profiles: &[ClientProfile], edge: usize, config: &NetworkConfig) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &n in members {
        let p = profiles.get(n).ok_or(Error::OutOfRange {
            index: n,
            len: profiles.len(),
        })?;
        let strength = p.p_max * p.gain(edge, config.gain_mode);
        match best {
            Some((id, s)) if strength > s || (strength == s && id < n) => {}
            _ => best = Some((n, strength)),
        }
    }
    best.map(|(id, _)| id).ok_or(Error::EmptyCoalition(edge))
}

/// Per-coalition constants of the surrogate: member count, worst-case
/// `p_max * h / N0`, and the energy prefactor lambda2 * |G| * tau_g * tau_e * p_max * Z.
#[derive(Debug, Clone, Copy)]
struct CoalitionTerm {
    size: f64,
    snr_numerator: f64,
    prefactor: f64,
}

fn coalition_terms(partition: &Partition, profiles: &[ClientProfile], config: &NetworkConfig) -> Result<Vec<CoalitionTerm>> {
    if profiles.len() != partition.num_clients() {
        return Err(Error::DimensionMismatch {
            left: partition.num_clients(),
            right: profiles.len(),
        });
    }
    let rounds = f64::from(config.tau_g) * f64::from(config.tau_e);
    partition
        .coalitions()
        .iter()
        .enumerate()
        .map(|(m, members)| {
            let w = &profiles[worst_client(members, profiles, m, config)?];
            let size = members.len() as f64;
            Ok(CoalitionTerm {
                size,
                snr_numerator: w.p_max * w.gain(m, config.gain_mode) / config.noise_power,
                prefactor: config.lambda2 * size * rounds * w.p_max * config.model_size,
            })
        })
        .collect()
}

fn check_bandwidth(b: &[f64], m: usize) -> Result<()> {
    if b.len() != m {
        return Err(Error::DimensionMismatch { left: m, right: b.len() });
    }
    if let Some(bad) = b.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::invalid("bandwidth", format!("must be positive, got {bad}")));
    }
    Ok(())
}

// Rate b log2(1 + a / b) of one member with a = p h / N0 and share b.
fn rate(a: f64, b: f64) -> f64 {
    b * (a / b).ln_1p() / std::f64::consts::LN_2
}

fn rate_derivative(a: f64, b: f64) -> f64 {
    let s = a / b;
    (s.ln_1p() - s / (1.0 + s)) / std::f64::consts::LN_2
}

fn objective_from_terms(terms: &[CoalitionTerm], b: &[f64]) -> f64 {
    terms
        .iter()
        .zip(b)
        .map(|(t, &bm)| t.prefactor / rate(t.snr_numerator, bm / t.size))
        .sum()
}

fn gradient_from_terms(terms: &[CoalitionTerm], b: &[f64]) -> Vec<f64> {
    terms
        .iter()
        .zip(b)
        .map(|(t, &bm)| {
            let share = bm / t.size;
            let r = rate(t.snr_numerator, share);
            -t.prefactor * rate_derivative(t.snr_numerator, share) / (r * r) / t.size
        })
        .collect()
}

/// Worst-case transmission-energy surrogate: every member of coalition m is
/// treated as its worst client transmitting at `p_max` over an equal share
/// `B_m / |G_m|`.
pub fn p3_objective(bandwidth: &[f64], partition: &Partition, profiles: &[ClientProfile], config: &NetworkConfig) -> Result<f64> {
    check_bandwidth(bandwidth, partition.num_coalitions())?;
    let terms = coalition_terms(partition, profiles, config)?;
    Ok(objective_from_terms(&terms, bandwidth))
}

/// Analytic gradient of [`p3_objective`] with respect to each B_m.
pub fn p3_gradient(bandwidth: &[f64], partition: &Partition, profiles: &[ClientProfile], config: &NetworkConfig) -> Result<Vec<f64>> {
    check_bandwidth(bandwidth, partition.num_coalitions())?;
    let terms = coalition_terms(partition, profiles, config)?;
    Ok(gradient_from_terms(&terms, bandwidth))
}

/// Euclidean projection onto `{x : sum x = total, x_m >= floor}` by the
/// sort-and-threshold method.
pub fn project_to_simplex(v: &[f64], total: f64, floor: f64) -> Result<Vec<f64>> {
    let m = v.len();
    let mass = total - m as f64 * floor;
    if m == 0 || !(mass > 0.0) || floor < 0.0 {
        return Err(Error::invalid(
            "min_bandwidth_floor",
            format!("floor {floor} x {m} leaves no mass in total {total}"),
        ));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("projection input"));
    }
    let shifted: Vec<f64> = v.iter().map(|x| x - floor).collect();
    let mut sorted = shifted.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - mass) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    Ok(shifted.iter().map(|x| (x - theta).max(0.0) + floor).collect())
}

/// Projected gradient descent on the bandwidth simplex.
///
/// Works in bandwidth fractions with the objective normalized by its value at
/// the start, so `step_size` is dimensionless. Each iteration begins with the
/// configured step and halves it until the objective decreases.
pub fn gp_solve(
    partition: &Partition,
    profiles: &[ClientProfile],
    config: &NetworkConfig,
    gp: &GpConfig,
    initial: Option<&[f64]>,
) -> Result<(Vec<f64>, GpTrace)> {
    let m = partition.num_coalitions();
    let total = config.total_bandwidth;
    gp.validate(total, m)?;
    let floor = gp.floor(total) / total;
    let terms = coalition_terms(partition, profiles, config)?;

    let start: Vec<f64> = match initial {
        Some(b) => {
            check_bandwidth(b, m)?;
            let sum: f64 = b.iter().sum();
            if (sum - total).abs() > 1e-9 * total || b.iter().any(|&x| x < gp.floor(total) * (1.0 - 1e-12)) {
                return Err(Error::invalid("initial bandwidth", "not on the feasible simplex"));
            }
            b.iter().map(|x| x / total).collect()
        }
        None => vec![1.0 / m as f64; m],
    };

    let eval = |x: &[f64]| {
        let b: Vec<f64> = x.iter().map(|f| f * total).collect();
        objective_from_terms(&terms, &b)
    };
    let grad = |x: &[f64], scale: f64| {
        let b: Vec<f64> = x.iter().map(|f| f * total).collect();
        gradient_from_terms(&terms, &b)
            .into_iter()
            .map(|g| g * total / scale)
            .collect::<Vec<f64>>()
    };

    let mut x = start;
    let mut value = eval(&x);
    if !value.is_finite() {
        return Err(Error::NonFinite("p3 objective"));
    }
    let mut trace = GpTrace {
        objective: vec![value],
        iterations: 0,
        converged: false,
        projected_gradient_norm: 0.0,
    };
    if value == 0.0 {
        trace.converged = true;
        return Ok((x.iter().map(|f| f * total).collect(), trace));
    }
    let scale = value;

    for _ in 0..gp.max_iters {
        trace.iterations += 1;
        let g = grad(&x, scale);
        let mut step = gp.step_size;
        let mut accepted = None;
        while step > 1e-18 {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
            let candidate = project_to_simplex(&trial, 1.0, floor)?;
            let v = eval(&candidate);
            if !v.is_finite() {
                return Err(Error::NonFinite("p3 objective"));
            }
            if v < value {
                accepted = Some((candidate, v));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_value)) = accepted else {
            // No descent at any step length: x is stationary to machine precision.
            trace.converged = true;
            break;
        };
        let change = (value - next_value) / value.abs();
        x = next;
        value = next_value;
        trace.objective.push(value);
        // A short backtracked step can stall the objective far from the
        // optimum, so small progress alone does not end the run.
        if change < gp.tolerance && projected_gradient_norm(&x, &grad(&x, scale), floor)? <= gp.gradient_tolerance {
            trace.converged = true;
            break;
        }
    }

    trace.projected_gradient_norm = projected_gradient_norm(&x, &grad(&x, scale), floor)?;

    let mut b: Vec<f64> = x.iter().map(|f| f * total).collect();
    // Remove the last ulp-level drift so the budget holds exactly.
    let drift = b.iter().sum::<f64>() - total;
    if let Some(max) = b.iter_mut().max_by(|a, c| a.total_cmp(c)) {
        *max -= drift;
    }
    Ok((b, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerChoice {
    /// Chosen transmit power, W.
    pub power: f64,
    /// Power needed to finish exactly at the deadline; `None` if unbounded.
    pub required: Option<f64>,
    pub meets_deadline: bool,
}

/// Smallest power meeting the per-iteration deadline, capped at `p_max`:
/// `p = min(p_max, B^U N0 (2^(Z / (B^U (budget - T^C))) - 1) / h)`.
///
/// Upload energy is increasing in power, so this also minimizes it.
pub fn optimal_power(
    client_id: usize,
    client: &ClientProfile,
    edge: usize,
    bandwidth_share: f64,
    config: &NetworkConfig,
) -> Result<PowerChoice> {
    if !(bandwidth_share > 0.0 && bandwidth_share.is_finite()) {
        return Err(Error::invalid("bandwidth_share", format!("must be positive, got {bandwidth_share}")));
    }
    let budget = config.deadline_budget();
    let t_c = netmodel::comp_latency(client, config);
    let slack = budget - t_c;
    if !(slack > 0.0) {
        return Err(Error::DeadlineBudgetExhausted {
            client: client_id,
            comp_latency: t_c,
            budget,
        });
    }
    let gain = client.gain(edge, config.gain_mode);
    let exponent = config.model_size / (bandwidth_share * slack);
    let required = bandwidth_share * config.noise_power * (exponent * std::f64::consts::LN_2).exp_m1() / gain;
    if required.is_finite() && required <= client.p_max {
        Ok(PowerChoice {
            power: required,
            required: Some(required),
            meets_deadline: true,
        })
    } else {
        Ok(PowerChoice {
            power: client.p_max,
            required: required.is_finite().then_some(required),
            meets_deadline: false,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub bandwidth_per_coalition: Vec<f64>,
    pub bandwidth_per_client: Vec<f64>,
    pub power_per_client: Vec<f64>,
    /// Closed-form deadline power per client, when it was computed and finite.
    pub required_power: Vec<Option<f64>>,
    /// Worst-case surrogate objective at the chosen bandwidth.
    pub p3_objective: f64,
    pub metrics: Metrics,
    pub infeasible_clients: Vec<usize>,
    pub feasible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gp_trace: Option<GpTrace>,
}

/// How transmit power is chosen when assembling a plan.
#[derive(Debug, Clone, PartialEq)]
pub enum PowerPolicy {
    /// Deadline-tight closed form per client.
    Optimal,
    /// Externally supplied per-client powers.
    Fixed(Vec<f64>),
}

/// Splits each B_m equally among members, sets powers and evaluates the plan.
pub fn assemble_plan(
    partition: &Partition,
    profiles: &[ClientProfile],
    config: &NetworkConfig,
    bandwidth_per_coalition: Vec<f64>,
    power: PowerPolicy,
) -> Result<AllocationPlan> {
    check_bandwidth(&bandwidth_per_coalition, partition.num_coalitions())?;
    let n = partition.num_clients();
    if profiles.len() != n {
        return Err(Error::DimensionMismatch { left: n, right: profiles.len() });
    }
    let sizes: Vec<usize> = partition.coalitions().iter().map(Vec::len).collect();
    let shares: Vec<f64> = partition
        .assignment()
        .iter()
        .map(|&m| bandwidth_per_coalition[m] / sizes[m] as f64)
        .collect();

    let (powers, required) = match power {
        PowerPolicy::Optimal => {
            let mut powers = Vec::with_capacity(n);
            let mut required = Vec::with_capacity(n);
            for i in 0..n {
                match optimal_power(i, &profiles[i], partition.assignment()[i], shares[i], config) {
                    Ok(choice) => {
                        powers.push(choice.power);
                        required.push(choice.required);
                    }
                    Err(Error::DeadlineBudgetExhausted { .. }) => {
                        powers.push(profiles[i].p_max);
                        required.push(None);
                    }
                    Err(e) => return Err(e),
                }
            }
            (powers, required)
        }
        PowerPolicy::Fixed(p) => {
            if p.len() != n {
                return Err(Error::DimensionMismatch { left: n, right: p.len() });
            }
            if let Some((i, _)) = p.iter().enumerate().find(|(i, x)| !(**x > 0.0 && **x <= profiles[*i].p_max)) {
                return Err(Error::invalid("power", format!("client {i} outside (0, p_max]")));
            }
            (p, vec![None; n])
        }
    };

    let metrics = netmodel::evaluate(partition, profiles, &shares, &powers, config)?;
    let infeasible_clients: Vec<usize> = metrics
        .deadline
        .per_client
        .iter()
        .enumerate()
        .filter(|(_, ok)| !**ok)
        .map(|(i, _)| i)
        .collect();
    let p3 = p3_objective(&bandwidth_per_coalition, partition, profiles, config)?;
    Ok(AllocationPlan {
        feasible: infeasible_clients.is_empty(),
        bandwidth_per_coalition,
        bandwidth_per_client: shares,
        power_per_client: powers,
        required_power: required,
        p3_objective: p3,
        metrics,
        infeasible_clients,
        gp_trace: None,
    })
}

/// Bandwidth by projected gradient (at `p_max`), then deadline-tight power.
pub fn plan_full(partition: &Partition, profiles: &[ClientProfile], config: &NetworkConfig, gp: &GpConfig) -> Result<AllocationPlan> {
    config.validate()?;
    let (bandwidth, trace) = gp_solve(partition, profiles, config, gp, None)?;
    let mut plan = assemble_plan(partition, profiles, config, bandwidth, PowerPolicy::Optimal)?;
    plan.gp_trace = Some(trace);
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::JsDenominator;
    use approx::assert_relative_eq;

    fn profile(p_max: f64, gains: Vec<f64>) -> ClientProfile {
        ClientProfile {
            data_size: 100,
            cycles_per_item: 1e5,
            cpu_freq: 1e9,
            channel_gains: gains,
            p_max,
            label_counts: vec![100],
        }
    }

    fn single_class_partition(assignment: Vec<usize>, m: usize) -> Partition {
        let n = assignment.len();
        Partition::new(assignment, m, vec![vec![1u64]; n], JsDenominator::Coalitions).unwrap()
    }

    #[test]
    fn worst_client_examples() {
        let cfg = NetworkConfig::default();
        let ps = vec![profile(1.0, vec![4.0]), profile(1.0, vec![1.0]), profile(1.0, vec![9.0])];
        assert_eq!(worst_client(&[0, 1, 2], &ps, 0, &cfg).unwrap(), 1);
        assert_eq!(worst_client(&[2], &ps, 0, &cfg).unwrap(), 2);
        let tied = vec![profile(2.0, vec![1.0]), profile(1.0, vec![2.0])];
        assert_eq!(worst_client(&[1, 0], &tied, 0, &cfg).unwrap(), 0);
        assert!(worst_client(&[], &ps, 0, &cfg).is_err());
    }

    #[test]
    fn objective_single_coalition() {
        let cfg = NetworkConfig::default();
        let ps = vec![profile(0.5, vec![1e-7]), profile(1.0, vec![1e-7])];
        let part = single_class_partition(vec![0, 0], 1);
        let b = cfg.total_bandwidth;
        let got = p3_objective(&[b], &part, &ps, &cfg).unwrap();
        let e_u = netmodel::tx_energy(b / 2.0, 0.5, 1e-7, &cfg).unwrap();
        let expected = cfg.lambda2 * 2.0 * f64::from(cfg.tau_g * cfg.tau_e) * e_u;
        assert_relative_eq!(got, expected, max_relative = 1e-12);
    }

    #[test]
    fn projection_examples() {
        let v = [0.3, 0.7];
        assert_eq!(project_to_simplex(&v, 1.0, 0.0).unwrap(), vec![0.3, 0.7]);
        let p = project_to_simplex(&[1.5, 0.5], 1.0, 0.0).unwrap();
        assert_relative_eq!(p[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(p[1], 0.0, epsilon = 1e-15);
        let p = project_to_simplex(&[1.5, 0.5], 1.0, 0.01).unwrap();
        assert_relative_eq!(p[0], 0.99, epsilon = 1e-15);
        assert_relative_eq!(p[1], 0.01, epsilon = 1e-15);
        let q = project_to_simplex(&p, 1.0, 0.01).unwrap();
        assert_eq!(p, q);
        assert!(project_to_simplex(&[1.0, 1.0], 1.0, 0.5).is_err());
    }

    #[test]
    fn power_exponent_one() {
        // Z / (B^U * slack) = 1 gives p = B^U N0 / h.
        let cfg = NetworkConfig {
            noise_power: 1e-9,
            model_size: 1e6,
            tau_c: 1,
            tau_e: 1,
            tau_g: 1,
            // T^C = 1e5 * 100 / 1e9 = 0.01 s, leaving a 1 s slack.
            deadline: 1.01,
            ..NetworkConfig::default()
        };
        let client = profile(2.0, vec![1e-3]);
        let c = optimal_power(0, &client, 0, 1e6, &cfg).unwrap();
        assert_relative_eq!(c.power, 1.0, max_relative = 1e-9);
        assert!(c.meets_deadline);
    }

    #[test]
    fn power_loose_deadline_is_tiny() {
        let cfg = NetworkConfig {
            deadline: 1e9,
            ..NetworkConfig::default()
        };
        let c = optimal_power(0, &profile(1.0, vec![1e-7]), 0, 1e6, &cfg).unwrap();
        assert!(c.power > 0.0 && c.power < 1e-6);
    }

    #[test]
    fn power_errors_and_caps() {
        let cfg = NetworkConfig {
            deadline: 1e-3,
            ..NetworkConfig::default()
        };
        assert!(matches!(
            optimal_power(3, &profile(1.0, vec![1e-7]), 0, 1e6, &cfg),
            Err(Error::DeadlineBudgetExhausted { client: 3, .. })
        ));
        // Budget barely above T^C: required power explodes, cap at p_max.
        let t_c = netmodel::comp_latency(&profile(1.0, vec![1e-7]), &cfg);
        let cfg = NetworkConfig {
            deadline: (t_c + 1e-6) * f64::from(cfg.tau_e * cfg.tau_g),
            ..cfg
        };
        let c = optimal_power(0, &profile(1.0, vec![1e-7]), 0, 1e6, &cfg).unwrap();
        assert_eq!(c.power, 1.0);
        assert!(!c.meets_deadline);
    }

    #[test]
    fn symmetric_plan_is_equal_split() {
        let cfg = NetworkConfig::default();
        let ps: Vec<_> = (0..4).map(|_| profile(0.5, vec![1e-7, 1e-7])).collect();
        let part = single_class_partition(vec![0, 1, 0, 1], 2);
        let plan = plan_full(&part, &ps, &cfg, &GpConfig::default()).unwrap();
        let half = cfg.total_bandwidth / 2.0;
        for b in &plan.bandwidth_per_coalition {
            assert_relative_eq!(*b, half, max_relative = 1e-6);
        }
        let p0 = plan.power_per_client[0];
        for p in &plan.power_per_client {
            assert_relative_eq!(*p, p0, max_relative = 1e-9);
        }
    }

    #[test]
    fn fixed_power_must_be_in_range() {
        let cfg = NetworkConfig::default();
        let ps = vec![profile(0.5, vec![1e-7]), profile(0.5, vec![1e-7])];
        let part = single_class_partition(vec![0, 0], 1);
        let bad = assemble_plan(&part, &ps, &cfg, vec![cfg.total_bandwidth], PowerPolicy::Fixed(vec![0.5, 0.6]));
        assert!(bad.is_err());
        let ok = assemble_plan(&part, &ps, &cfg, vec![cfg.total_bandwidth], PowerPolicy::Fixed(vec![0.5, 0.25]));
        assert!(ok.is_ok());
    }
}
