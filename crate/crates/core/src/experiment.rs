//! Runs LEAP and the baseline allocations on one scenario.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::alloc::{self, AllocationPlan, GpConfig, PowerPolicy};
use crate::error::{Error, Result};
use crate::game::{self, GameOptions, GameTrace, Partition, PartitionRecord};
use crate::hfl::{self, DataSpec, HflConfig, SyntheticDataset};
use crate::netmodel::{self, NetworkConfig, SystemMetrics};
use crate::par::Execution;
use crate::scenario::{Scenario, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Game-stabilized partition, projected-gradient bandwidth, deadline-tight power.
    Leap,
    /// The game's random starting partition with LEAP's allocation.
    RandomAssociation,
    /// LEAP partition, bandwidth drawn uniformly on the simplex.
    Rb,
    /// LEAP partition and bandwidth, power uniform on (0, p_max].
    Rp,
    RbRp,
    /// LEAP partition, B/M per edge.
    EqualSplit,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Leap,
        Method::RandomAssociation,
        Method::Rb,
        Method::Rp,
        Method::RbRp,
        Method::EqualSplit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Leap => "leap",
            Method::RandomAssociation => "random_association",
            Method::Rb => "rb",
            Method::Rp => "rp",
            Method::RbRp => "rb_rp",
            Method::EqualSplit => "equal_split",
        }
    }

    fn uses_game(self) -> bool {
        self != Method::RandomAssociation
    }

    fn random_bandwidth(self) -> bool {
        matches!(self, Method::Rb | Method::RbRp)
    }

    fn random_power(self) -> bool {
        matches!(self, Method::Rp | Method::RbRp)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key || (key == "random" && *m == Method::RandomAssociation))
            .ok_or_else(|| Error::invalid("method", format!("unknown method {s:?}")))
    }
}

/// Optional training run on synthetic data for each distinct partition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyOptions {
    pub data: DataSpec,
    pub hfl: HflConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub seed: u64,
    pub methods: Vec<Method>,
    pub gp: GpConfig,
    pub max_game_iters: usize,
    pub accuracy: Option<AccuracyOptions>,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            methods: Method::ALL.to_vec(),
            gp: GpConfig::default(),
            max_game_iters: GameOptions::default().max_iters,
            accuracy: None,
            exec: Execution::default(),
        }
    }
}

/// Seeds of every random stream used by one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentSeeds {
    pub master: u64,
    pub initial_partition: u64,
    pub game: u64,
    pub bandwidth: u64,
    pub power: u64,
    pub data: u64,
    pub training: u64,
}

impl ExperimentSeeds {
    pub fn derive(master: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master);
        Self {
            master,
            initial_partition: rng.random(),
            game: rng.random(),
            bandwidth: rng.random(),
            power: rng.random(),
            data: rng.random(),
            training: rng.random(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPoint {
    pub round: usize,
    pub accuracy: f64,
    pub avg_js: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub partition: PartitionRecord,
    pub plan: AllocationPlan,
    pub summary: SystemMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<Vec<AccuracyPoint>>,
}

impl MethodResult {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.accuracy.as_ref().and_then(|c| c.last()).map(|p| p.accuracy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub lambda1: f64,
    pub lambda2: f64,
    pub seeds: ExperimentSeeds,
    pub gp: GpConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy_options: Option<AccuracyOptions>,
    pub scenario: Scenario,
    pub initial_partition: PartitionRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub game_trace: Option<GameTrace>,
    pub methods: Vec<MethodResult>,
}

impl ExperimentReport {
    pub fn method(&self, method: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == method)
    }

    pub fn all_feasible(&self) -> bool {
        self.methods.iter().all(|r| r.plan.feasible)
    }
}

/// Uniform draw on the scaled simplex {b > 0, sum b = total}.
pub fn random_bandwidth<R: Rng + ?Sized>(m: usize, total: f64, rng: &mut R) -> Vec<f64> {
    // Normalized exponentials are Dirichlet(1, ..., 1).
    let draws: Vec<f64> = (0..m).map(|_| Exp1.sample(rng)).collect::<Vec<f64>>();
    let sum: f64 = draws.iter().sum();
    draws
        .iter()
        .map(|d| (total * d / sum).max(f64::MIN_POSITIVE))
        .collect()
}

/// Power drawn uniformly on (0, p_max] for every client.
pub fn random_power<R: Rng + ?Sized>(p_max: &[f64], rng: &mut R) -> Vec<f64> {
    p_max
        .iter()
        .map(|&p| {
            let u: f64 = rng.random();
            (p * (1.0 - u)).max(f64::MIN_POSITIVE)
        })
        .collect()
}

fn check_methods(methods: &[Method]) -> Result<()> {
    if methods.is_empty() {
        return Err(Error::invalid("methods", "at least one method is required"));
    }
    let mut seen = Vec::new();
    for m in methods {
        if seen.contains(m) {
            return Err(Error::invalid("methods", format!("{m} listed twice")));
        }
        seen.push(*m);
    }
    Ok(())
}

fn allocate(
    method: Method,
    partition: &Partition,
    scenario: &Scenario,
    gp: &GpConfig,
    seeds: &ExperimentSeeds,
) -> Result<MethodResult> {
    let profiles = &scenario.clients;
    let config = &scenario.config;
    let m = partition.num_coalitions();
    let mut gp_trace = None;
    let bandwidth = if method.random_bandwidth() {
        random_bandwidth(m, config.total_bandwidth, &mut ChaCha8Rng::seed_from_u64(seeds.bandwidth))
    } else if method == Method::EqualSplit {
        vec![config.total_bandwidth / m as f64; m]
    } else {
        let (b, trace) = alloc::gp_solve(partition, profiles, config, gp, None)?;
        gp_trace = Some(trace);
        b
    };
    let power = if method.random_power() {
        let p_max: Vec<f64> = profiles.iter().map(|c| c.p_max).collect();
        PowerPolicy::Fixed(random_power(&p_max, &mut ChaCha8Rng::seed_from_u64(seeds.power)))
    } else {
        PowerPolicy::Optimal
    };
    let mut plan = alloc::assemble_plan(partition, profiles, config, bandwidth, power)?;
    plan.gp_trace = gp_trace;
    Ok(MethodResult {
        method,
        partition: partition.to_record(),
        summary: plan.metrics.system.clone(),
        plan,
        bandwidth_seed: method.random_bandwidth().then_some(seeds.bandwidth),
        power_seed: method.random_power().then_some(seeds.power),
        accuracy: None,
    })
}

/// Runs each requested method on `scenario`.
///
/// Every baseline shares the game's random starting partition (random
/// association) or its stable outcome (the others), so differences isolate
/// one design choice at a time. Deadline violations are reported in each
/// plan, never repaired.
pub fn run_experiment(scenario: &Scenario, options: &ExperimentOptions) -> Result<ExperimentReport> {
    scenario.validate()?;
    check_methods(&options.methods)?;
    options.gp.validate(scenario.config.total_bandwidth, scenario.num_edges)?;
    let seeds = ExperimentSeeds::derive(options.seed);
    let config = &scenario.config;
    let counts = scenario.label_counts();

    let initial = Partition::seeded_random(counts, scenario.num_edges, config.js_denominator, seeds.initial_partition)?;

    let needs_game = options.methods.iter().any(|m| m.uses_game());
    let (stable, trace) = if needs_game {
        let game_options = GameOptions {
            max_iters: options.max_game_iters,
            seed: seeds.game,
        };
        let (p, t) = game::run_coalition_formation(initial.clone(), game_options)?;
        (Some(p), Some(t))
    } else {
        (None, None)
    };

    let mut methods = options
        .exec
        .map_slice(&options.methods, |&method| {
            let partition = if method.uses_game() {
                stable.as_ref().expect("game ran")
            } else {
                &initial
            };
            allocate(method, partition, scenario, &options.gp, &seeds)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    if let Some(acc) = &options.accuracy {
        let dataset = SyntheticDataset::generate(&scenario.label_counts(), &acc.data, seeds.data)?;
        let mut curves: BTreeMap<Vec<usize>, Vec<AccuracyPoint>> = BTreeMap::new();
        for result in &mut methods {
            let key = result.partition.assignment.clone();
            if !curves.contains_key(&key) {
                let partition = if result.method.uses_game() {
                    stable.as_ref().expect("game ran")
                } else {
                    &initial
                };
                let run = hfl::run_hfl(partition, &dataset, &acc.hfl, seeds.training, options.exec)?;
                let avg_js = partition.avg_js();
                let curve = run
                    .accuracy
                    .iter()
                    .enumerate()
                    .map(|(round, &accuracy)| AccuracyPoint {
                        round: round + 1,
                        accuracy,
                        avg_js,
                    })
                    .collect();
                curves.insert(key.clone(), curve);
            }
            result.accuracy = curves.get(&key).cloned();
        }
    }

    Ok(ExperimentReport {
        schema_version: SCHEMA_VERSION,
        lambda1: config.lambda1,
        lambda2: config.lambda2,
        seeds,
        gp: options.gp,
        accuracy_options: options.accuracy,
        scenario: scenario.clone(),
        initial_partition: initial.to_record(),
        game_trace: trace,
        methods,
    })
}

/// Recomputes every method's metrics from its serialized partition, shares
/// and powers; returns the largest relative deviation from the stored values.
pub fn audit(report: &ExperimentReport) -> Result<f64> {
    let scenario = &report.scenario;
    let config: &NetworkConfig = &scenario.config;
    let counts = scenario.label_counts();
    let mut worst = 0.0f64;
    let rel = |a: f64, b: f64| {
        let scale = a.abs().max(b.abs());
        if scale == 0.0 {
            0.0
        } else {
            (a - b).abs() / scale
        }
    };
    for r in &report.methods {
        let partition = Partition::from_record(&r.partition, counts.clone())?;
        let fresh = netmodel::evaluate(
            &partition,
            &scenario.clients,
            &r.plan.bandwidth_per_client,
            &r.plan.power_per_client,
            config,
        )?;
        let s = &fresh.system;
        let stored = &r.summary;
        if s.feasible != stored.feasible || s.feasible != r.plan.feasible {
            return Ok(f64::INFINITY);
        }
        for (a, b) in [
            (s.avg_js, stored.avg_js),
            (s.latency, stored.latency),
            (s.energy, stored.energy),
            (s.tx_energy, stored.tx_energy),
            (s.utility, stored.utility),
        ] {
            worst = worst.max(rel(a, b));
        }
        let pot = game::potential(&partition)?;
        worst = worst.max(rel(pot / config.js_denominator.divisor(partition.num_coalitions()), stored.avg_js));
    }
    Ok(worst)
}
