//! Synthetic scenario generation and the versioned scenario file format.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{ClientProfile, NetworkConfig};

/// Version stamped into every scenario, report and CSV file.
pub const SCHEMA_VERSION: u32 = 1;

/// How client label histograms are skewed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSkew {
    /// Each client holds exactly this many classes, in equal shares.
    Shards(usize),
    /// Per-client class proportions drawn from a symmetric Dirichlet.
    Dirichlet(f64),
}

/// Closed intervals the client hardware is drawn from, uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardwareRanges {
    pub data_size: (u64, u64),
    pub cycles_per_item: (f64, f64),
    pub cpu_freq: (f64, f64),
    pub channel_gain: (f64, f64),
    pub p_max: (f64, f64),
}

impl Default for HardwareRanges {
    fn default() -> Self {
        Self {
            data_size: (500, 500),
            cycles_per_item: (1e5, 5e5),
            cpu_freq: (1e9, 2e9),
            channel_gain: (1e-8, 1e-6),
            p_max: (0.1, 1.0),
        }
    }
}

impl HardwareRanges {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.data_size;
        if lo == 0 || lo > hi {
            return Err(Error::invalid("data_size range", format!("[{lo}, {hi}]")));
        }
        let ranges = [
            ("cycles_per_item range", self.cycles_per_item),
            ("cpu_freq range", self.cpu_freq),
            ("channel_gain range", self.channel_gain),
            ("p_max range", self.p_max),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::invalid(name, format!("[{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub clients: usize,
    pub edges: usize,
    pub classes: usize,
    pub skew: LabelSkew,
    /// Feature dimension of the synthetic learning task.
    pub features: usize,
    pub hardware: HardwareRanges,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            clients: 50,
            edges: 5,
            classes: 10,
            skew: LabelSkew::Shards(2),
            features: 16,
            hardware: HardwareRanges::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub config: NetworkConfig,
    pub num_edges: usize,
    pub clients: Vec<ClientProfile>,
    pub generator: GeneratorSpec,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Serde(format!(
                "scenario schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.config.validate()?;
        let n = self.clients.len();
        if self.num_edges < 2 || n < self.num_edges {
            return Err(Error::invalid(
                "scenario",
                format!("need N >= M >= 2, got N = {n}, M = {}", self.num_edges),
            ));
        }
        for c in &self.clients {
            c.validate(self.num_edges, self.generator.classes)?;
        }
        Ok(())
    }

    pub fn label_counts(&self) -> Vec<Vec<u64>> {
        self.clients.iter().map(|c| c.label_counts.clone()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        crate::report::to_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::report::write_json(path, self)
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Splits `total` items over `classes`, one equal share per class in
/// `chosen` (earlier classes absorb the remainder).
fn shard_counts(total: u64, classes: usize, chosen: &[usize]) -> Vec<u64> {
    let s = chosen.len() as u64;
    let mut counts = vec![0; classes];
    for (i, &k) in chosen.iter().enumerate() {
        counts[k] = total / s + u64::from((i as u64) < total % s);
    }
    counts
}

/// Rounds `props * total` to integers summing to `total` by largest remainder.
fn apportion(props: &[f64], total: u64) -> Vec<u64> {
    let raw: Vec<f64> = props.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<u64> = raw.iter().map(|r| r.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..props.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().take(total.saturating_sub(assigned) as usize) {
        counts[k] += 1;
    }
    counts
}

/// Builds a deterministic scenario from `spec`; `config` supplies the shared
/// network constants.
///
/// Label shards are dealt cyclically over a random class permutation, so with
/// `N * s` divisible by `C` every class is held by the same number of clients.
pub fn generate_scenario(spec: &GeneratorSpec, config: NetworkConfig) -> Result<Scenario> {
    config.validate()?;
    spec.hardware.validate()?;
    if spec.edges < 2 || spec.clients < spec.edges {
        return Err(Error::invalid(
            "scenario",
            format!("need N >= M >= 2, got N = {}, M = {}", spec.clients, spec.edges),
        ));
    }
    if spec.classes == 0 || spec.features == 0 {
        return Err(Error::invalid("scenario", "need at least one class and one feature"));
    }
    match spec.skew {
        LabelSkew::Shards(s) if s == 0 || s > spec.classes => {
            return Err(Error::invalid("shards", format!("{s} shards with {} classes", spec.classes)));
        }
        LabelSkew::Shards(s) if (spec.hardware.data_size.0 as usize) < s => {
            return Err(Error::invalid("shards", "data size smaller than shard count"));
        }
        LabelSkew::Dirichlet(alpha) if !(alpha > 0.0 && alpha.is_finite()) => {
            return Err(Error::invalid("dirichlet", format!("alpha must be positive, got {alpha}")));
        }
        _ => {}
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let hw = spec.hardware;
    let mut class_order: Vec<usize> = (0..spec.classes).collect();
    class_order.shuffle(&mut rng);
    let mut slots: Vec<usize> = (0..spec.clients).collect();
    slots.shuffle(&mut rng);

    let mut clients = Vec::with_capacity(spec.clients);
    for &slot in &slots {
        let data_size = rng.random_range(hw.data_size.0..=hw.data_size.1);
        let label_counts = match spec.skew {
            LabelSkew::Shards(s) => {
                let chosen: Vec<usize> = (0..s).map(|k| class_order[(slot * s + k) % spec.classes]).collect();
                shard_counts(data_size, spec.classes, &chosen)
            }
            LabelSkew::Dirichlet(alpha) => {
                let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::invalid("dirichlet", e.to_string()))?;
                let draws: Vec<f64> = (0..spec.classes).map(|_| gamma.sample(&mut rng)).collect();
                let sum: f64 = draws.iter().sum();
                let props: Vec<f64> = if sum > 0.0 {
                    draws.iter().map(|d| d / sum).collect()
                } else {
                    vec![1.0 / spec.classes as f64; spec.classes]
                };
                apportion(&props, data_size)
            }
        };
        clients.push(ClientProfile {
            data_size,
            cycles_per_item: uniform(&mut rng, hw.cycles_per_item),
            cpu_freq: uniform(&mut rng, hw.cpu_freq),
            channel_gains: (0..spec.edges).map(|_| uniform(&mut rng, hw.channel_gain)).collect(),
            p_max: uniform(&mut rng, hw.p_max),
            label_counts,
        });
    }

    let scenario = Scenario {
        schema_version: SCHEMA_VERSION,
        config,
        num_edges: spec.edges,
        clients,
        generator: spec.clone(),
    };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bytes() {
        let spec = GeneratorSpec::default();
        let a = generate_scenario(&spec, NetworkConfig::default()).unwrap().to_json().unwrap();
        let b = generate_scenario(&spec, NetworkConfig::default()).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let other = GeneratorSpec { seed: 1, ..spec };
        let c = generate_scenario(&other, NetworkConfig::default()).unwrap().to_json().unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn shards_give_exact_support() {
        let spec = GeneratorSpec {
            skew: LabelSkew::Shards(2),
            classes: 10,
            ..GeneratorSpec::default()
        };
        let s = generate_scenario(&spec, NetworkConfig::default()).unwrap();
        assert_eq!(s.clients.len(), 50);
        assert_eq!(s.num_edges, 5);
        let mut per_class = [0; 10];
        for c in &s.clients {
            let support: Vec<usize> = (0..10).filter(|&k| c.label_counts[k] > 0).collect();
            assert_eq!(support.len(), 2);
            for k in support {
                per_class[k] += 1;
            }
        }
        // 50 clients x 2 shards over 10 classes: 10 holders per class.
        assert!(per_class.iter().all(|&x| x == 10));
    }

    #[test]
    fn dirichlet_counts_sum_to_data_size() {
        let spec = GeneratorSpec {
            skew: LabelSkew::Dirichlet(0.3),
            hardware: HardwareRanges {
                data_size: (100, 400),
                ..HardwareRanges::default()
            },
            ..GeneratorSpec::default()
        };
        let s = generate_scenario(&spec, NetworkConfig::default()).unwrap();
        for c in &s.clients {
            assert_eq!(c.label_counts.iter().sum::<u64>(), c.data_size);
            assert!((100..=400).contains(&c.data_size));
        }
    }

    #[test]
    fn hardware_within_ranges() {
        let s = generate_scenario(&GeneratorSpec::default(), NetworkConfig::default()).unwrap();
        let hw = HardwareRanges::default();
        for c in &s.clients {
            assert!(c.cpu_freq >= hw.cpu_freq.0 && c.cpu_freq <= hw.cpu_freq.1);
            assert!(c.p_max >= hw.p_max.0 && c.p_max <= hw.p_max.1);
            assert_eq!(c.channel_gains.len(), 5);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let cfg = NetworkConfig::default();
        let bad = [
            GeneratorSpec {
                edges: 1,
                ..GeneratorSpec::default()
            },
            GeneratorSpec {
                clients: 3,
                edges: 5,
                ..GeneratorSpec::default()
            },
            GeneratorSpec {
                skew: LabelSkew::Shards(11),
                ..GeneratorSpec::default()
            },
            GeneratorSpec {
                skew: LabelSkew::Dirichlet(0.0),
                ..GeneratorSpec::default()
            },
            GeneratorSpec {
                hardware: HardwareRanges {
                    p_max: (1.0, 0.5),
                    ..HardwareRanges::default()
                },
                ..GeneratorSpec::default()
            },
        ];
        for spec in bad {
            assert!(generate_scenario(&spec, cfg.clone()).is_err(), "{spec:?}");
        }
    }

    #[test]
    fn json_round_trip() {
        let s = generate_scenario(&GeneratorSpec::default(), NetworkConfig::default()).unwrap();
        let back = Scenario::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn apportion_is_exact() {
        assert_eq!(apportion(&[0.5, 0.25, 0.25], 10), vec![5, 3, 2]);
        assert_eq!(apportion(&[1.0 / 3.0; 3], 10).iter().sum::<u64>(), 10);
    }
}
