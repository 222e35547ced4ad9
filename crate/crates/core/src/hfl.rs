//! Toy-scale hierarchical FedAvg with a multinomial logistic-regression learner.
//!
//! One global round: every edge server starts from the global model and runs
//! `tau_e` edge iterations, each consisting of `tau_c` full-batch gradient
//! steps on every member client followed by a data-size-weighted edge
//! average. The cloud then averages the edge models weighted by coalition
//! data volume.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Partition;
use crate::par::Execution;

/// Weights of a `classes x features` linear layer followed by `classes` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub classes: usize,
    pub features: usize,
    pub values: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(classes: usize, features: usize) -> Self {
        Self {
            classes,
            features,
            values: vec![0.0; classes * features + classes],
        }
    }

    pub fn random<R: Rng + ?Sized>(classes: usize, features: usize, scale: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, scale).expect("finite scale");
        let mut p = Self::zeros(classes, features);
        for w in p.values.iter_mut().take(classes * features) {
            *w = normal.sample(rng);
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    fn logits(&self, x: &[f64], out: &mut [f64]) {
        let f = self.features;
        let bias = &self.values[self.classes * f..];
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.values[k * f..(k + 1) * f];
            *o = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + bias[k];
        }
    }
}

/// Row-major feature matrix with integer labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledData {
    pub features: usize,
    pub x: Vec<f64>,
    pub y: Vec<usize>,
}

impl LabeledData {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.features..(i + 1) * self.features]
    }

    pub fn label_histogram(&self, classes: usize) -> Vec<u64> {
        let mut h = vec![0; classes];
        for &y in &self.y {
            h[y] += 1;
        }
        h
    }

    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a LabeledData>, features: usize) -> LabeledData {
        let mut out = LabeledData {
            features,
            x: Vec::new(),
            y: Vec::new(),
        };
        for p in parts {
            out.x.extend_from_slice(&p.x);
            out.y.extend_from_slice(&p.y);
        }
        out
    }
}

/// Gaussian class clusters: class k has a random center, samples add
/// isotropic noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub features: usize,
    /// Standard deviation of each center coordinate.
    pub separation: f64,
    /// Standard deviation of the per-sample noise.
    pub noise: f64,
    pub test_per_class: usize,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            features: 16,
            separation: 1.0,
            noise: 2.0,
            test_per_class: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub classes: usize,
    pub centers: Vec<Vec<f64>>,
    pub clients: Vec<LabeledData>,
    pub test: LabeledData,
}

impl SyntheticDataset {
    /// Draws client data whose label histograms equal `label_counts`.
    pub fn generate(label_counts: &[Vec<u64>], spec: &DataSpec, seed: u64) -> Result<Self> {
        let classes = label_counts.first().map_or(0, Vec::len);
        if classes == 0 || spec.features == 0 {
            return Err(Error::invalid("dataset", "need at least one class and one feature"));
        }
        if !(spec.separation > 0.0 && spec.noise > 0.0) {
            return Err(Error::invalid("dataset", "separation and noise must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center_dist = Normal::new(0.0, spec.separation).map_err(|e| Error::invalid("separation", e.to_string()))?;
        let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::invalid("noise", e.to_string()))?;
        let centers: Vec<Vec<f64>> = (0..classes)
            .map(|_| (0..spec.features).map(|_| center_dist.sample(&mut rng)).collect())
            .collect();

        let draw = |class: usize, out: &mut LabeledData, rng: &mut ChaCha8Rng| {
            for &c in &centers[class] {
                out.x.push(c + noise.sample(rng));
            }
            out.y.push(class);
        };

        let mut clients = Vec::with_capacity(label_counts.len());
        for counts in label_counts {
            if counts.len() != classes {
                return Err(Error::DimensionMismatch {
                    left: classes,
                    right: counts.len(),
                });
            }
            let mut d = LabeledData {
                features: spec.features,
                x: Vec::new(),
                y: Vec::new(),
            };
            for (k, &c) in counts.iter().enumerate() {
                for _ in 0..c {
                    draw(k, &mut d, &mut rng);
                }
            }
            clients.push(d);
        }
        let mut test = LabeledData {
            features: spec.features,
            x: Vec::new(),
            y: Vec::new(),
        };
        for k in 0..classes {
            for _ in 0..spec.test_per_class {
                draw(k, &mut test, &mut rng);
            }
        }
        Ok(Self {
            classes,
            centers,
            clients,
            test,
        })
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Mean softmax cross-entropy (nats) and its gradient.
pub fn loss_and_gradient(params: &ModelParams, data: &LabeledData) -> (f64, Vec<f64>) {
    let (c, f) = (params.classes, params.features);
    let mut grad = vec![0.0; params.dim()];
    if data.is_empty() {
        return (0.0, grad);
    }
    let mut z = vec![0.0; c];
    let mut loss = 0.0;
    for i in 0..data.len() {
        let x = data.row(i);
        let y = data.y[i];
        params.logits(x, &mut z);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - z[y];
        softmax_in_place(&mut z);
        z[y] -= 1.0;
        for k in 0..c {
            let r = z[k];
            let row = &mut grad[k * f..(k + 1) * f];
            for (g, xi) in row.iter_mut().zip(x) {
                *g += r * xi;
            }
            grad[c * f + k] += r;
        }
    }
    let n = data.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad)
}

pub fn loss(params: &ModelParams, data: &LabeledData) -> f64 {
    loss_and_gradient(params, data).0
}

pub fn accuracy(params: &ModelParams, data: &LabeledData) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let mut z = vec![0.0; params.classes];
    let correct = (0..data.len())
        .filter(|&i| {
            params.logits(data.row(i), &mut z);
            let pred = z
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(k, _)| k)
                .unwrap_or(0);
            pred == data.y[i]
        })
        .count();
    correct as f64 / data.len() as f64
}

/// `steps` full-batch gradient-descent steps on the client's data.
pub fn local_train(params: &ModelParams, data: &LabeledData, steps: u32, lr: f64) -> Result<ModelParams> {
    if params.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("model parameters"));
    }
    let mut p = params.clone();
    for _ in 0..steps {
        let (l, g) = loss_and_gradient(&p, data);
        if !l.is_finite() {
            return Err(Error::NonFinite("local training loss"));
        }
        for (w, gi) in p.values.iter_mut().zip(&g) {
            *w -= lr * gi;
        }
    }
    if p.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("local training update"));
    }
    Ok(p)
}

/// Weighted mean of parameter vectors with weights proportional to `weights`.
pub fn weighted_average(models: &[&ModelParams], weights: &[f64]) -> Result<ModelParams> {
    let first = models.first().ok_or(Error::EmptyCoalition(0))?;
    if weights.len() != models.len() {
        return Err(Error::DimensionMismatch {
            left: models.len(),
            right: weights.len(),
        });
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || weights.iter().any(|w| *w < 0.0) {
        return Err(Error::invalid("weights", "must be non-negative with positive sum"));
    }
    let mut out = ModelParams::zeros(first.classes, first.features);
    for (m, &w) in models.iter().zip(weights) {
        if m.dim() != out.dim() {
            return Err(Error::DimensionMismatch {
                left: out.dim(),
                right: m.dim(),
            });
        }
        let share = w / total;
        for (o, v) in out.values.iter_mut().zip(&m.values) {
            *o += share * v;
        }
    }
    Ok(out)
}

/// Edge aggregation: member models weighted by their data sizes.
pub fn edge_aggregate(members: &[&ModelParams], data_sizes: &[u64]) -> Result<ModelParams> {
    let w: Vec<f64> = data_sizes.iter().map(|&d| d as f64).collect();
    weighted_average(members, &w)
}

/// Global aggregation: edge models weighted by their coalitions' total data.
pub fn global_aggregate(edges: &[&ModelParams], edge_data_sizes: &[u64]) -> Result<ModelParams> {
    edge_aggregate(edges, edge_data_sizes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HflConfig {
    pub tau_c: u32,
    pub tau_e: u32,
    pub tau_g: u32,
    pub learning_rate: f64,
    /// Standard deviation of the initial weights.
    pub init_scale: f64,
}

impl Default for HflConfig {
    fn default() -> Self {
        Self {
            tau_c: 5,
            tau_e: 20,
            tau_g: 10,
            learning_rate: 0.5,
            init_scale: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HflRun {
    pub model: ModelParams,
    /// Held-out accuracy after each global round.
    pub accuracy: Vec<f64>,
}

impl HflRun {
    pub fn final_accuracy(&self) -> f64 {
        self.accuracy.last().copied().unwrap_or(0.0)
    }
}

/// Runs the full nested loop and records test accuracy per global round.
///
/// Client updates inside an edge iteration may run in parallel; aggregation
/// order is fixed, so results do not depend on scheduling.
pub fn run_hfl(partition: &Partition, dataset: &SyntheticDataset, config: &HflConfig, seed: u64, exec: Execution) -> Result<HflRun> {
    let n = partition.num_clients();
    if dataset.clients.len() != n {
        return Err(Error::DimensionMismatch {
            left: n,
            right: dataset.clients.len(),
        });
    }
    if config.tau_c == 0 || config.tau_e == 0 || config.tau_g == 0 {
        return Err(Error::invalid("hfl rounds", "tau_c, tau_e and tau_g must be at least 1"));
    }
    let features = dataset.test.features;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut global = ModelParams::random(dataset.classes, features, config.init_scale, &mut rng);

    let sizes: Vec<u64> = dataset.clients.iter().map(|d| d.len() as u64).collect();
    let edge_sizes: Vec<u64> = partition
        .coalitions()
        .iter()
        .map(|members| members.iter().map(|&i| sizes[i]).sum())
        .collect();
    let assignment = partition.assignment();

    let mut curve = Vec::with_capacity(config.tau_g as usize);
    for _ in 0..config.tau_g {
        let mut edges = vec![global.clone(); partition.num_coalitions()];
        for _ in 0..config.tau_e {
            let locals = exec
                .map_range(n, |i| {
                    local_train(&edges[assignment[i]], &dataset.clients[i], config.tau_c, config.learning_rate)
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            for (m, members) in partition.coalitions().iter().enumerate() {
                let models: Vec<&ModelParams> = members.iter().map(|&i| &locals[i]).collect();
                let weights: Vec<u64> = members.iter().map(|&i| sizes[i]).collect();
                edges[m] = edge_aggregate(&models, &weights)?;
            }
        }
        let refs: Vec<&ModelParams> = edges.iter().collect();
        global = global_aggregate(&refs, &edge_sizes)?;
        curve.push(accuracy(&global, &dataset.test));
    }
    Ok(HflRun {
        model: global,
        accuracy: curve,
    })
}
