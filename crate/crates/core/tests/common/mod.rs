//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's numerical code paths.

#![allow(dead_code)]

use leap_core::netmodel::{ClientProfile, NetworkConfig};
use rand::Rng;

/// Plain base-2 JSD of two histograms, straight from the definition.
pub fn js(a: &[u64], b: &[u64]) -> f64 {
    let sa: f64 = a.iter().sum::<u64>() as f64;
    let sb: f64 = b.iter().sum::<u64>() as f64;
    let mut d = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let p = x as f64 / sa;
        let q = y as f64 / sb;
        let m = 0.5 * (p + q);
        if p > 0.0 {
            d += 0.5 * p * (p / m).log2();
        }
        if q > 0.0 {
            d += 0.5 * q * (q / m).log2();
        }
    }
    d
}

pub fn coalition_histograms(assignment: &[usize], m: usize, counts: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let c = counts[0].len();
    let mut h = vec![vec![0u64; c]; m];
    for (n, &k) in assignment.iter().enumerate() {
        for (slot, &x) in h[k].iter_mut().zip(&counts[n]) {
            *slot += x;
        }
    }
    h
}

/// Sum over coalition pairs i < j of JSD.
pub fn potential(assignment: &[usize], m: usize, counts: &[Vec<u64>]) -> f64 {
    let h = coalition_histograms(assignment, m, counts);
    let mut s = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            s += js(&h[i], &h[j]);
        }
    }
    s
}

/// Average JSD with the default (divide by M) normalization.
pub fn avg_js(assignment: &[usize], m: usize, counts: &[Vec<u64>]) -> f64 {
    potential(assignment, m, counts) / m as f64
}

/// Global minimum of the average JSD over all assignments with no empty
/// coalition, by brute force over all M^N labelings.
pub fn exhaustive_min_avg_js(counts: &[Vec<u64>], m: usize) -> f64 {
    let n = counts.len();
    let total = m.pow(n as u32);
    let mut best = f64::INFINITY;
    let mut a = vec![0usize; n];
    for code in 0..total {
        let mut x = code;
        for slot in a.iter_mut() {
            *slot = x % m;
            x /= m;
        }
        let mut used = vec![false; m];
        for &k in &a {
            used[k] = true;
        }
        if used.iter().all(|&u| u) {
            best = best.min(avg_js(&a, m, counts));
        }
    }
    best
}

/// Random label histograms, every client non-empty.
pub fn random_counts<R: Rng>(rng: &mut R, n: usize, c: usize, max: u64) -> Vec<Vec<u64>> {
    (0..n)
        .map(|_| loop {
            let h: Vec<u64> = (0..c).map(|_| if rng.random_bool(0.5) { rng.random_range(0..=max) } else { 0 }).collect();
            if h.iter().any(|&x| x > 0) {
                break h;
            }
        })
        .collect()
}

pub fn random_profile<R: Rng>(rng: &mut R, edges: usize, classes: usize) -> ClientProfile {
    let data_size = rng.random_range(100..=1000u64);
    let mut label_counts = vec![0; classes];
    label_counts[0] = data_size;
    ClientProfile {
        data_size,
        cycles_per_item: rng.random_range(1e5..5e5),
        cpu_freq: rng.random_range(1e9..2e9),
        channel_gains: (0..edges).map(|_| 10f64.powf(rng.random_range(-8.0..-6.0))).collect(),
        p_max: rng.random_range(0.1..1.0),
        label_counts,
    }
}

/// Upload time of one client: Z / (b log2(1 + p h / (b N0))).
pub fn upload_time(share: f64, power: f64, gain: f64, cfg: &NetworkConfig) -> f64 {
    cfg.model_size / (share * (1.0 + power * gain / (share * cfg.noise_power)).log2())
}

pub fn upload_energy(share: f64, power: f64, gain: f64, cfg: &NetworkConfig) -> f64 {
    power * upload_time(share, power, gain, cfg)
}

pub fn compute_time(c: &ClientProfile, cfg: &NetworkConfig) -> f64 {
    f64::from(cfg.tau_c) * c.cycles_per_item * c.data_size as f64 / c.cpu_freq
}

/// Worst-case bandwidth objective written out directly: for each coalition,
/// the member with the smallest p_max * h transmits at p_max on an equal
/// share of B_m.
pub fn bandwidth_objective(b: &[f64], groups: &[Vec<usize>], profiles: &[ClientProfile], cfg: &NetworkConfig) -> f64 {
    let rounds = f64::from(cfg.tau_e) * f64::from(cfg.tau_g);
    groups
        .iter()
        .zip(b)
        .enumerate()
        .map(|(m, (members, &bm))| {
            let worst = members
                .iter()
                .copied()
                .min_by(|&x, &y| {
                    let gx = profiles[x].p_max * profiles[x].channel_gains[m];
                    let gy = profiles[y].p_max * profiles[y].channel_gains[m];
                    gx.total_cmp(&gy)
                })
                .unwrap();
            let p = &profiles[worst];
            let size = members.len() as f64;
            cfg.lambda2 * size * rounds * upload_energy(bm / size, p.p_max, p.channel_gains[m], cfg)
        })
        .sum()
}

/// Smallest power in (0, p_max] meeting the per-iteration budget, by
/// bisection down to `resolution`; `p_max` when even that misses it.
pub fn bisect_power(client: &ClientProfile, edge: usize, share: f64, cfg: &NetworkConfig, resolution: f64) -> f64 {
    let budget = cfg.deadline / (f64::from(cfg.tau_e) * f64::from(cfg.tau_g));
    let gain = client.channel_gains[edge];
    let meets = |p: f64| compute_time(client, cfg) + upload_time(share, p, gain, cfg) <= budget;
    if !meets(client.p_max) {
        return client.p_max;
    }
    let (mut lo, mut hi) = (0.0, client.p_max);
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        if mid > 0.0 && meets(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut up = x.to_vec();
    let mut down = x.to_vec();
    up[i] += h;
    down[i] -= h;
    (f(&up) - f(&down)) / (2.0 * h)
}

pub fn relative(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
