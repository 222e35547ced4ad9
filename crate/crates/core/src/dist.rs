//! Label distributions and the divergences used to score coalitions.
//!
//! All logarithms are base 2, so the Jensen-Shannon divergence lies in [0, 1].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalized histogram over class labels.
///
/// Built either from raw label counts (the normal case, kept alongside the
/// normalized vector so coalition bookkeeping stays exact) or directly from
/// probabilities. A distribution with zero total count is flagged empty and is
/// rejected by every divergence call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    counts: Option<Vec<u64>>,
}

impl LabelDistribution {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total: u64 = counts.iter().sum();
        let probs = if total == 0 {
            vec![0.0; counts.len()]
        } else {
            let t = total as f64;
            counts.iter().map(|&c| c as f64 / t).collect()
        };
        Self {
            probs,
            counts: Some(counts),
        }
    }

    /// Accepts a probability vector whose entries are non-negative and sum to
    /// one within 1e-9; the stored vector is renormalized.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidProbabilities("no classes".into()));
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidProbabilities(format!("entry {bad}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidProbabilities(format!("sum {sum}")));
        }
        Ok(Self {
            probs: probs.iter().map(|p| p / sum).collect(),
            counts: None,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn counts(&self) -> Option<&[u64]> {
        self.counts.as_deref()
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        match &self.counts {
            Some(c) => c.iter().all(|&x| x == 0),
            None => false,
        }
    }

    fn require_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::EmptyDistribution)
        } else {
            Ok(())
        }
    }
}

fn check_dims(a: &LabelDistribution, b: &LabelDistribution) -> Result<()> {
    if a.num_classes() != b.num_classes() {
        return Err(Error::DimensionMismatch {
            left: a.num_classes(),
            right: b.num_classes(),
        });
    }
    Ok(())
}

/// KL(p || q) in bits, with 0 * log(0 / x) = 0.
pub fn kl_divergence(p: &LabelDistribution, q: &LabelDistribution) -> Result<f64> {
    check_dims(p, q)?;
    p.require_nonempty()?;
    q.require_nonempty()?;
    let mut acc = 0.0;
    for (k, (&pk, &qk)) in p.probs.iter().zip(&q.probs).enumerate() {
        if pk == 0.0 {
            continue;
        }
        if qk == 0.0 {
            return Err(Error::SupportViolation { class: k });
        }
        acc += pk * (pk / qk).log2();
    }
    Ok(acc.max(0.0))
}

pub fn mean_distribution(a: &LabelDistribution, b: &LabelDistribution) -> Result<LabelDistribution> {
    check_dims(a, b)?;
    let probs = a
        .probs
        .iter()
        .zip(&b.probs)
        .map(|(x, y)| (x + y) / 2.0)
        .collect();
    Ok(LabelDistribution {
        probs,
        counts: None,
    })
}

/// Jensen-Shannon divergence in bits; symmetric and bounded by 1.
pub fn js_divergence(a: &LabelDistribution, b: &LabelDistribution) -> Result<f64> {
    check_dims(a, b)?;
    a.require_nonempty()?;
    b.require_nonempty()?;
    let m = mean_distribution(a, b)?;
    let js = (kl_divergence(a, &m)? + kl_divergence(b, &m)?) / 2.0;
    Ok(js.clamp(0.0, 1.0))
}

/// Sums the label counts of `members` and renormalizes.
pub fn coalition_distribution(members: &[usize], client_counts: &[Vec<u64>]) -> Result<LabelDistribution> {
    let first = *members.first().ok_or(Error::EmptyCoalition(0))?;
    let classes = client_counts
        .get(first)
        .ok_or(Error::OutOfRange {
            index: first,
            len: client_counts.len(),
        })?
        .len();
    let mut sum = vec![0u64; classes];
    for &n in members {
        let counts = client_counts.get(n).ok_or(Error::OutOfRange {
            index: n,
            len: client_counts.len(),
        })?;
        if counts.len() != classes {
            return Err(Error::DimensionMismatch {
                left: classes,
                right: counts.len(),
            });
        }
        for (s, c) in sum.iter_mut().zip(counts) {
            *s += c;
        }
    }
    Ok(LabelDistribution::from_counts(sum))
}

/// Divisor applied to the pairwise JSD sum when averaging.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JsDenominator {
    /// Divide by the number of coalitions M.
    #[default]
    Coalitions,
    /// Divide by the number of unordered pairs M(M-1)/2.
    Pairs,
}

impl JsDenominator {
    pub fn divisor(self, coalitions: usize) -> f64 {
        match self {
            JsDenominator::Coalitions => coalitions as f64,
            JsDenominator::Pairs => (coalitions * coalitions.saturating_sub(1)) as f64 / 2.0,
        }
    }
}

/// Sum of JS(Q_i, Q_j) over all unordered pairs i < j.
pub fn pairwise_js_sum(dists: &[LabelDistribution]) -> Result<f64> {
    for (i, d) in dists.iter().enumerate() {
        if d.is_empty() {
            return Err(Error::EmptyCoalition(i));
        }
    }
    let mut total = 0.0;
    for i in 0..dists.len() {
        for j in i + 1..dists.len() {
            total += js_divergence(&dists[i], &dists[j])?;
        }
    }
    Ok(total)
}

pub fn avg_pairwise_js(dists: &[LabelDistribution], denominator: JsDenominator) -> Result<f64> {
    let sum = pairwise_js_sum(dists)?;
    let div = denominator.divisor(dists.len());
    if div == 0.0 {
        return Ok(0.0);
    }
    Ok(sum / div)
}
