//! Coalition formation game over client-to-edge associations.
//!
//! Each client is a player whose strategy is the edge server (coalition) it
//! associates with. A client switches coalitions only when the move lowers the
//! system-wide average pairwise JSD between coalition label distributions.
//! The sum of pairwise JSD values is an exact potential for this game, so the
//! randomized improvement loop in [`run_coalition_formation`] terminates in a
//! Nash-stable partition.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{coalition_distribution, js_divergence, JsDenominator, LabelDistribution};
use crate::error::{Error, Result};
use crate::par::Execution;

/// A switch must lower the average JSD by more than this to be accepted.
pub const SWITCH_TOLERANCE: f64 = 1e-10;

/// Name of the generator driving client sampling, echoed into traces.
pub const GAME_RNG: &str = "ChaCha8Rng";

/// Disjoint cover of the clients by `M` non-empty coalitions, with cached
/// coalition distributions and the pairwise JSD matrix.
#[derive(Debug, Clone)]
pub struct Partition {
    assignment: Vec<usize>,
    coalitions: Vec<Vec<usize>>,
    label_counts: Arc<[Vec<u64>]>,
    coalition_counts: Vec<Vec<u64>>,
    distributions: Vec<LabelDistribution>,
    pairwise: Vec<f64>,
    denominator: JsDenominator,
}

/// Serializable form of a [`Partition`]; caches are rebuilt on load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionRecord {
    pub num_coalitions: usize,
    pub assignment: Vec<usize>,
    #[serde(default)]
    pub denominator: JsDenominator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchProposal {
    pub client: usize,
    pub from: usize,
    pub to: usize,
    /// Average JSD after the move minus average JSD before it.
    pub delta_js: f64,
}

impl Partition {
    pub fn new(
        assignment: Vec<usize>,
        num_coalitions: usize,
        label_counts: impl Into<Arc<[Vec<u64>]>>,
        denominator: JsDenominator,
    ) -> Result<Self> {
        let label_counts = label_counts.into();
        if assignment.len() != label_counts.len() {
            return Err(Error::InvalidPartition(format!(
                "{} assignments for {} clients",
                assignment.len(),
                label_counts.len()
            )));
        }
        if num_coalitions == 0 {
            return Err(Error::InvalidPartition("no coalitions".into()));
        }
        let classes = label_counts.first().map_or(0, Vec::len);
        if let Some(bad) = label_counts.iter().find(|c| c.len() != classes) {
            return Err(Error::DimensionMismatch {
                left: classes,
                right: bad.len(),
            });
        }
        let mut coalitions = vec![Vec::new(); num_coalitions];
        for (client, &m) in assignment.iter().enumerate() {
            let members = coalitions.get_mut(m).ok_or_else(|| {
                Error::InvalidPartition(format!("client {client} assigned to coalition {m} of {num_coalitions}"))
            })?;
            members.push(client);
        }
        let mut coalition_counts = Vec::with_capacity(num_coalitions);
        let mut distributions = Vec::with_capacity(num_coalitions);
        for (m, members) in coalitions.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::EmptyCoalition(m));
            }
            let dist = coalition_distribution(members, &label_counts)?;
            if dist.is_empty() {
                return Err(Error::EmptyCoalition(m));
            }
            coalition_counts.push(dist.counts().map(<[u64]>::to_vec).unwrap_or_default());
            distributions.push(dist);
        }
        let mut partition = Self {
            assignment,
            coalitions,
            label_counts,
            coalition_counts,
            distributions,
            pairwise: vec![0.0; num_coalitions * num_coalitions],
            denominator,
        };
        for m in 0..num_coalitions {
            partition.refresh_row(m)?;
        }
        Ok(partition)
    }

    pub fn from_record(record: &PartitionRecord, label_counts: impl Into<Arc<[Vec<u64>]>>) -> Result<Self> {
        Self::new(
            record.assignment.clone(),
            record.num_coalitions,
            label_counts,
            record.denominator,
        )
    }

    pub fn to_record(&self) -> PartitionRecord {
        PartitionRecord {
            num_coalitions: self.num_coalitions(),
            assignment: self.assignment.clone(),
            denominator: self.denominator,
        }
    }

    /// Uniformly random association in which every coalition is non-empty:
    /// a random permutation seeds one client per coalition, the rest pick
    /// coalitions uniformly.
    pub fn random_assignment<R: Rng + ?Sized>(num_clients: usize, num_coalitions: usize, rng: &mut R) -> Result<Vec<usize>> {
        if num_coalitions == 0 || num_clients < num_coalitions {
            return Err(Error::InvalidPartition(format!(
                "cannot cover {num_coalitions} coalitions with {num_clients} clients"
            )));
        }
        let mut order: Vec<usize> = (0..num_clients).collect();
        for i in (1..num_clients).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut assignment = vec![0; num_clients];
        for (rank, &client) in order.iter().enumerate() {
            assignment[client] = if rank < num_coalitions {
                rank
            } else {
                rng.random_range(0..num_coalitions)
            };
        }
        Ok(assignment)
    }

    /// Random association drawn from a `ChaCha8Rng` seeded with `seed`.
    pub fn seeded_random(label_counts: Vec<Vec<u64>>, num_coalitions: usize, denominator: JsDenominator, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let assignment = Self::random_assignment(label_counts.len(), num_coalitions, &mut rng)?;
        Self::new(assignment, num_coalitions, label_counts, denominator)
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn coalitions(&self) -> &[Vec<usize>] {
        &self.coalitions
    }

    pub fn num_coalitions(&self) -> usize {
        self.coalitions.len()
    }

    pub fn num_clients(&self) -> usize {
        self.assignment.len()
    }

    pub fn coalition_of(&self, client: usize) -> Result<usize> {
        self.assignment.get(client).copied().ok_or(Error::OutOfRange {
            index: client,
            len: self.assignment.len(),
        })
    }

    pub fn label_counts(&self) -> &Arc<[Vec<u64>]> {
        &self.label_counts
    }

    pub fn distributions(&self) -> &[LabelDistribution] {
        &self.distributions
    }

    pub fn denominator(&self) -> JsDenominator {
        self.denominator
    }

    pub fn pairwise_js(&self, i: usize, j: usize) -> f64 {
        self.pairwise[i * self.num_coalitions() + j]
    }

    /// Sum of cached pairwise JSD values over i < j.
    pub fn potential(&self) -> f64 {
        let m = self.num_coalitions();
        let mut total = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                total += self.pairwise[i * m + j];
            }
        }
        total
    }

    pub fn avg_js(&self) -> f64 {
        let div = self.denominator.divisor(self.num_coalitions());
        if div == 0.0 {
            0.0
        } else {
            self.potential() / div
        }
    }

    fn refresh_row(&mut self, m: usize) -> Result<()> {
        let mm = self.num_coalitions();
        for j in 0..mm {
            let v = if j == m {
                0.0
            } else {
                js_divergence(&self.distributions[m], &self.distributions[j])?
            };
            self.pairwise[m * mm + j] = v;
            self.pairwise[j * mm + m] = v;
        }
        Ok(())
    }

    fn moved_counts(&self, client: usize, from: usize, to: usize) -> (Vec<u64>, Vec<u64>) {
        let own = &self.label_counts[client];
        let from_counts = self.coalition_counts[from]
            .iter()
            .zip(own)
            .map(|(c, x)| c - x)
            .collect();
        let to_counts = self.coalition_counts[to]
            .iter()
            .zip(own)
            .map(|(c, x)| c + x)
            .collect();
        (from_counts, to_counts)
    }

    fn check_move(&self, client: usize, target: usize) -> Result<usize> {
        let from = self.coalition_of(client)?;
        if target >= self.num_coalitions() {
            return Err(Error::OutOfRange {
                index: target,
                len: self.num_coalitions(),
            });
        }
        if target == from {
            return Err(Error::SameCoalition {
                client,
                coalition: from,
            });
        }
        if self.coalitions[from].len() == 1 {
            return Err(Error::WouldEmptyCoalition {
                client,
                coalition: from,
            });
        }
        Ok(from)
    }

    /// Change in average JSD if `client` moved to `target`. Only the pairwise
    /// terms touching the source and target coalitions are recomputed.
    pub fn evaluate_switch(&self, client: usize, target: usize) -> Result<SwitchProposal> {
        let from = self.check_move(client, target)?;
        let (from_counts, to_counts) = self.moved_counts(client, from, target);
        let new_from = LabelDistribution::from_counts(from_counts);
        let new_to = LabelDistribution::from_counts(to_counts);
        // A client with no data leaves both distributions unchanged.
        if new_from.is_empty() {
            return Err(Error::WouldEmptyCoalition {
                client,
                coalition: from,
            });
        }

        let mut delta = 0.0;
        for j in 0..self.num_coalitions() {
            if j == from || j == target {
                continue;
            }
            let other = &self.distributions[j];
            delta += js_divergence(&new_from, other)? - self.pairwise_js(from, j);
            delta += js_divergence(&new_to, other)? - self.pairwise_js(target, j);
        }
        delta += js_divergence(&new_from, &new_to)? - self.pairwise_js(from, target);

        let div = self.denominator.divisor(self.num_coalitions());
        Ok(SwitchProposal {
            client,
            from,
            to: target,
            delta_js: if div == 0.0 { 0.0 } else { delta / div },
        })
    }

    /// Best improving move for `client`, or `None` if staying is at least as
    /// good as every admissible target (up to [`SWITCH_TOLERANCE`]).
    /// Ties go to the lowest coalition index.
    pub fn best_switch(&self, client: usize) -> Result<Option<SwitchProposal>> {
        let from = self.coalition_of(client)?;
        if self.coalitions[from].len() == 1 {
            return Ok(None);
        }
        let mut best: Option<SwitchProposal> = None;
        for target in 0..self.num_coalitions() {
            if target == from {
                continue;
            }
            let proposal = match self.evaluate_switch(client, target) {
                Ok(p) => p,
                Err(Error::WouldEmptyCoalition { .. }) => continue,
                Err(e) => return Err(e),
            };
            if best.is_none_or(|b| proposal.delta_js < b.delta_js) {
                best = Some(proposal);
            }
        }
        Ok(best.filter(|p| p.delta_js < -SWITCH_TOLERANCE))
    }

    /// Moves `client` to `target` and refreshes the affected caches.
    pub fn apply_switch(&mut self, client: usize, target: usize) -> Result<()> {
        let from = self.check_move(client, target)?;
        let (from_counts, to_counts) = self.moved_counts(client, from, target);

        let members = &mut self.coalitions[from];
        if let Ok(pos) = members.binary_search(&client) {
            members.remove(pos);
        }
        let members = &mut self.coalitions[target];
        if let Err(pos) = members.binary_search(&client) {
            members.insert(pos, client);
        }
        self.assignment[client] = target;

        self.distributions[from] = LabelDistribution::from_counts(from_counts.clone());
        self.distributions[target] = LabelDistribution::from_counts(to_counts.clone());
        self.coalition_counts[from] = from_counts;
        self.coalition_counts[target] = to_counts;
        self.refresh_row(from)?;
        self.refresh_row(target)
    }

    /// Recomputes every cache from the assignment and compares within `tol`.
    pub fn caches_consistent(&self, tol: f64) -> bool {
        let Ok(fresh) = Partition::new(
            self.assignment.clone(),
            self.num_coalitions(),
            self.label_counts.clone(),
            self.denominator,
        ) else {
            return false;
        };
        if fresh.coalitions != self.coalitions || fresh.coalition_counts != self.coalition_counts {
            return false;
        }
        let dists_ok = fresh
            .distributions
            .iter()
            .zip(&self.distributions)
            .all(|(a, b)| a.probs().iter().zip(b.probs()).all(|(x, y)| (x - y).abs() <= tol));
        dists_ok
            && fresh
                .pairwise
                .iter()
                .zip(&self.pairwise)
                .all(|(x, y)| (x - y).abs() <= tol)
    }
}

/// Potential of the game: sum of pairwise JSD over i < j, recomputed from the
/// assignment without touching the partition's caches.
pub fn potential(partition: &Partition) -> Result<f64> {
    let dists = fresh_distributions(partition.assignment(), partition.num_coalitions(), partition.label_counts())?;
    crate::dist::pairwise_js_sum(&dists)
}

fn fresh_distributions(assignment: &[usize], m: usize, counts: &[Vec<u64>]) -> Result<Vec<LabelDistribution>> {
    (0..m)
        .map(|c| {
            let members: Vec<usize> = (0..assignment.len()).filter(|&n| assignment[n] == c).collect();
            if members.is_empty() {
                return Err(Error::EmptyCoalition(c));
            }
            coalition_distribution(&members, counts)
        })
        .collect()
}

/// Utility of the switching client: every JSD term that touches its origin
/// or destination coalition (each pair once), plus the pairs among the
/// remaining coalitions.
fn switching_utility(dists: &[LabelDistribution], origin: usize, dest: usize) -> Result<f64> {
    let m = dists.len();
    let mut u = 0.0;
    for j in 0..m {
        if j != origin {
            u += js_divergence(&dists[origin], &dists[j])?;
        }
    }
    for j in 0..m {
        if j != origin && j != dest {
            u += js_divergence(&dists[dest], &dists[j])?;
        }
    }
    for i in 0..m {
        for j in i + 1..m {
            if [i, j].iter().all(|&x| x != origin && x != dest) {
                u += js_divergence(&dists[i], &dists[j])?;
            }
        }
    }
    Ok(u)
}

/// |change in potential - change in the client's utility| when `client`
/// moves to `target`, both recomputed from scratch. Zero for the identity move.
pub fn potential_gap(partition: &Partition, client: usize, target: usize) -> Result<f64> {
    let origin = partition.coalition_of(client)?;
    if target == origin {
        return Ok(0.0);
    }
    partition.check_move(client, target)?;
    let m = partition.num_coalitions();
    let counts = partition.label_counts();
    let before = fresh_distributions(partition.assignment(), m, counts)?;
    let mut moved = partition.assignment().to_vec();
    moved[client] = target;
    let after = fresh_distributions(&moved, m, counts)?;

    let d_potential = crate::dist::pairwise_js_sum(&after)? - crate::dist::pairwise_js_sum(&before)?;
    let d_utility = switching_utility(&after, origin, target)? - switching_utility(&before, origin, target)?;
    Ok((d_potential - d_utility).abs())
}

/// Checks that moving `client` to `target` changes the potential by exactly
/// the change in the client's utility, within `tol`.
pub fn verify_exact_potential(partition: &Partition, client: usize, target: usize, tol: f64) -> Result<bool> {
    Ok(potential_gap(partition, client, target)? <= tol)
}

/// True iff no single-client move lowers the average JSD by more than
/// [`SWITCH_TOLERANCE`].
pub fn certify_stability(partition: &Partition, exec: Execution) -> bool {
    !exec.any_in_range(partition.num_clients(), |n| {
        matches!(partition.best_switch(n), Ok(Some(_)) | Err(_))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameOptions {
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for GameOptions {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub client: usize,
    pub switch: Option<SwitchProposal>,
    pub avg_js: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameTrace {
    pub rng: String,
    pub seed: u64,
    pub initial_avg_js: f64,
    pub entries: Vec<TraceEntry>,
    pub iterations_used: usize,
    pub converged: bool,
}

impl GameTrace {
    pub fn accepted(&self) -> impl Iterator<Item = &TraceEntry> {
        self.entries.iter().filter(|e| e.switch.is_some())
    }

    pub fn accepted_count(&self) -> usize {
        self.accepted().count()
    }

    /// Average JSD before any move followed by the value after each accepted switch.
    pub fn js_curve(&self) -> Vec<f64> {
        std::iter::once(self.initial_avg_js)
            .chain(self.accepted().map(|e| e.avg_js))
            .collect()
    }

    pub fn final_avg_js(&self) -> f64 {
        self.entries.last().map_or(self.initial_avg_js, |e| e.avg_js)
    }
}

/// Randomized switch dynamics: sample a client uniformly, move it to its best
/// coalition if that strictly lowers the average JSD, repeat.
///
/// Stops once `N` consecutive samples produce no move and an exhaustive check
/// confirms no improving move remains, or after `max_iters` samples.
pub fn run_coalition_formation(initial: Partition, options: GameOptions) -> Result<(Partition, GameTrace)> {
    let n = initial.num_clients();
    if initial.num_coalitions() < 2 {
        return Err(Error::InvalidPartition("need at least two coalitions".into()));
    }
    if !initial.caches_consistent(1e-12) {
        return Err(Error::InvalidPartition("cached state does not match assignment".into()));
    }
    let mut partition = initial;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut trace = GameTrace {
        rng: GAME_RNG.to_string(),
        seed: options.seed,
        initial_avg_js: partition.avg_js(),
        entries: Vec::new(),
        iterations_used: 0,
        converged: false,
    };

    let mut idle = 0usize;
    for iteration in 0..options.max_iters {
        let client = rng.random_range(0..n);
        let switch = partition.best_switch(client)?;
        if let Some(p) = switch {
            partition.apply_switch(p.client, p.to)?;
            idle = 0;
        } else {
            idle += 1;
        }
        trace.entries.push(TraceEntry {
            iteration,
            client,
            switch,
            avg_js: partition.avg_js(),
        });
        trace.iterations_used = iteration + 1;
        if idle >= n {
            if certify_stability(&partition, Execution::Sequential) {
                trace.converged = true;
                break;
            }
            idle = 0;
        }
    }
    if !trace.converged {
        trace.converged = certify_stability(&partition, Execution::Sequential);
    }
    Ok((partition, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn one_hot(classes: &[usize], c: usize) -> Vec<Vec<u64>> {
        classes
            .iter()
            .map(|&k| {
                let mut v = vec![0; c];
                v[k] = 1;
                v
            })
            .collect()
    }

    fn brute_avg(assignment: &[usize], m: usize, counts: &[Vec<u64>]) -> f64 {
        let d = fresh_distributions(assignment, m, counts).unwrap();
        crate::dist::avg_pairwise_js(&d, JsDenominator::Coalitions).unwrap()
    }

    #[test]
    fn rejects_invalid_partitions() {
        let counts = one_hot(&[0, 1, 0], 2);
        assert!(matches!(
            Partition::new(vec![0, 0, 0], 2, counts.clone(), JsDenominator::Coalitions),
            Err(Error::EmptyCoalition(1))
        ));
        assert!(Partition::new(vec![0, 2, 1], 2, counts.clone(), JsDenominator::Coalitions).is_err());
        assert!(Partition::new(vec![0, 1], 2, counts, JsDenominator::Coalitions).is_err());
    }

    #[test]
    fn evaluate_switch_mixing_lowers_js() {
        // {e0, e0} | {e1}: moving an e0 client over mixes the second coalition.
        let counts = one_hot(&[0, 0, 1], 2);
        let p = Partition::new(vec![0, 0, 1], 2, counts.clone(), JsDenominator::Coalitions).unwrap();
        let prop = p.evaluate_switch(0, 1).unwrap();
        let expected = brute_avg(&[1, 0, 1], 2, &counts) - brute_avg(&[0, 0, 1], 2, &counts);
        assert!(prop.delta_js < 0.0);
        assert_abs_diff_eq!(prop.delta_js, expected, epsilon = 1e-12);
    }

    #[test]
    fn evaluate_switch_neutral_client() {
        // Both coalitions are [0.5, 0.5]; moving a [1,1] client keeps them so.
        let counts = vec![vec![1, 1], vec![1, 1], vec![1, 1], vec![2, 2]];
        let p = Partition::new(vec![0, 0, 1, 1], 2, counts, JsDenominator::Coalitions).unwrap();
        assert_eq!(p.evaluate_switch(0, 1).unwrap().delta_js, 0.0);
    }

    #[test]
    fn evaluate_switch_between_balanced_coalitions_never_helps() {
        let counts = one_hot(&[0, 1, 0, 1], 2);
        let p = Partition::new(vec![0, 0, 1, 1], 2, counts.clone(), JsDenominator::Coalitions).unwrap();
        let prop = p.evaluate_switch(0, 1).unwrap();
        assert!(prop.delta_js >= 0.0);
        let expected = brute_avg(&[1, 0, 1, 1], 2, &counts) - p.avg_js();
        assert_abs_diff_eq!(prop.delta_js, expected, epsilon = 1e-12);
    }

    #[test]
    fn evaluate_switch_errors() {
        let counts = one_hot(&[0, 0, 1], 2);
        let p = Partition::new(vec![0, 0, 1], 2, counts, JsDenominator::Coalitions).unwrap();
        assert!(matches!(p.evaluate_switch(0, 0), Err(Error::SameCoalition { .. })));
        assert!(matches!(p.evaluate_switch(2, 0), Err(Error::WouldEmptyCoalition { .. })));
        assert!(matches!(p.evaluate_switch(0, 5), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn best_switch_cases() {
        let counts = one_hot(&[0, 0, 1], 2);
        let p = Partition::new(vec![0, 0, 1], 2, counts, JsDenominator::Coalitions).unwrap();
        // Singleton blocked.
        assert_eq!(p.best_switch(2).unwrap(), None);
        let s = p.best_switch(0).unwrap().unwrap();
        assert_eq!((s.from, s.to), (0, 1));

        let counts = one_hot(&[0, 1, 0, 1], 2);
        let p = Partition::new(vec![0, 0, 1, 1], 2, counts, JsDenominator::Coalitions).unwrap();
        for n in 0..4 {
            assert_eq!(p.best_switch(n).unwrap(), None);
        }
    }

    #[test]
    fn best_switch_picks_unique_improving_target() {
        // Client 0 sits in an all-class-1 coalition; joining the class-0 pair
        // helps, joining the mixed pair does not.
        let counts = one_hot(&[1, 1, 1, 0, 0, 0, 1], 2);
        let assignment = vec![0, 0, 0, 1, 1, 2, 2];
        let p = Partition::new(assignment.clone(), 3, counts.clone(), JsDenominator::Coalitions).unwrap();
        let base = brute_avg(&assignment, 3, &counts);
        let oracle: Vec<f64> = (0..3)
            .map(|t| {
                let mut a = assignment.clone();
                a[0] = t;
                brute_avg(&a, 3, &counts) - base
            })
            .collect();
        assert!(oracle[1] < 0.0 && oracle[2] > 0.0);
        let s = p.best_switch(0).unwrap().expect("improving move");
        assert_eq!(s.to, 1);
        assert_abs_diff_eq!(s.delta_js, oracle[1], epsilon = 1e-12);
    }

    #[test]
    fn apply_switch_keeps_caches_consistent() {
        let counts = vec![vec![3, 1, 0], vec![0, 2, 2], vec![5, 0, 1], vec![1, 1, 1], vec![0, 0, 4]];
        let mut p = Partition::new(vec![0, 1, 2, 0, 1], 3, counts, JsDenominator::Coalitions).unwrap();
        p.apply_switch(3, 2).unwrap();
        p.apply_switch(1, 2).unwrap();
        assert!(p.caches_consistent(1e-12));
        assert_eq!(p.coalitions(), &[vec![0], vec![4], vec![1, 2, 3]]);
        assert!(matches!(p.apply_switch(0, 1), Err(Error::WouldEmptyCoalition { .. })));
    }

    #[test]
    fn potential_examples() {
        let counts = one_hot(&[0, 1, 0, 1], 2);
        let p = Partition::new(vec![0, 0, 1, 1], 2, counts, JsDenominator::Coalitions).unwrap();
        assert_eq!(potential(&p).unwrap(), 0.0);

        let counts = one_hot(&[0, 1], 2);
        let p = Partition::new(vec![0, 1], 2, counts, JsDenominator::Coalitions).unwrap();
        assert_eq!(potential(&p).unwrap(), 1.0);

        let counts = one_hot(&[0, 0, 1], 2);
        let p = Partition::new(vec![0, 1, 2], 3, counts, JsDenominator::Coalitions).unwrap();
        assert_eq!(potential(&p).unwrap(), 2.0);
        assert_eq!(p.potential(), 2.0);
    }

    #[test]
    fn exact_potential_identity_and_single_move() {
        let counts = vec![vec![3, 1, 0], vec![0, 2, 2], vec![5, 0, 1], vec![1, 1, 1], vec![0, 0, 4]];
        let p = Partition::new(vec![0, 1, 2, 0, 1], 3, counts, JsDenominator::Coalitions).unwrap();
        assert!(verify_exact_potential(&p, 0, 0, 1e-9).unwrap());
        assert!(verify_exact_potential(&p, 3, 2, 1e-9).unwrap());
    }

    #[test]
    fn adversarial_start_converges_to_mixed() {
        let counts = one_hot(&[0, 0, 1, 1], 2);
        let p = Partition::new(vec![0, 0, 1, 1], 2, counts, JsDenominator::Coalitions).unwrap();
        assert!(!certify_stability(&p, Execution::Sequential));
        let (fin, trace) = run_coalition_formation(p, GameOptions { max_iters: 1000, seed: 7 }).unwrap();
        assert!(trace.converged);
        assert_eq!(fin.avg_js(), 0.0);
        for members in fin.coalitions() {
            let mut classes: Vec<usize> = members.iter().map(|&n| n / 2).collect();
            classes.sort_unstable();
            assert_eq!(classes, vec![0, 1]);
        }
        assert!(certify_stability(&fin, Execution::Parallel));
    }

    #[test]
    fn stable_start_is_fixed_point() {
        let counts = one_hot(&[0, 1, 0, 1], 2);
        let p = Partition::new(vec![0, 0, 1, 1], 2, counts, JsDenominator::Coalitions).unwrap();
        let (fin, trace) = run_coalition_formation(p.clone(), GameOptions { max_iters: 100, seed: 1 }).unwrap();
        assert_eq!(fin.assignment(), p.assignment());
        assert_eq!(trace.accepted_count(), 0);
        assert!(trace.converged);
    }

    #[test]
    fn identical_singletons_are_stable() {
        let counts = vec![vec![2, 3]; 3];
        let p = Partition::new(vec![0, 1, 2], 3, counts, JsDenominator::Coalitions).unwrap();
        assert!(certify_stability(&p, Execution::Sequential));
    }

    #[test]
    fn needs_two_coalitions() {
        let p = Partition::new(vec![0, 0], 1, vec![vec![1], vec![1]], JsDenominator::Coalitions).unwrap();
        assert!(run_coalition_formation(p, GameOptions::default()).is_err());
    }

    #[test]
    fn random_assignment_covers_every_coalition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let a = Partition::random_assignment(7, 4, &mut rng).unwrap();
            for m in 0..4 {
                assert!(a.contains(&m));
            }
        }
        assert!(Partition::random_assignment(2, 3, &mut rng).is_err());
    }
}
