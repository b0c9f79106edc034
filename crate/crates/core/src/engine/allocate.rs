use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SamplingDistribution;
use crate::cluster::Assignment;
use crate::data::SampleId;
use crate::error::{validation, Error, Result};
use crate::scalar::Scalar;

/// Seats for one selection round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub per_cluster: Vec<usize>,
    /// Seats drawn uniformly from the whole unannotated pool.
    pub explore: usize,
}

impl Allocation {
    pub fn total(&self) -> usize {
        self.per_cluster.iter().sum::<usize>() + self.explore
    }
}

/// Fractional remainders closer than this are treated as equal, so ties resolve by index
/// rather than by rounding noise.
const REMAINDER_QUANTUM: f64 = 1e-9;

/// Largest-remainder apportionment of `seats` over `weights`, never exceeding `capacity`.
///
/// Seats a capped cluster cannot take are handed out again over the clusters that still
/// have room, in proportion to their weights (or to their spare room when those weights
/// are all zero). Ties between equal remainders go to the lower index.
///
/// Panics if `capacity` cannot hold `seats`.
pub fn apportion(weights: &[f64], seats: usize, capacity: &[usize]) -> Vec<usize> {
    assert_eq!(weights.len(), capacity.len());
    assert!(
        capacity.iter().sum::<usize>() >= seats,
        "capacity {} cannot hold {seats} seats",
        capacity.iter().sum::<usize>()
    );
    let k = weights.len();
    let mut alloc = vec![0usize; k];
    let mut left = seats;

    while left > 0 {
        let open: Vec<usize> = (0..k).filter(|&c| alloc[c] < capacity[c]).collect();
        let mut w: Vec<f64> = open.iter().map(|&c| weights[c].max(0.0)).collect();
        let mut total: f64 = w.iter().sum();
        if !(total > 0.0) {
            w = open
                .iter()
                .map(|&c| (capacity[c] - alloc[c]) as f64)
                .collect();
            total = w.iter().sum();
        }

        let mut fracs = Vec::with_capacity(open.len());
        let mut granted = 0;
        for (&c, &wc) in open.iter().zip(&w) {
            let quota = left as f64 * wc / total;
            let floor = quota.floor();
            let room = capacity[c] - alloc[c];
            let take = (floor as usize).min(room);
            alloc[c] += take;
            granted += take;
            if take < room {
                let q = ((quota - floor) / REMAINDER_QUANTUM).round() as i64;
                fracs.push((q, c));
            }
        }
        left -= granted;

        fracs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, c) in &fracs {
            if left == 0 {
                break;
            }
            alloc[c] += 1;
            left -= 1;
        }
    }
    alloc
}

/// Splits one round into exploration seats and per-cluster seats.
///
/// The round holds `min(round_size, remaining_budget, total available)` samples; of those,
/// `round(delta_explore * size)` are exploration seats and the rest are apportioned by `p`
/// subject to each cluster's availability.
pub fn allocate_round<T: Scalar>(
    p: &SamplingDistribution<T>,
    round_size: usize,
    delta_explore: f64,
    available: &[usize],
    remaining_budget: usize,
) -> Result<Allocation> {
    if p.k() != available.len() {
        return Err(validation(format!(
            "distribution over {} clusters, availability for {}",
            p.k(),
            available.len()
        )));
    }
    if round_size == 0 {
        return Err(validation("round size must be at least 1"));
    }
    if !(0.0..=1.0).contains(&delta_explore) {
        return Err(validation("exploration fraction must lie in [0, 1]"));
    }
    let total: usize = available.iter().sum();
    if total == 0 {
        return Err(Error::PoolExhausted);
    }
    let effective = round_size.min(remaining_budget).min(total);
    let explore = ((delta_explore * effective as f64).round() as usize).min(effective);
    let weights: Vec<f64> = p.probs.iter().map(|v| v.as_f64()).collect();
    let per_cluster = apportion(&weights, effective - explore, available);
    Ok(Allocation {
        per_cluster,
        explore,
    })
}

/// Unannotated members of each cluster, in assignment order.
#[derive(Debug, Clone, PartialEq)]
pub struct UnannotatedPool {
    members: Vec<Vec<SampleId>>,
}

impl UnannotatedPool {
    pub fn new(assignment: &Assignment, annotated: &HashSet<SampleId>) -> Self {
        let members = assignment
            .members()
            .into_iter()
            .map(|ids| {
                ids.into_iter()
                    .filter(|id| !annotated.contains(id))
                    .collect()
            })
            .collect();
        Self { members }
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn available(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.members.iter().map(Vec::len).sum()
    }

    pub fn cluster(&self, c: usize) -> &[SampleId] {
        &self.members[c]
    }

    /// Draws the allocation and removes the drawn ids from the pool.
    ///
    /// Cluster seats are filled first, cluster by cluster, by uniform sampling without
    /// replacement; exploration seats are then drawn uniformly from everything left.
    pub fn draw<R: Rng + ?Sized>(
        &mut self,
        alloc: &Allocation,
        rng: &mut R,
    ) -> Result<Vec<SampleId>> {
        if alloc.per_cluster.len() != self.k() {
            return Err(validation("allocation and pool disagree on cluster count"));
        }
        for (c, (&want, have)) in alloc.per_cluster.iter().zip(&self.members).enumerate() {
            if want > have.len() {
                return Err(validation(format!(
                    "cluster {c}: {want} seats but only {} unannotated members",
                    have.len()
                )));
            }
        }
        let cluster_total: usize = alloc.per_cluster.iter().sum();
        if self.total() < alloc.explore + cluster_total {
            return Err(validation("allocation exceeds the unannotated pool"));
        }

        // With a single non-empty cluster, exploration is just more seats in that cluster.
        let live: Vec<usize> = (0..self.k())
            .filter(|&c| !self.members[c].is_empty())
            .collect();
        if let [only] = live[..] {
            let want = alloc.per_cluster[only] + alloc.explore;
            let pos = index::sample(rng, self.members[only].len(), want).into_vec();
            let picked = pos.iter().map(|&p| self.members[only][p]).collect();
            let mut taken = vec![Vec::new(); self.k()];
            taken[only] = pos;
            self.remove(&mut taken);
            return Ok(picked);
        }

        let mut picked = Vec::with_capacity(alloc.total());
        let mut taken: Vec<Vec<usize>> = vec![Vec::new(); self.k()];
        for (c, &want) in alloc.per_cluster.iter().enumerate() {
            if want == 0 {
                continue;
            }
            for pos in index::sample(rng, self.members[c].len(), want) {
                picked.push(self.members[c][pos]);
                taken[c].push(pos);
            }
        }
        self.remove(&mut taken);

        if alloc.explore > 0 {
            let mut taken: Vec<Vec<usize>> = vec![Vec::new(); self.k()];
            let offsets: Vec<usize> = self
                .members
                .iter()
                .scan(0, |acc, m| {
                    let start = *acc;
                    *acc += m.len();
                    Some(start)
                })
                .collect();
            for g in index::sample(rng, self.total(), alloc.explore) {
                let c = offsets.partition_point(|&o| o <= g) - 1;
                let pos = g - offsets[c];
                picked.push(self.members[c][pos]);
                taken[c].push(pos);
            }
            self.remove(&mut taken);
        }
        Ok(picked)
    }

    /// Drops `ids` wherever they sit, e.g. after they were drawn through another partition.
    pub fn remove_ids(&mut self, ids: &HashSet<SampleId>) {
        for members in &mut self.members {
            members.retain(|id| !ids.contains(id));
        }
    }

    fn remove(&mut self, taken: &mut [Vec<usize>]) {
        for (members, pos) in self.members.iter_mut().zip(taken.iter_mut()) {
            if pos.is_empty() {
                continue;
            }
            pos.sort_unstable();
            let mut next = pos.iter().peekable();
            let mut i = 0;
            members.retain(|_| {
                let drop = next.peek() == Some(&&i);
                if drop {
                    next.next();
                }
                i += 1;
                !drop
            });
        }
    }
}

/// Number of unannotated members per cluster.
pub fn available_counts(assignment: &Assignment, annotated: &HashSet<SampleId>) -> Vec<usize> {
    let mut out = vec![0; assignment.k()];
    for (id, c) in assignment.iter() {
        if !annotated.contains(&id) {
            out[c] += 1;
        }
    }
    out
}

/// Draws the ids for `alloc` from the members of `assignment` not yet in `annotated`.
pub fn select_samples<R: Rng + ?Sized>(
    alloc: &Allocation,
    assignment: &Assignment,
    annotated: &HashSet<SampleId>,
    rng: &mut R,
) -> Result<Vec<SampleId>> {
    UnannotatedPool::new(assignment, annotated).draw(alloc, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dist(p: &[f64]) -> SamplingDistribution<f64> {
        SamplingDistribution { probs: p.to_vec() }
    }

    #[test]
    fn exact_proportions() {
        let a = allocate_round(&dist(&[0.5, 0.3, 0.2]), 10, 0.0, &[100, 100, 100], 1000).unwrap();
        assert_eq!(a.per_cluster, vec![5, 3, 2]);
        assert_eq!(a.explore, 0);
    }

    #[test]
    fn equal_remainders_favor_lower_index() {
        let a = allocate_round(&dist(&[0.55, 0.45]), 10, 0.0, &[100, 100], 1000).unwrap();
        assert_eq!(a.per_cluster, vec![6, 4]);
    }

    #[test]
    fn capacity_overflow_is_redistributed() {
        let a = allocate_round(&dist(&[1.0, 0.0]), 10, 0.0, &[4, 100], 1000).unwrap();
        assert_eq!(a.per_cluster, vec![4, 6]);
    }

    #[test]
    fn round_is_capped_by_budget_and_pool() {
        let a = allocate_round(&dist(&[0.5, 0.5]), 100, 0.1, &[10, 10], 1000).unwrap();
        assert_eq!(a.total(), 20);
        assert_eq!(a.explore, 2);
        let a = allocate_round(&dist(&[0.5, 0.5]), 100, 0.1, &[100, 100], 7).unwrap();
        assert_eq!(a.total(), 7);
        assert_eq!(a.explore, 1);
    }

    #[test]
    fn exhausted_pool() {
        assert!(matches!(
            allocate_round(&dist(&[0.5, 0.5]), 10, 0.1, &[0, 0], 10),
            Err(Error::PoolExhausted)
        ));
    }

    fn assignment(sizes: &[usize]) -> Assignment {
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut next = 0u64;
        for (c, &s) in sizes.iter().enumerate() {
            for _ in 0..s {
                ids.push(SampleId(next));
                labels.push(c as u32);
                next += 1;
            }
        }
        Assignment::new(sizes.len(), ids, labels).unwrap()
    }

    #[test]
    fn forced_selection_takes_whole_cluster() {
        let a = assignment(&[3, 5]);
        let alloc = Allocation {
            per_cluster: vec![3, 0],
            explore: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut got = select_samples(&alloc, &a, &HashSet::new(), &mut rng).unwrap();
        got.sort();
        assert_eq!(got, vec![SampleId(0), SampleId(1), SampleId(2)]);
    }

    #[test]
    fn exploration_only_on_small_pool() {
        let a = assignment(&[2, 3]);
        let alloc = Allocation {
            per_cluster: vec![0, 0],
            explore: 5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut got = select_samples(&alloc, &a, &HashSet::new(), &mut rng).unwrap();
        got.sort();
        assert_eq!(got, (0..5).map(SampleId).collect::<Vec<_>>());
    }

    #[test]
    fn selection_is_deterministic_and_skips_annotated() {
        let a = assignment(&[20, 30, 10]);
        let annotated: HashSet<SampleId> = (0..15).map(SampleId).collect();
        let alloc = Allocation {
            per_cluster: vec![3, 4, 2],
            explore: 6,
        };
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            select_samples(&alloc, &a, &annotated, &mut rng).unwrap()
        };
        assert_eq!(run(9), run(9));
        let got = run(9);
        assert_eq!(got.len(), 15);
        assert!(got.iter().all(|id| !annotated.contains(id)));
        let unique: HashSet<_> = got.iter().collect();
        assert_eq!(unique.len(), got.len());
    }

    #[test]
    fn over_allocation_is_rejected() {
        let a = assignment(&[2, 2]);
        let alloc = Allocation {
            per_cluster: vec![3, 0],
            explore: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(select_samples(&alloc, &a, &HashSet::new(), &mut rng).is_err());
    }

    #[test]
    fn pool_draw_matches_rebuilt_pool() {
        let a = assignment(&[12, 7, 9]);
        let mut pool = UnannotatedPool::new(&a, &HashSet::new());
        let mut annotated = HashSet::new();
        let mut rng1 = ChaCha8Rng::seed_from_u64(5);
        let mut rng2 = ChaCha8Rng::seed_from_u64(5);
        for alloc in [
            Allocation {
                per_cluster: vec![2, 1, 3],
                explore: 2,
            },
            Allocation {
                per_cluster: vec![4, 0, 1],
                explore: 3,
            },
        ] {
            let incremental = pool.draw(&alloc, &mut rng1).unwrap();
            let rebuilt = select_samples(&alloc, &a, &annotated, &mut rng2).unwrap();
            assert_eq!(incremental, rebuilt);
            annotated.extend(rebuilt);
            assert_eq!(pool.available(), available_counts(&a, &annotated));
        }
    }

    proptest! {
        #[test]
        fn apportionment_is_exact_and_feasible(
            raw in prop::collection::vec(0.0f64..1.0, 1..30),
            caps in prop::collection::vec(0usize..50, 30),
            seats_frac in 0.0f64..=1.0,
        ) {
            let k = raw.len();
            let caps = &caps[..k];
            let cap_total: usize = caps.iter().sum();
            let seats = (seats_frac * cap_total as f64).floor() as usize;
            let alloc = apportion(&raw, seats, caps);
            prop_assert_eq!(alloc.iter().sum::<usize>(), seats);
            for (a, c) in alloc.iter().zip(caps) {
                prop_assert!(a <= c);
            }
        }

        #[test]
        fn uncapped_apportionment_stays_within_one_of_quota(
            raw in prop::collection::vec(0.01f64..1.0, 1..20),
            seats in 0usize..500,
        ) {
            let total: f64 = raw.iter().sum();
            let caps = vec![usize::MAX / 64; raw.len()];
            let alloc = apportion(&raw, seats, &caps);
            for (a, w) in alloc.iter().zip(&raw) {
                let quota = seats as f64 * w / total;
                prop_assert!((*a as f64 - quota).abs() < 1.0 + 1e-9);
            }
        }
    }
}
