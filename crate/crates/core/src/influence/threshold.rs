//! Per-entity bisection thresholds and their contingency-matched selection.

use serde::{Deserialize, Serialize};

use super::cached::Cached;
use crate::cascade::CascadeSample;
use crate::error::{Error, Result};

/// Loading multipliers closer than this are the same level.
const LOADING_TOLERANCE: f64 = 1e-9;

/// Thresholds learned from one training sample, keyed by its contingency
/// profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEntry {
    pub loading_c: f64,
    /// Initially failed branches (1-based in files).
    #[serde(with = "one_based_ids")]
    pub initial_failures: Vec<usize>,
    /// One threshold per entity (link or bus).
    pub thresholds: Vec<f64>,
}

/// Training thresholds. The per-level index is built on the first `select`;
/// build a new pool rather than editing `entries` afterwards.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPool {
    pub entries: Vec<ThresholdEntry>,
    #[serde(skip)]
    levels: Cached<Vec<Level>>,
}

/// Entries of one loading level, indexed for fast selection.
#[derive(Debug)]
struct Level {
    loading_c: f64,
    /// Entry indices; everything below is keyed by position in this list.
    members: Vec<usize>,
    /// Thresholds per entity as ordered keys.
    columns: Vec<Vec<i64>>,
    /// Lower median over every member: the answer whenever all of them tie.
    all_median: Vec<f64>,
    /// Size of every member's failure set, when they agree.
    uniform: Option<usize>,
    /// Positions of the members holding each branch among their failures.
    groups: Vec<Vec<usize>>,
    /// Per branch `b`, entity-major blocks of `groups[b].len()` keys, each
    /// ascending: entity `i` keys over `groups[b]`.
    sorted: Vec<Vec<i64>>,
}

/// Integer key ordered like `f64::total_cmp`; its own inverse.
fn order_key(bits: i64) -> i64 {
    bits ^ (((bits >> 63) as u64) >> 1) as i64
}

fn from_key(key: i64) -> f64 {
    f64::from_bits(order_key(key) as u64)
}

/// `k`-th smallest (0-based) of the union of two ascending lists.
fn kth_of_two(a: &[i64], b: &[i64], k: usize) -> i64 {
    // take i from a and k + 1 - i from b so the largest taken is the answer
    let (mut lo, mut hi) = ((k + 1).saturating_sub(b.len()), (k + 1).min(a.len()));
    while lo < hi {
        let i = (lo + hi) / 2;
        if a[i] < b[k - i] {
            lo = i + 1;
        } else {
            hi = i;
        }
    }
    let i = lo;
    let j = k + 1 - i;
    match (i, j) {
        (0, _) => b[j - 1],
        (_, 0) => a[i - 1],
        _ => a[i - 1].max(b[j - 1]),
    }
}

/// Nearest members of a level.
struct Nearest {
    distance: usize,
    positions: Vec<usize>,
    /// The positions are exactly the union of the dead branches' groups,
    /// with no member in two of them.
    disjoint_groups: bool,
}

impl Level {
    fn new(entries: &[ThresholdEntry], loading_c: f64) -> Self {
        let members: Vec<usize> =
            (0..entries.len()).filter(|&k| (entries[k].loading_c - loading_c).abs() < LOADING_TOLERANCE).collect();
        let n = entries[members[0]].thresholds.len();
        let columns: Vec<Vec<i64>> = (0..n)
            .map(|i| members.iter().map(|&k| order_key(entries[k].thresholds[i].to_bits() as i64)).collect())
            .collect();
        let size = entries[members[0]].initial_failures.len();
        let uniform = members.iter().all(|&k| entries[k].initial_failures.len() == size).then_some(size);
        let n_groups = members.iter().flat_map(|&k| entries[k].initial_failures.iter().map(|b| b + 1)).max().unwrap_or(0);
        let mut groups = vec![Vec::new(); n_groups];
        for (pos, &k) in members.iter().enumerate() {
            for &b in &entries[k].initial_failures {
                groups[b].push(pos);
            }
        }
        let sorted = groups
            .iter()
            .map(|g| {
                let mut block = Vec::with_capacity(g.len() * columns.len());
                for keys in &columns {
                    let start = block.len();
                    block.extend(g.iter().map(|&p| keys[p]));
                    block[start..].sort_unstable();
                }
                block
            })
            .collect();
        let mut level = Level { loading_c, members, columns, all_median: Vec::new(), uniform, groups, sorted };
        let everyone: Vec<usize> = (0..level.members.len()).collect();
        level.all_median = level.median_of(&everyone);
        level
    }

    fn nearest(&self, entries: &[ThresholdEntry], dead: &[usize]) -> Nearest {
        if let Some(size) = self.uniform {
            // Only members sharing a dead branch can beat the rest, which
            // all sit at distance |dead| + size.
            let mut shared = vec![0u32; self.members.len()];
            let mut touched = Vec::with_capacity(self.members.len());
            for g in dead.iter().filter_map(|&d| self.groups.get(d)) {
                for &p in g {
                    if shared[p] == 0 {
                        touched.push(p);
                    }
                    shared[p] += 1;
                }
            }
            let top = touched.iter().map(|&p| shared[p]).max().unwrap_or(0);
            if top == 0 {
                return Nearest {
                    distance: dead.len() + size,
                    positions: (0..self.members.len()).collect(),
                    disjoint_groups: false,
                };
            }
            let mut positions = Vec::with_capacity(touched.len());
            positions.extend(touched.into_iter().filter(|&p| shared[p] == top));
            positions.sort_unstable();
            return Nearest { distance: dead.len() + size - 2 * top as usize, positions, disjoint_groups: top == 1 };
        }
        let mut best = usize::MAX;
        let mut positions = Vec::new();
        for (pos, &k) in self.members.iter().enumerate() {
            let failures = &entries[k].initial_failures;
            let shared = failures.iter().filter(|b| dead.contains(b)).count();
            let distance = dead.len() + failures.len() - 2 * shared;
            if distance < best {
                best = distance;
                positions.clear();
            }
            if distance == best {
                positions.push(pos);
            }
        }
        Nearest { distance: best, positions, disjoint_groups: false }
    }

    fn median_of(&self, positions: &[usize]) -> Vec<f64> {
        let mut column = Vec::with_capacity(positions.len());
        self.columns
            .iter()
            .map(|keys| {
                column.clear();
                column.extend(positions.iter().map(|&p| keys[p]));
                column.sort_unstable();
                from_key(column[(column.len() - 1) / 2])
            })
            .collect()
    }

    /// Lower median over the union of the dead branches' groups, from
    /// their presorted columns.
    fn merged_median(&self, dead: &[usize], total: usize) -> Vec<f64> {
        let lists: Vec<(&[i64], usize)> = dead
            .iter()
            .filter_map(|&d| Some((self.sorted.get(d)?.as_slice(), self.groups[d].len())))
            .filter(|&(_, len)| len > 0)
            .collect();
        let rank = (total - 1) / 2;
        match lists[..] {
            [(a, _)] => a.chunks_exact(total).map(|col| from_key(col[rank])).collect(),
            [(a, la), (b, lb)] => a
                .chunks_exact(la)
                .zip(b.chunks_exact(lb))
                .map(|(x, y)| from_key(kth_of_two(x, y, rank)))
                .collect(),
            _ => {
                let positions: Vec<usize> =
                    dead.iter().filter_map(|&d| self.groups.get(d)).flatten().copied().collect();
                self.median_of(&positions)
            }
        }
    }

}

/// Thresholds chosen for a new contingency and how they were found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSelection {
    pub thresholds: Vec<f64>,
    /// Loading level the thresholds were drawn from.
    pub loading_c: f64,
    /// Set when no entry matched the requested level and the nearest
    /// available level was used instead.
    pub loading_fallback: bool,
    /// L1 distance between the initial states of the query and the matches.
    pub distance: usize,
    /// Indices of the tied nearest entries.
    pub matched: Vec<usize>,
}

impl ThresholdPool {
    pub fn new(entries: Vec<ThresholdEntry>) -> Self {
        ThresholdPool { entries, levels: Cached::default() }
    }

    /// Builds the per-level index that `select` otherwise builds on first use.
    pub fn prepare(&self) {
        self.levels();
    }

    fn levels(&self) -> &[Level] {
        self.levels.get_or_init(|| self.loading_levels().into_iter().map(|c| Level::new(&self.entries, c)).collect())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct loading levels present, ascending.
    pub fn loading_levels(&self) -> Vec<f64> {
        let mut levels: Vec<f64> = self.entries.iter().map(|e| e.loading_c).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup_by(|a, b| (*a - *b).abs() < LOADING_TOLERANCE);
        levels
    }

    /// Picks thresholds for a contingency: keep entries at the same loading
    /// level (nearest level if none), take those whose initial state is
    /// closest in L1 distance, and use the lower median of their thresholds
    /// per entity.
    pub fn select(&self, loading_c: f64, initial_state: &[bool]) -> Result<ThresholdSelection> {
        let levels = self.levels();
        let level = levels
            .iter()
            .min_by(|a, b| (a.loading_c - loading_c).abs().total_cmp(&(b.loading_c - loading_c).abs()))
            .ok_or(Error::EmptyThresholdPool)?;
        let loading_fallback = (level.loading_c - loading_c).abs() >= LOADING_TOLERANCE;
        if loading_fallback {
            log::warn!("no thresholds at loading {loading_c}; using nearest level {}", level.loading_c);
        }
        let mut dead = Vec::with_capacity(initial_state.len());
        dead.extend((0..initial_state.len()).filter(|&i| !initial_state[i]));
        let near = level.nearest(&self.entries, &dead);
        let thresholds = if near.positions.len() == level.members.len() {
            level.all_median.clone()
        } else if near.disjoint_groups {
            level.merged_median(&dead, near.positions.len())
        } else {
            level.median_of(&near.positions)
        };
        let matched = near.positions.iter().map(|&p| level.members[p]).collect();
        Ok(ThresholdSelection {
            thresholds,
            loading_c: level.loading_c,
            loading_fallback,
            distance: near.distance,
            matched,
        })
    }

}

/// Link thresholds for one training sample.
///
/// `predicted[t - 1]` is the one-step prediction for step `t` (with
/// `predicted[0]` the initial state itself) and `terminal` the prediction
/// issued from the final state.
pub fn link_thresholds(sample: &CascadeSample, predicted: &[Vec<f64>], terminal: &[f64], alpha: f64) -> Vec<f64> {
    (0..sample.n_branches())
        .map(|i| match sample.failure_time(i) {
            Some(1) => 1.0,
            Some(t) => 0.5 * (predicted[t - 2][i] + predicted[t - 1][i]),
            None => alpha * terminal[i],
        })
        .collect()
}

/// Bus thresholds for one training sample; `predicted[t - 1]` is the
/// service probability at step `t`.
pub fn bus_thresholds(sample: &CascadeSample, predicted: &[Vec<f64>], alpha: f64) -> Vec<f64> {
    (0..sample.n_buses())
        .map(|i| {
            let mut p = f64::NEG_INFINITY; // max prediction where shed
            let mut q = f64::INFINITY; // min prediction where served
            for (l, pred) in sample.load_served.iter().zip(predicted) {
                if l[i] {
                    q = q.min(pred[i]);
                } else {
                    p = p.max(pred[i]);
                }
            }
            match (p.is_finite(), q.is_finite()) {
                (false, _) => alpha * q,
                (true, false) if sample.termination_time == 1 => 0.5 * (1.0 + predicted[0][i]),
                (true, false) => 1.0,
                // a step sitting exactly on the cut counts as shed
                (true, true) => p.min(q).next_up(),
            }
        })
        .collect()
}

mod one_based_ids {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(ids: &[usize], s: S) -> Result<S::Ok, S::Error> {
        ids.iter().map(|i| i + 1).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
        Vec::<usize>::deserialize(d)?
            .into_iter()
            .map(|i| i.checked_sub(1).ok_or_else(|| serde::de::Error::custom("branch ids are 1-based")))
            .collect()
    }
}
