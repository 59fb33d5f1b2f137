//! Cascading-failure oracle, corrective-action policies and Monte Carlo
//! sample pools.

mod pool;
mod sim;

pub use pool::{
    generate_pool, generate_pool_with, pair_for_seed, read_pool, sample_seed, split_indices, write_pool, PoolManifest,
    PoolSummary, SamplePool, POOL_SCHEMA_VERSION,
};
pub use sim::{run_cascade, BaseCase, CascadeSimulator};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Corrective action applied while a cascade unfolds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// No corrective action: balance islands by proportional shedding or
    /// curtailment only.
    None,
    /// Re-dispatch each step to serve all load, scaling service down
    /// uniformly when full service is impossible.
    RedispatchFull,
    /// One cost-minimal shedding dispatch right after the contingency.
    RedispatchSmart,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::None, Policy::RedispatchFull, Policy::RedispatchSmart];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::None => "none",
            Policy::RedispatchFull => "redispatch-full",
            Policy::RedispatchSmart => "redispatch-smart",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown policy `{s}`")))
    }
}

/// One simulated cascade.
///
/// `states[t - 1]` is the branch state at step `t` (true = in service).
/// `load_served[t - 1]` and `shed_mw[t - 1]` describe service while the
/// network sits in that state, so all three sequences have length
/// `termination_time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeSample {
    pub sample_id: usize,
    pub loading_c: f64,
    /// Exogenously failed branch pair (1-based in files).
    #[serde(with = "one_based_pair")]
    pub initial_failures: [usize; 2],
    #[serde(with = "bit_rows")]
    pub states: Vec<Vec<bool>>,
    #[serde(with = "bit_rows")]
    pub load_served: Vec<Vec<bool>>,
    pub shed_mw: Vec<Vec<f64>>,
    pub termination_time: usize,
    pub policy: Policy,
    pub seed: u64,
}

impl CascadeSample {
    pub fn n_branches(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn n_buses(&self) -> usize {
        self.load_served.first().map_or(0, Vec::len)
    }

    pub fn initial_state(&self) -> &[bool] {
        &self.states[0]
    }

    pub fn final_state(&self) -> &[bool] {
        &self.states[self.states.len() - 1]
    }

    /// First step (1-based) at which branch `i` is out of service.
    pub fn failure_time(&self, i: usize) -> Option<usize> {
        self.states.iter().position(|s| !s[i]).map(|p| p + 1)
    }

    /// Failure time of `i`, or the termination time when it survives.
    pub fn tau(&self, i: usize) -> usize {
        self.failure_time(i).unwrap_or(self.termination_time)
    }

    /// Per bus: whether any load was shed at any step.
    pub fn ever_shed(&self) -> Vec<bool> {
        let mut out = vec![false; self.n_buses()];
        for l in &self.load_served {
            for (o, &served) in out.iter_mut().zip(l) {
                *o |= !served;
            }
        }
        out
    }

    /// Branches that failed after the initial contingency.
    pub fn propagated_failures(&self) -> usize {
        let initial = self.initial_state().iter().filter(|&&a| !a).count();
        let last = self.final_state().iter().filter(|&&a| !a).count();
        last - initial
    }

    /// Checks the structural invariants of a sample.
    pub fn validate(&self, n_branches: usize, n_buses: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidNetwork(format!("sample {}: {msg}", self.sample_id)));
        let t = self.termination_time;
        if t == 0 || self.states.len() != t || self.load_served.len() != t || self.shed_mw.len() != t {
            return bad(format!("sequence lengths disagree with termination time {t}"));
        }
        if self.states.iter().any(|s| s.len() != n_branches) {
            return bad(format!("state vectors must have {n_branches} entries"));
        }
        if self.load_served.iter().any(|l| l.len() != n_buses) || self.shed_mw.iter().any(|s| s.len() != n_buses) {
            return bad(format!("load vectors must have {n_buses} entries"));
        }
        let [a, b] = self.initial_failures;
        if a == b || a >= n_branches || b >= n_branches {
            return bad("initial failures must be two distinct branches".into());
        }
        let s1 = &self.states[0];
        if s1.iter().enumerate().any(|(i, &alive)| alive == (i == a || i == b)) {
            return bad("first state must have exactly the initial pair out".into());
        }
        for w in self.states.windows(2) {
            if w[1].iter().zip(&w[0]).any(|(&next, &prev)| next && !prev) {
                return bad("a failed branch came back into service".into());
            }
        }
        for (l, shed) in self.load_served.iter().zip(&self.shed_mw) {
            if l.iter().zip(shed).any(|(&served, &mw)| served != (mw == 0.0) || mw < 0.0) {
                return bad("service flags disagree with shed amounts".into());
            }
        }
        Ok(())
    }
}

pub(crate) mod one_based_pair {
    use super::*;

    pub fn serialize<S: Serializer>(pair: &[usize; 2], s: S) -> std::result::Result<S::Ok, S::Error> {
        [pair[0] + 1, pair[1] + 1].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<[usize; 2], D::Error> {
        let [a, b] = <[usize; 2]>::deserialize(d)?;
        if a == 0 || b == 0 {
            return Err(serde::de::Error::custom("branch ids are 1-based"));
        }
        Ok([a - 1, b - 1])
    }
}

pub(crate) mod bit_rows {
    use super::*;

    pub fn serialize<S: Serializer>(rows: &[Vec<bool>], s: S) -> std::result::Result<S::Ok, S::Error> {
        let bits: Vec<Vec<u8>> = rows.iter().map(|r| r.iter().map(|&b| b as u8).collect()).collect();
        bits.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vec<bool>>, D::Error> {
        let bits = Vec::<Vec<u8>>::deserialize(d)?;
        bits.into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|b| match b {
                        0 => Ok(false),
                        1 => Ok(true),
                        other => Err(serde::de::Error::custom(format!("expected 0 or 1, got {other}"))),
                    })
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CascadeSample {
        CascadeSample {
            sample_id: 3,
            loading_c: 1.2,
            initial_failures: [0, 2],
            states: vec![vec![false, true, false, true], vec![false, false, false, true]],
            load_served: vec![vec![true, true], vec![true, false]],
            shed_mw: vec![vec![0.0, 0.0], vec![0.0, 4.5]],
            termination_time: 2,
            policy: Policy::None,
            seed: 7,
        }
    }

    #[test]
    fn json_line_encoding() {
        let s = sample();
        let line = serde_json::to_string(&s).unwrap();
        assert!(line.contains(r#""initial_failures":[1,3]"#));
        assert!(line.contains(r#""states":[[0,1,0,1],[0,0,0,1]]"#));
        assert!(line.contains(r#""policy":"none""#));
        let back: CascadeSample = serde_json::from_str(&line).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn derived_quantities() {
        let s = sample();
        s.validate(4, 2).unwrap();
        assert_eq!(s.failure_time(0), Some(1));
        assert_eq!(s.failure_time(1), Some(2));
        assert_eq!(s.tau(3), 2);
        assert_eq!(s.ever_shed(), vec![false, true]);
        assert_eq!(s.propagated_failures(), 1);
    }

    #[test]
    fn revival_rejected() {
        let mut s = sample();
        s.states[1][0] = true;
        assert!(s.validate(4, 2).is_err());
    }

    #[test]
    fn policy_names() {
        for p in Policy::ALL {
            assert_eq!(p.as_str().parse::<Policy>().unwrap(), p);
        }
        assert_eq!(serde_json::to_string(&Policy::RedispatchSmart).unwrap(), r#""redispatch-smart""#);
    }
}
