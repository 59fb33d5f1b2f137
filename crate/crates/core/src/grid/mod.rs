//! Grid topology, ratings, generators and loads.
//!
//! Internally every bus, branch and generator is addressed by a dense 0-based
//! index. Files and service payloads use 1-based ids (see [`native`]).

mod line_graph;
pub mod matpower;
pub mod native;

pub use line_graph::{line_graph_distance, line_graph_distance_alive, DistanceMatrix};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Short-term thermal rating as a multiple of the long-term rating.
pub const SHORT_TERM_FACTOR: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    /// Base demand in MW.
    pub load_p: f64,
    /// Cost per MW shed at this bus.
    pub shed_priority: f64,
    pub is_slack: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    /// Series reactance in p.u. on the system base.
    pub reactance: f64,
    /// Long-term thermal limit in MW.
    pub rating_long: f64,
    /// Loss weight charged when the branch fails.
    pub cost_weight: f64,
}

impl Branch {
    pub fn rating_short(&self) -> f64 {
        SHORT_TERM_FACTOR * self.rating_long
    }

    pub fn touches(&self, bus: usize) -> bool {
        self.from_bus == bus || self.to_bus == bus
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: usize,
    pub bus: usize,
    pub p_max: f64,
    pub p_min: f64,
    /// Linear dispatch cost per MW.
    pub cost: f64,
}

/// A validated transmission network. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    base_mva: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    generators: Vec<Generator>,
}

impl Network {
    /// Builds a network and checks every structural invariant, including
    /// connectivity with all branches in service.
    pub fn new(
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Self> {
        if !(base_mva > 0.0) {
            return Err(Error::InvalidNetwork(format!("base_mva must be positive, got {base_mva}")));
        }
        check_dense("bus", buses.iter().map(|b| b.id))?;
        check_dense("branch", branches.iter().map(|b| b.id))?;
        check_dense("generator", generators.iter().map(|g| g.id))?;
        if buses.len() < 2 {
            return Err(Error::InvalidNetwork("at least two buses are required".into()));
        }
        for bus in &buses {
            if !(bus.load_p >= 0.0) || !bus.load_p.is_finite() {
                return Err(Error::InvalidNetwork(format!("bus {} has invalid load {}", bus.id, bus.load_p)));
            }
            if !(bus.shed_priority > 0.0) || !bus.shed_priority.is_finite() {
                return Err(Error::InvalidNetwork(format!(
                    "bus {} has nonpositive shed priority {}",
                    bus.id, bus.shed_priority
                )));
            }
        }
        let n = buses.len();
        for br in &branches {
            for bus in [br.from_bus, br.to_bus] {
                if bus >= n {
                    return Err(Error::DanglingEndpoint { branch: br.id, bus });
                }
            }
            if br.from_bus == br.to_bus {
                return Err(Error::InvalidNetwork(format!("branch {} is a self-loop", br.id)));
            }
            if !(br.reactance > 0.0) || !br.reactance.is_finite() {
                return Err(Error::NonpositiveReactance { branch: br.id, reactance: br.reactance });
            }
            if !(br.rating_long > 0.0) || !br.rating_long.is_finite() {
                return Err(Error::InvalidNetwork(format!(
                    "branch {} has nonpositive rating {}",
                    br.id, br.rating_long
                )));
            }
            if !(br.cost_weight >= 0.0) {
                return Err(Error::InvalidNetwork(format!("branch {} has negative cost weight", br.id)));
            }
        }
        for g in &generators {
            if g.bus >= n {
                return Err(Error::InvalidNetwork(format!("generator {} sits on nonexistent bus {}", g.id, g.bus)));
            }
            if !(0.0 <= g.p_min && g.p_min <= g.p_max) {
                return Err(Error::InvalidNetwork(format!(
                    "generator {} violates 0 <= p_min <= p_max ({} / {})",
                    g.id, g.p_min, g.p_max
                )));
            }
        }
        let net = Network { base_mva, buses, branches, generators };
        let alive = vec![true; net.n_branches()];
        if net.components(&alive).iter().any(|&c| c != 0) {
            return Err(Error::InvalidNetwork("network is not connected at full health".into()));
        }
        Ok(net)
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn demand(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.load_p).collect()
    }

    pub fn total_load(&self) -> f64 {
        self.buses.iter().map(|b| b.load_p).sum()
    }

    pub fn total_capacity(&self) -> f64 {
        self.generators.iter().map(|g| g.p_max).sum()
    }

    pub fn shed_priorities(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.shed_priority).collect()
    }

    /// Replaces every bus's shed priority (the "priority-based" runs).
    pub fn with_shed_priorities(&self, priorities: &[f64]) -> Result<Network> {
        if priorities.len() != self.n_buses() {
            return Err(Error::Dimension(format!(
                "{} priorities for {} buses",
                priorities.len(),
                self.n_buses()
            )));
        }
        let mut buses = self.buses.clone();
        for (bus, &p) in buses.iter_mut().zip(priorities) {
            bus.shed_priority = p;
        }
        Network::new(self.base_mva, buses, self.branches.clone(), self.generators.clone())
    }

    /// Connected-component label per bus, counting only branches marked alive.
    /// Labels are dense and assigned in order of the lowest bus index.
    pub fn components(&self, alive: &[bool]) -> Vec<usize> {
        let n = self.n_buses();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (br, &up) in self.branches.iter().zip(alive) {
            if up {
                adj[br.from_bus].push(br.to_bus);
                adj[br.to_bus].push(br.from_bus);
            }
        }
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = next;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        queue.push_back(v);
                    }
                }
            }
            next += 1;
        }
        label
    }
}

fn check_dense(kind: &'static str, ids: impl Iterator<Item = usize>) -> Result<()> {
    let ids: Vec<usize> = ids.collect();
    let mut seen = vec![false; ids.len()];
    for &id in &ids {
        if id < seen.len() && seen[id] {
            return Err(Error::DuplicateId { kind, id });
        }
        if id >= seen.len() {
            return Err(Error::InvalidNetwork(format!("{kind} ids are not dense: {id} out of range")));
        }
        seen[id] = true;
    }
    for (pos, &id) in ids.iter().enumerate() {
        if pos != id {
            return Err(Error::InvalidNetwork(format!("{kind} ids must be listed in order")));
        }
    }
    Ok(())
}

/// Uniform multiplier applied to every bus load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadingProfile {
    pub c: f64,
}

impl LoadingProfile {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Config(format!("loading multiplier must be positive, got {c}")));
        }
        Ok(LoadingProfile { c })
    }

    /// The experimental sweep 0.9, 1.0, ..., 1.8.
    pub fn sweep() -> Vec<LoadingProfile> {
        (9..=18).map(|k| LoadingProfile { c: k as f64 / 10.0 }).collect()
    }
}

/// Multiplies every bus load by the profile's multiplier.
pub fn scale_loads(net: &Network, profile: LoadingProfile) -> Network {
    let mut scaled = net.clone();
    for bus in &mut scaled.buses {
        bus.load_p *= profile.c;
    }
    scaled
}

/// Two distinct branches failing exogenously. Stored sorted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Contingency([usize; 2]);

impl Contingency {
    pub fn new(a: usize, b: usize, n_branches: usize) -> Result<Self> {
        if a == b {
            return Err(Error::InvalidContingency(format!("branch {a} listed twice")));
        }
        for id in [a, b] {
            if id >= n_branches {
                return Err(Error::InvalidContingency(format!(
                    "branch {id} does not exist ({n_branches} branches)"
                )));
            }
        }
        Ok(Contingency([a.min(b), a.max(b)]))
    }

    pub fn branches(&self) -> [usize; 2] {
        self.0
    }

    pub fn contains(&self, branch: usize) -> bool {
        self.0.contains(&branch)
    }

    /// Branch state right after the contingency: everything alive except the pair.
    pub fn initial_state(&self, n_branches: usize) -> Vec<bool> {
        let mut s = vec![true; n_branches];
        s[self.0[0]] = false;
        s[self.0[1]] = false;
        s
    }
}

/// The bundled IEEE 30-bus case (MATPOWER distribution).
pub const IEEE30_CASE: &str = include_str!("../../data/case30.m");

/// Parses the bundled IEEE 30-bus case.
pub fn ieee30() -> Network {
    matpower::parse_matpower(IEEE30_CASE).expect("bundled IEEE-30 case is valid")
}
