//! DC power flow and DC optimal power flow over islanded sub-networks.
//!
//! Only real power is modeled: lossless lines, flows proportional to angle
//! differences over reactance. An AC model would slot in behind the same
//! [`FlowSolution`] contract.

pub mod lp;
mod opf;

pub use opf::{
    dc_opf_full_service, dc_opf_full_service_with, dc_opf_smart_shed, dc_opf_smart_shed_with, economic_dispatch,
    is_load_feasible, OpfOptions, RatingKind,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Network;
use crate::matrix::Matrix;

/// Per-island balance tolerance accepted by [`dc_pf`], in MW.
pub const BALANCE_TOLERANCE: f64 = 1e-6;

/// Connected components induced by the alive branches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IslandPartition {
    component: Vec<usize>,
    n_islands: usize,
    alive: Vec<bool>,
}

impl IslandPartition {
    pub fn new(net: &Network, alive: &[bool]) -> Self {
        let component = net.components(alive);
        let n_islands = component.iter().copied().max().map_or(0, |m| m + 1);
        IslandPartition { component, n_islands, alive: alive.to_vec() }
    }

    pub fn n_islands(&self) -> usize {
        self.n_islands
    }

    pub fn component(&self) -> &[usize] {
        &self.component
    }

    pub fn island_of(&self, bus: usize) -> usize {
        self.component[bus]
    }

    pub fn buses(&self, island: usize) -> Vec<usize> {
        (0..self.component.len()).filter(|&b| self.component[b] == island).collect()
    }

    /// Alive branches inside the island.
    pub fn branches(&self, net: &Network, island: usize) -> Vec<usize> {
        net.branches()
            .iter()
            .filter(|br| self.alive[br.id] && self.component[br.from_bus] == island)
            .map(|br| br.id)
            .collect()
    }

    pub fn generators(&self, net: &Network, island: usize) -> Vec<usize> {
        net.generators().iter().filter(|g| self.component[g.bus] == island).map(|g| g.id).collect()
    }

    /// Angle reference: lowest-indexed bus hosting a generator, else the
    /// lowest-indexed bus.
    pub fn slack(&self, net: &Network, island: usize) -> usize {
        net.generators()
            .iter()
            .filter(|g| self.component[g.bus] == island)
            .map(|g| g.bus)
            .min()
            .unwrap_or_else(|| self.buses(island)[0])
    }
}

/// Per-island outcome of a dispatch or load-flow call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandReport {
    pub buses: Vec<usize>,
    /// Served fraction of the requested demand.
    pub sigma: f64,
    /// Whether the requested demand could be served in full before any
    /// fallback scaling or shedding.
    pub full_service_feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSolution {
    /// Bus angles in radians; each island's slack bus sits at 0.
    pub theta: Vec<f64>,
    /// Signed from-to flow per branch in MW (0 for dead branches).
    pub branch_flow: Vec<f64>,
    pub gen_dispatch: Vec<f64>,
    pub served_load: Vec<f64>,
    pub feasible: bool,
    pub islands: Vec<IslandReport>,
}

impl FlowSolution {
    pub fn total_served(&self) -> f64 {
        self.served_load.iter().sum()
    }

    /// Branches whose |flow| exceeds `factor` times their long-term rating.
    pub fn overloaded(&self, net: &Network, factor: f64, tolerance: f64) -> Vec<usize> {
        net.branches()
            .iter()
            .filter(|br| self.branch_flow[br.id].abs() > factor * br.rating_long + tolerance)
            .map(|br| br.id)
            .collect()
    }
}

/// Reduced susceptance data for one island.
pub(crate) struct IslandGrid {
    pub buses: Vec<usize>,
    pub branches: Vec<usize>,
    /// Position of each island bus in `buses`; `usize::MAX` elsewhere.
    pub local: Vec<usize>,
    /// Inverse of the reduced susceptance matrix (slack removed), laid out
    /// over all island buses with zero slack row and column.
    pub reactance: DMatrix<f64>,
}

impl IslandGrid {
    pub fn build(net: &Network, part: &IslandPartition, island: usize) -> Result<Self> {
        let buses = part.buses(island);
        let branches = part.branches(net, island);
        let slack = part.slack(net, island);
        let mut local = vec![usize::MAX; net.n_buses()];
        for (k, &b) in buses.iter().enumerate() {
            local[b] = k;
        }
        let n = buses.len();
        let mut reactance = DMatrix::zeros(n, n);
        if n > 1 {
            let s = local[slack];
            // reduced index: skip the slack
            let red = |k: usize| if k < s { k } else { k - 1 };
            let mut bmat = DMatrix::zeros(n - 1, n - 1);
            for &l in &branches {
                let br = &net.branches()[l];
                let (f, t) = (local[br.from_bus], local[br.to_bus]);
                let y = 1.0 / br.reactance;
                if f != s {
                    bmat[(red(f), red(f))] += y;
                }
                if t != s {
                    bmat[(red(t), red(t))] += y;
                }
                if f != s && t != s {
                    bmat[(red(f), red(t))] -= y;
                    bmat[(red(t), red(f))] -= y;
                }
            }
            let inv = bmat.lu().try_inverse().ok_or(Error::SingularSusceptance { island })?;
            for a in 0..n {
                if a == s {
                    continue;
                }
                for b in 0..n {
                    if b == s {
                        continue;
                    }
                    reactance[(a, b)] = inv[(red(a), red(b))];
                }
            }
        }
        Ok(IslandGrid { buses, branches, local, reactance })
    }

    /// Power transfer distribution factors: MW on each island branch per MW
    /// injected at each island bus (withdrawn at the slack).
    pub fn ptdf(&self, net: &Network) -> Matrix {
        let mut m = Matrix::zeros(self.branches.len(), self.buses.len());
        for (row, &l) in self.branches.iter().enumerate() {
            let br = &net.branches()[l];
            let (f, t) = (self.local[br.from_bus], self.local[br.to_bus]);
            for k in 0..self.buses.len() {
                m[(row, k)] = (self.reactance[(f, k)] - self.reactance[(t, k)]) / br.reactance;
            }
        }
        m
    }
}

/// DC power flow for a balanced dispatch.
///
/// `demand` is per bus (MW), `dispatch` per generator (MW). Every island
/// must already balance to within [`BALANCE_TOLERANCE`].
pub fn dc_pf(net: &Network, alive: &[bool], demand: &[f64], dispatch: &[f64]) -> Result<FlowSolution> {
    check_lengths(net, alive, demand)?;
    if dispatch.len() != net.generators().len() {
        return Err(Error::Dimension(format!(
            "{} dispatch values for {} generators",
            dispatch.len(),
            net.generators().len()
        )));
    }
    let part = IslandPartition::new(net, alive);
    let mut injection = demand.iter().map(|d| -d).collect::<Vec<f64>>();
    for (g, &p) in net.generators().iter().zip(dispatch) {
        injection[g.bus] += p;
    }
    let mut theta = vec![0.0; net.n_buses()];
    let mut branch_flow = vec![0.0; net.n_branches()];
    let mut islands = Vec::with_capacity(part.n_islands());
    for island in 0..part.n_islands() {
        let grid = IslandGrid::build(net, &part, island)?;
        let mismatch: f64 = grid.buses.iter().map(|&b| injection[b]).sum();
        let scale: f64 = 1.0 + grid.buses.iter().map(|&b| demand[b]).sum::<f64>();
        if mismatch.abs() > BALANCE_TOLERANCE * scale {
            return Err(Error::Unbalanced { island, mismatch });
        }
        solve_island(net, &grid, &injection, &mut theta, &mut branch_flow);
        islands.push(IslandReport { buses: grid.buses.clone(), sigma: 1.0, full_service_feasible: true });
    }
    Ok(FlowSolution {
        theta,
        branch_flow,
        gen_dispatch: dispatch.to_vec(),
        served_load: demand.to_vec(),
        feasible: true,
        islands,
    })
}

fn solve_island(net: &Network, grid: &IslandGrid, injection: &[f64], theta: &mut [f64], flow: &mut [f64]) {
    let base = net.base_mva();
    let p = DVector::from_iterator(grid.buses.len(), grid.buses.iter().map(|&b| injection[b] / base));
    let angles = &grid.reactance * p;
    for (k, &b) in grid.buses.iter().enumerate() {
        theta[b] = angles[k];
    }
    for &l in &grid.branches {
        let br = &net.branches()[l];
        flow[l] = base * (theta[br.from_bus] - theta[br.to_bus]) / br.reactance;
    }
}

pub(crate) fn check_lengths(net: &Network, alive: &[bool], demand: &[f64]) -> Result<()> {
    if alive.len() != net.n_branches() {
        return Err(Error::Dimension(format!("{} branch states for {} branches", alive.len(), net.n_branches())));
    }
    if demand.len() != net.n_buses() {
        return Err(Error::Dimension(format!("{} demand values for {} buses", demand.len(), net.n_buses())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Branch, Bus, Generator};

    pub(crate) fn ring3() -> Network {
        let buses = (0..3).map(|id| Bus { id, load_p: 0.0, shed_priority: 1.0, is_slack: id == 0 }).collect();
        let pairs = [(0, 1), (1, 2), (0, 2)];
        let branches = pairs
            .iter()
            .enumerate()
            .map(|(id, &(f, t))| Branch { id, from_bus: f, to_bus: t, reactance: 0.1, rating_long: 100.0, cost_weight: 1.0 })
            .collect();
        let gens = vec![Generator { id: 0, bus: 0, p_max: 200.0, p_min: 0.0, cost: 1.0 }];
        Network::new(100.0, buses, branches, gens).unwrap()
    }

    #[test]
    fn two_bus_single_path() {
        let net = crate::grid::tests::two_bus();
        let sol = dc_pf(&net, &[true], &[0.0, 50.0], &[50.0]).unwrap();
        assert!((sol.branch_flow[0] - 50.0).abs() < 1e-12);
        assert_eq!(sol.theta[0], 0.0);
    }

    #[test]
    fn three_bus_ring_analytic() {
        // 90 MW in at bus 1, out at bus 3: the direct path carries 2/3.
        let net = ring3();
        let sol = dc_pf(&net, &[true; 3], &[0.0, 0.0, 90.0], &[90.0]).unwrap();
        assert!((sol.branch_flow[2] - 60.0).abs() < 1e-9);
        assert!((sol.branch_flow[0] - 30.0).abs() < 1e-9);
        assert!((sol.branch_flow[1] - 30.0).abs() < 1e-9);
    }

    #[test]
    fn unbalanced_input_rejected() {
        let net = ring3();
        assert!(matches!(dc_pf(&net, &[true; 3], &[0.0, 0.0, 90.0], &[80.0]), Err(Error::Unbalanced { .. })));
    }

    #[test]
    fn islands_and_slack_choice() {
        let net = crate::grid::ieee30();
        let mut alive = vec![true; net.n_branches()];
        // branches 27-29 and 27-30 and 25-26: isolates {29,30} and {26}
        alive[36] = false;
        alive[37] = false;
        alive[33] = false;
        let part = IslandPartition::new(&net, &alive);
        assert_eq!(part.n_islands(), 3);
        let isl = part.island_of(28);
        assert_eq!(part.buses(isl), vec![28, 29]);
        assert_eq!(part.slack(&net, isl), 28);
        assert_eq!(part.slack(&net, 0), 0);
        assert!(part.generators(&net, isl).is_empty());
    }
}
