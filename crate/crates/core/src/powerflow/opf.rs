//! DC optimal power flow: full-service dispatch with uniform-scale fallback,
//! and cost-minimal load shedding.
//!
//! Both are posed per island over generator (and shed) variables, with line
//! flows expressed through the island's PTDF matrix.

use super::lp::{LinearProgram, LpOutcome, LpTolerances, Relation};
use super::{check_lengths, dc_pf, FlowSolution, IslandGrid, IslandPartition, IslandReport};
use crate::error::{Error, Result};
use crate::grid::{Network, SHORT_TERM_FACTOR};
use crate::matrix::Matrix;

/// Which thermal limit bounds the line flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatingKind {
    Long,
    Short,
}

impl RatingKind {
    pub fn factor(self) -> f64 {
        match self {
            RatingKind::Long => 1.0,
            RatingKind::Short => SHORT_TERM_FACTOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpfOptions {
    pub rating: RatingKind,
    pub tolerances: LpTolerances,
}

impl Default for OpfOptions {
    fn default() -> Self {
        OpfOptions { rating: RatingKind::Short, tolerances: LpTolerances::default() }
    }
}

struct IslandProblem<'a> {
    net: &'a Network,
    grid: IslandGrid,
    ptdf: Matrix,
    gens: Vec<usize>,
    limits: Vec<f64>,
}

impl<'a> IslandProblem<'a> {
    fn new(net: &'a Network, part: &IslandPartition, island: usize, rating: RatingKind) -> Result<Self> {
        let grid = IslandGrid::build(net, part, island)?;
        let ptdf = grid.ptdf(net);
        let gens = part.generators(net, island);
        let limits = grid.branches.iter().map(|&l| rating.factor() * net.branches()[l].rating_long).collect();
        Ok(IslandProblem { net, grid, ptdf, gens, limits })
    }

    fn gen_ptdf(&self, row: usize, g: usize) -> f64 {
        self.ptdf[(row, self.grid.local[self.net.generators()[g].bus])]
    }

    /// Flow on island branch `row` caused by withdrawing `demand` at every bus.
    fn demand_flow(&self, row: usize, demand: &[f64]) -> f64 {
        self.grid.buses.iter().enumerate().map(|(k, &b)| self.ptdf[(row, k)] * demand[b]).sum()
    }

    fn island_demand(&self, demand: &[f64]) -> f64 {
        self.grid.buses.iter().map(|&b| demand[b]).sum()
    }

    /// max σ s.t. σ·demand is servable within generator and line limits.
    fn max_scale(&self, demand: &[f64], tol: &LpTolerances) -> Result<f64> {
        let total = self.island_demand(demand);
        if total <= 0.0 {
            return Ok(if self.min_generation() <= 0.0 { 1.0 } else { 0.0 });
        }
        let ng = self.gens.len();
        if ng == 0 {
            return Ok(0.0);
        }
        let s = ng;
        let mut lp = LinearProgram::new(ng + 1);
        for (k, &g) in self.gens.iter().enumerate() {
            let gen = &self.net.generators()[g];
            lp.set_bounds(k, gen.p_min, gen.p_max);
        }
        lp.set_bounds(s, 0.0, 1.0);
        lp.set_cost(s, -1.0);
        let mut balance = vec![1.0; ng + 1];
        balance[s] = -total;
        lp.add_row(balance, Relation::Eq, 0.0);
        for row in 0..self.grid.branches.len() {
            let mut coeffs: Vec<f64> = self.gens.iter().map(|&g| self.gen_ptdf(row, g)).collect();
            coeffs.push(-self.demand_flow(row, demand));
            lp.add_row(coeffs.clone(), Relation::Le, self.limits[row]);
            lp.add_row(coeffs, Relation::Ge, -self.limits[row]);
        }
        match lp.solve_with(tol)? {
            LpOutcome::Optimal { x, .. } => Ok(x[s].clamp(0.0, 1.0)),
            // generator minimums cannot be absorbed at any service level
            LpOutcome::Infeasible => Ok(0.0),
            LpOutcome::Unbounded => Err(Error::Lp("scale problem unbounded".into())),
        }
    }

    fn min_generation(&self) -> f64 {
        self.gens.iter().map(|&g| self.net.generators()[g].p_min).sum()
    }

    /// Cheapest dispatch serving exactly `served` within line limits.
    fn cheapest_dispatch(&self, served: &[f64], tol: &LpTolerances) -> Result<Option<Vec<f64>>> {
        let ng = self.gens.len();
        let total = self.island_demand(served);
        if ng == 0 {
            return Ok(if total <= 0.0 { Some(Vec::new()) } else { None });
        }
        let mut lp = LinearProgram::new(ng);
        for (k, &g) in self.gens.iter().enumerate() {
            let gen = &self.net.generators()[g];
            lp.set_bounds(k, gen.p_min, gen.p_max);
            lp.set_cost(k, gen.cost);
        }
        lp.add_row(vec![1.0; ng], Relation::Eq, total);
        for row in 0..self.grid.branches.len() {
            let coeffs: Vec<f64> = self.gens.iter().map(|&g| self.gen_ptdf(row, g)).collect();
            let offset = self.demand_flow(row, served);
            lp.add_row(coeffs.clone(), Relation::Le, self.limits[row] + offset);
            lp.add_row(coeffs, Relation::Ge, -self.limits[row] + offset);
        }
        match lp.solve_with(tol)? {
            LpOutcome::Optimal { x, .. } => Ok(Some(x)),
            LpOutcome::Infeasible => Ok(None),
            LpOutcome::Unbounded => Err(Error::Lp("dispatch problem unbounded".into())),
        }
    }
}

/// Full-service DC OPF. Minimizes dispatch cost while serving `demand` in
/// full within line limits; when that is impossible, serves the largest
/// uniform fraction σ of each island's demand that is.
pub fn dc_opf_full_service(net: &Network, alive: &[bool], demand: &[f64]) -> Result<FlowSolution> {
    dc_opf_full_service_with(net, alive, demand, &OpfOptions::default())
}

pub fn dc_opf_full_service_with(
    net: &Network,
    alive: &[bool],
    demand: &[f64],
    opts: &OpfOptions,
) -> Result<FlowSolution> {
    check_lengths(net, alive, demand)?;
    let part = IslandPartition::new(net, alive);
    let tol = &opts.tolerances;
    let mut dispatch = vec![0.0; net.generators().len()];
    let mut served = vec![0.0; net.n_buses()];
    let mut reports = Vec::with_capacity(part.n_islands());
    for island in 0..part.n_islands() {
        let problem = IslandProblem::new(net, &part, island, opts.rating)?;
        let sigma = problem.max_scale(demand, tol)?;
        let full = sigma >= 1.0 - 1e-9;
        let sigma = if full { 1.0 } else { sigma };
        let mut level = sigma;
        let mut island_served: Vec<(usize, f64)> = problem.grid.buses.iter().map(|&b| (b, level * demand[b])).collect();
        let mut scaled = demand.to_vec();
        let mut solution = None;
        // back off by a hair if the extreme point is numerically on the edge
        for _ in 0..8 {
            for (b, v) in island_served.iter_mut() {
                *v = level * demand[*b];
                scaled[*b] = *v;
            }
            if let Some(x) = problem.cheapest_dispatch(&scaled, tol)? {
                solution = Some(x);
                break;
            }
            level *= 1.0 - 1e-9;
        }
        let Some(x) = solution else {
            // blackout: nothing can be served in this island
            reports.push(IslandReport { buses: problem.grid.buses.clone(), sigma: 0.0, full_service_feasible: false });
            continue;
        };
        for (b, v) in island_served {
            served[b] = v;
        }
        for (k, &g) in problem.gens.iter().enumerate() {
            dispatch[g] = x[k];
        }
        rebalance(net, &problem.gens, &problem.grid.buses, &mut dispatch, &mut served);
        reports.push(IslandReport { buses: problem.grid.buses.clone(), sigma: level, full_service_feasible: full });
    }
    finish(net, alive, served, dispatch, reports)
}

/// Cost-minimal load shedding DC OPF.
///
/// Minimizes `Σ priority·shed + ε·Σ cost·dispatch` with every line inside its
/// limit, so no branch is left overloaded. ε is small enough that shedding
/// decisions always dominate dispatch cost.
pub fn dc_opf_smart_shed(net: &Network, alive: &[bool], demand: &[f64], priority: &[f64]) -> Result<FlowSolution> {
    dc_opf_smart_shed_with(net, alive, demand, priority, &OpfOptions::default())
}

pub fn dc_opf_smart_shed_with(
    net: &Network,
    alive: &[bool],
    demand: &[f64],
    priority: &[f64],
    opts: &OpfOptions,
) -> Result<FlowSolution> {
    check_lengths(net, alive, demand)?;
    if priority.len() != net.n_buses() {
        return Err(Error::Dimension(format!("{} priorities for {} buses", priority.len(), net.n_buses())));
    }
    let max_priority = priority.iter().copied().fold(0.0, f64::max);
    let max_cost = net.generators().iter().map(|g| g.cost.abs()).fold(0.0, f64::max);
    let eps_gen = if max_cost > 0.0 { 1e-6 * max_priority / max_cost } else { 0.0 };

    let part = IslandPartition::new(net, alive);
    let tol = &opts.tolerances;
    let mut dispatch = vec![0.0; net.generators().len()];
    let mut served = vec![0.0; net.n_buses()];
    let mut reports = Vec::with_capacity(part.n_islands());
    for island in 0..part.n_islands() {
        let problem = IslandProblem::new(net, &part, island, opts.rating)?;
        let buses = &problem.grid.buses;
        let ng = problem.gens.len();
        let nb = buses.len();
        let total: f64 = problem.island_demand(demand);

        let mut lp = LinearProgram::new(ng + nb);
        for (k, &g) in problem.gens.iter().enumerate() {
            let gen = &net.generators()[g];
            lp.set_bounds(k, gen.p_min, gen.p_max);
            lp.set_cost(k, eps_gen * gen.cost);
        }
        for (k, &b) in buses.iter().enumerate() {
            lp.set_bounds(ng + k, 0.0, demand[b]);
            lp.set_cost(ng + k, priority[b]);
        }
        lp.add_row(vec![1.0; ng + nb], Relation::Eq, total);
        for row in 0..problem.grid.branches.len() {
            let mut coeffs: Vec<f64> = problem.gens.iter().map(|&g| problem.gen_ptdf(row, g)).collect();
            coeffs.extend((0..nb).map(|k| problem.ptdf[(row, k)]));
            let offset = problem.demand_flow(row, demand);
            lp.add_row(coeffs.clone(), Relation::Le, problem.limits[row] + offset);
            lp.add_row(coeffs, Relation::Ge, -problem.limits[row] + offset);
        }
        match lp.solve_with(tol)? {
            LpOutcome::Optimal { x, .. } => {
                for (k, &g) in problem.gens.iter().enumerate() {
                    dispatch[g] = x[k];
                }
                let mut shed_total = 0.0;
                for (k, &b) in buses.iter().enumerate() {
                    let shed = x[ng + k].clamp(0.0, demand[b]);
                    shed_total += shed;
                    served[b] = demand[b] - shed;
                }
                rebalance(net, &problem.gens, buses, &mut dispatch, &mut served);
                let sigma = if total > 0.0 { 1.0 - shed_total / total } else { 1.0 };
                reports.push(IslandReport { buses: buses.clone(), sigma, full_service_feasible: shed_total <= 1e-9 });
            }
            // only reachable when generator minimums exceed island demand
            LpOutcome::Infeasible => {
                reports.push(IslandReport { buses: buses.clone(), sigma: 0.0, full_service_feasible: false });
            }
            LpOutcome::Unbounded => return Err(Error::Lp("shed problem unbounded".into())),
        }
    }
    finish(net, alive, served, dispatch, reports)
}

/// Merit-order dispatch serving `target` MW with generator limits only.
/// Returns `None` when the target lies outside `[Σ p_min, Σ p_max]`.
pub fn economic_dispatch(net: &Network, gens: &[usize], target: f64) -> Option<Vec<f64>> {
    let p_min: f64 = gens.iter().map(|&g| net.generators()[g].p_min).sum();
    let p_max: f64 = gens.iter().map(|&g| net.generators()[g].p_max).sum();
    if target < p_min - 1e-9 || target > p_max + 1e-9 {
        return None;
    }
    let mut out: Vec<f64> = gens.iter().map(|&g| net.generators()[g].p_min).collect();
    let mut order: Vec<usize> = (0..gens.len()).collect();
    order.sort_by(|&a, &b| {
        let (ga, gb) = (&net.generators()[gens[a]], &net.generators()[gens[b]]);
        ga.cost.total_cmp(&gb.cost).then(ga.id.cmp(&gb.id))
    });
    let mut remaining = target - p_min;
    for k in order {
        if remaining <= 0.0 {
            break;
        }
        let g = &net.generators()[gens[k]];
        let step = (g.p_max - g.p_min).min(remaining);
        out[k] += step;
        remaining -= step;
    }
    Some(out)
}

/// Whether `served` can be delivered within line limits (any dispatch).
pub fn is_load_feasible(net: &Network, alive: &[bool], served: &[f64], opts: &OpfOptions) -> Result<bool> {
    check_lengths(net, alive, served)?;
    let part = IslandPartition::new(net, alive);
    for island in 0..part.n_islands() {
        let problem = IslandProblem::new(net, &part, island, opts.rating)?;
        if problem.cheapest_dispatch(served, &opts.tolerances)?.is_none() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Removes LP round-off so each island balances to machine precision by
/// nudging the generator with the most headroom in the needed direction.
fn rebalance(net: &Network, gens: &[usize], buses: &[usize], dispatch: &mut [f64], served: &mut [f64]) {
    let gen_total: f64 = gens.iter().map(|&g| dispatch[g]).sum();
    let load_total: f64 = buses.iter().map(|&b| served[b]).sum();
    let mismatch = load_total - gen_total;
    if mismatch == 0.0 {
        return;
    }
    let pick = gens.iter().copied().max_by(|&a, &b| {
        let room = |g: usize| {
            let gen = &net.generators()[g];
            if mismatch > 0.0 {
                gen.p_max - dispatch[g]
            } else {
                dispatch[g] - gen.p_min
            }
        };
        room(a).total_cmp(&room(b)).then(b.cmp(&a))
    });
    match pick {
        Some(g) => dispatch[g] += mismatch,
        None => {
            for &b in buses {
                served[b] = 0.0;
            }
        }
    }
}

fn finish(
    net: &Network,
    alive: &[bool],
    served: Vec<f64>,
    dispatch: Vec<f64>,
    reports: Vec<IslandReport>,
) -> Result<FlowSolution> {
    let mut sol = dc_pf(net, alive, &served, &dispatch)?;
    sol.islands = reports;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ieee30, Branch, Bus, Generator};

    fn radial(rating_long: f64, p_max: f64) -> Network {
        Network::new(
            100.0,
            vec![
                Bus { id: 0, load_p: 0.0, shed_priority: 1.0, is_slack: true },
                Bus { id: 1, load_p: 50.0, shed_priority: 1.0, is_slack: false },
            ],
            vec![Branch { id: 0, from_bus: 0, to_bus: 1, reactance: 0.1, rating_long, cost_weight: 1.0 }],
            vec![Generator { id: 0, bus: 0, p_max, p_min: 0.0, cost: 1.0 }],
        )
        .unwrap()
    }

    #[test]
    fn smart_shed_binding_line() {
        // short-term limit 40 MW: rating_long = 40 / 1.05
        let net = radial(40.0 / SHORT_TERM_FACTOR, 100.0);
        let sol = dc_opf_smart_shed(&net, &[true], &net.demand(), &net.shed_priorities()).unwrap();
        assert!((sol.served_load[1] - 40.0).abs() < 1e-7);
        assert!((sol.branch_flow[0] - 40.0).abs() < 1e-7);
    }

    #[test]
    fn smart_shed_nonbinding() {
        let net = radial(100.0, 100.0);
        let sol = dc_opf_smart_shed(&net, &[true], &net.demand(), &net.shed_priorities()).unwrap();
        assert!((sol.served_load[1] - 50.0).abs() < 1e-9);
    }

    #[test]
    fn island_without_generation_blacks_out() {
        let net = radial(100.0, 100.0);
        let full = dc_opf_full_service(&net, &[false], &[0.0, 80.0]).unwrap();
        assert_eq!(full.served_load[1], 0.0);
        assert!(full.feasible);
        let smart = dc_opf_smart_shed(&net, &[false], &[0.0, 80.0], &[1.0, 1.0]).unwrap();
        assert_eq!(smart.served_load[1], 0.0);
    }

    #[test]
    fn capacity_limited_scaling() {
        let net = radial(1000.0, 30.0);
        let sol = dc_opf_full_service(&net, &[true], &net.demand()).unwrap();
        assert!((sol.islands[0].sigma - 30.0 / 50.0).abs() < 1e-6);
        assert!(!sol.islands[0].full_service_feasible);
        assert!((sol.served_load[1] - 30.0).abs() < 1e-5);
    }

    #[test]
    fn ieee30_base_case_serves_in_full() {
        let net = ieee30();
        let alive = vec![true; net.n_branches()];
        let opts = OpfOptions { rating: RatingKind::Long, ..Default::default() };
        let sol = dc_opf_full_service_with(&net, &alive, &net.demand(), &opts).unwrap();
        assert!(sol.islands[0].full_service_feasible);
        for (s, d) in sol.served_load.iter().zip(net.demand()) {
            assert!((s - d).abs() < 1e-9);
        }
        for br in net.branches() {
            assert!(sol.branch_flow[br.id].abs() <= br.rating_long + 1e-6);
        }
    }

    #[test]
    fn merit_order() {
        let net = ieee30();
        let gens: Vec<usize> = (0..6).collect();
        let d = economic_dispatch(&net, &gens, 100.0).unwrap();
        // cheapest: bus 22 (1.0) then bus 2 (1.75)
        assert_eq!(d[2], 50.0);
        assert_eq!(d[1], 50.0);
        assert!(economic_dispatch(&net, &gens, 400.0).is_none());
    }
}
