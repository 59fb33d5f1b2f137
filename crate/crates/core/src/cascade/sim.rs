use log::{debug, warn};

use super::{CascadeSample, Policy};
use crate::error::{Error, Result};
use crate::grid::{scale_loads, Contingency, LoadingProfile, Network, SHORT_TERM_FACTOR};
use crate::powerflow::{
    dc_opf_full_service_with, dc_opf_smart_shed_with, dc_pf, economic_dispatch, IslandPartition, OpfOptions,
    RatingKind,
};

/// Flow above the short-term rating by more than this (MW) trips a branch.
const OVERLOAD_TOLERANCE: f64 = 1e-6;
/// Unserved amounts below this (MW) count as full service.
const SHED_TOLERANCE: f64 = 1e-6;

/// Pre-contingency operating point on the intact, scaled network.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseCase {
    /// Generation before the contingency; shared by every uncontrolled run.
    pub dispatch: Vec<f64>,
    /// Served fraction of the scaled demand that a full-service dispatch
    /// within long-term ratings achieves on the intact network.
    pub sigma: f64,
    pub full_service_feasible: bool,
}

/// Cascade oracle for one network, loading level and policy.
///
/// Without corrective action the pre-contingency dispatch is the cheapest
/// secure dispatch at nominal loading (long-term ratings), scaled with the
/// load; generators that hit their limit hand the remainder to the others in
/// proportion to headroom. Flows therefore grow linearly with the loading
/// multiplier, as in a plain load-scaling study.
#[derive(Debug, Clone)]
pub struct CascadeSimulator {
    net: Network,
    loading_c: f64,
    policy: Policy,
    base: BaseCase,
    opts: OpfOptions,
}

impl CascadeSimulator {
    pub fn new(net: &Network, profile: LoadingProfile, policy: Policy) -> Result<Self> {
        Self::with_options(net, profile, policy, OpfOptions { rating: RatingKind::Short, ..Default::default() })
    }

    /// `opts.rating` is ignored: intact-network dispatch always uses
    /// long-term ratings and every post-contingency step short-term ones.
    pub fn with_options(net: &Network, profile: LoadingProfile, policy: Policy, opts: OpfOptions) -> Result<Self> {
        let long = OpfOptions { rating: RatingKind::Long, ..opts };
        let intact = vec![true; net.n_branches()];
        let reference = dc_opf_full_service_with(net, &intact, &net.demand(), &long)?;

        let scaled = scale_loads(net, profile);
        let check = dc_opf_full_service_with(&scaled, &intact, &scaled.demand(), &long)?;
        let total = scaled.total_load();
        let sigma = if total > 0.0 { check.total_served() / total } else { 1.0 };
        let full_service_feasible = check.islands.iter().all(|r| r.full_service_feasible);
        if !full_service_feasible {
            if policy == Policy::RedispatchFull {
                return Err(Error::InfeasibleInitialization { loading: profile.c, sigma });
            }
            debug!("loading {}: secure full service reaches only {:.4} of demand", profile.c, sigma);
        }
        let dispatch = scale_dispatch(&scaled, &reference.gen_dispatch, profile.c, total);
        if dispatch.iter().sum::<f64>() < total - 1e-9 {
            warn!("loading {}: demand exceeds total generation capacity", profile.c);
        }
        let base = BaseCase { dispatch, sigma, full_service_feasible };
        Ok(CascadeSimulator {
            net: scaled,
            loading_c: profile.c,
            policy,
            base,
            opts: OpfOptions { rating: RatingKind::Short, ..opts },
        })
    }

    /// The scaled network the simulator runs on.
    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn loading_c(&self) -> f64 {
        self.loading_c
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn base_case(&self) -> &BaseCase {
        &self.base
    }

    pub fn run(&self, contingency: Contingency, sample_id: usize, seed: u64) -> Result<CascadeSample> {
        let s1 = contingency.initial_state(self.net.n_branches());
        let mut trace = Trace::default();
        match self.policy {
            Policy::None => self.run_uncontrolled(s1, &mut trace)?,
            Policy::RedispatchFull => self.run_full_service(s1, &mut trace)?,
            Policy::RedispatchSmart => self.run_smart(s1, &mut trace)?,
        }
        let termination_time = trace.states.len();
        debug!("sample {sample_id}: {:?} terminated at T={termination_time}", contingency.branches());
        Ok(CascadeSample {
            sample_id,
            loading_c: self.loading_c,
            initial_failures: contingency.branches(),
            states: trace.states,
            load_served: trace.served,
            shed_mw: trace.shed,
            termination_time,
            policy: self.policy,
            seed,
        })
    }

    fn run_uncontrolled(&self, mut alive: Vec<bool>, trace: &mut Trace) -> Result<()> {
        let net = &self.net;
        let mut dispatch = self.base.dispatch.clone();
        let mut served = net.demand();
        loop {
            balance_islands(net, &alive, &mut dispatch, &mut served);
            let flow = dc_pf(net, &alive, &served, &dispatch)?;
            trace.record(net, &alive, &served);
            if !self.trip_overloads(&flow.branch_flow, &mut alive) {
                return Ok(());
            }
        }
    }

    fn run_full_service(&self, mut alive: Vec<bool>, trace: &mut Trace) -> Result<()> {
        let net = &self.net;
        let demand = net.demand();
        loop {
            let opf = dc_opf_full_service_with(net, &alive, &demand, &self.opts)?;
            let part = IslandPartition::new(net, &alive);
            let mut dispatch = opf.gen_dispatch.clone();
            let mut delivered = opf.served_load.clone();
            // Full service is attempted first: where the network cannot carry
            // all the load generation could supply, the forced dispatch
            // overloads lines before service is scaled back.
            for (island, report) in opf.islands.iter().enumerate() {
                let gens = part.generators(net, island);
                let island_demand: f64 = report.buses.iter().map(|&b| demand[b]).sum();
                if island_demand <= 0.0 {
                    continue;
                }
                let capacity: f64 = gens.iter().map(|&g| net.generators()[g].p_max).sum();
                let sigma_cap = (capacity / island_demand).min(1.0);
                if report.sigma >= sigma_cap - 1e-6 {
                    continue;
                }
                if let Some(forced) = economic_dispatch(net, &gens, sigma_cap * island_demand) {
                    for (k, &g) in gens.iter().enumerate() {
                        dispatch[g] = forced[k];
                    }
                    for &b in &report.buses {
                        delivered[b] = sigma_cap * demand[b];
                    }
                }
            }
            let flow = dc_pf(net, &alive, &delivered, &dispatch)?;
            trace.record(net, &alive, &opf.served_load);
            if !self.trip_overloads(&flow.branch_flow, &mut alive) {
                return Ok(());
            }
        }
    }

    fn run_smart(&self, alive: Vec<bool>, trace: &mut Trace) -> Result<()> {
        let net = &self.net;
        let sol = dc_opf_smart_shed_with(net, &alive, &net.demand(), &net.shed_priorities(), &self.opts)?;
        trace.record(net, &alive, &sol.served_load);
        Ok(())
    }

    /// Trips every branch above its short-term rating. Returns whether any did.
    fn trip_overloads(&self, flow: &[f64], alive: &mut [bool]) -> bool {
        let mut tripped = false;
        for br in self.net.branches() {
            if alive[br.id] && flow[br.id].abs() > SHORT_TERM_FACTOR * br.rating_long + OVERLOAD_TOLERANCE {
                alive[br.id] = false;
                tripped = true;
            }
        }
        tripped
    }
}

/// Simulates one cascade from scratch. Prefer [`CascadeSimulator`] when
/// running many contingencies on the same level.
pub fn run_cascade(
    net: &Network,
    profile: LoadingProfile,
    contingency: Contingency,
    policy: Policy,
    rng_seed: u64,
) -> Result<CascadeSample> {
    CascadeSimulator::new(net, profile, policy)?.run(contingency, 0, rng_seed)
}

#[derive(Default)]
struct Trace {
    states: Vec<Vec<bool>>,
    served: Vec<Vec<bool>>,
    shed: Vec<Vec<f64>>,
}

impl Trace {
    fn record(&mut self, net: &Network, alive: &[bool], served: &[f64]) {
        let shed: Vec<f64> = net
            .buses()
            .iter()
            .zip(served)
            .map(|(b, &s)| {
                let gap = b.load_p - s;
                if gap > SHED_TOLERANCE {
                    gap
                } else {
                    0.0
                }
            })
            .collect();
        self.served.push(shed.iter().map(|&s| s == 0.0).collect());
        self.shed.push(shed);
        self.states.push(alive.to_vec());
    }
}

/// Scales a reference dispatch by `c`, clips at `p_max` and spreads any
/// shortfall against `target` over the remaining headroom.
fn scale_dispatch(net: &Network, reference: &[f64], c: f64, target: f64) -> Vec<f64> {
    let gens = net.generators();
    let mut out: Vec<f64> = gens.iter().zip(reference).map(|(g, &p)| (c * p).clamp(g.p_min, g.p_max)).collect();
    let deficit = target - out.iter().sum::<f64>();
    let headroom: f64 = gens.iter().zip(&out).map(|(g, &p)| g.p_max - p).sum();
    if deficit > 0.0 && headroom > 0.0 {
        let share = (deficit / headroom).min(1.0);
        for (g, p) in gens.iter().zip(out.iter_mut()) {
            *p += (g.p_max - *p) * share;
        }
    }
    out
}

/// Balances every island without re-dispatch: shed load proportionally when
/// generation falls short, curtail generation above minimum proportionally
/// when it exceeds load, and black the island out when neither works.
fn balance_islands(net: &Network, alive: &[bool], dispatch: &mut [f64], served: &mut [f64]) {
    let part = IslandPartition::new(net, alive);
    for island in 0..part.n_islands() {
        let buses = part.buses(island);
        let gens = part.generators(net, island);
        let generation: f64 = gens.iter().map(|&g| dispatch[g]).sum();
        let load: f64 = buses.iter().map(|&b| served[b]).sum();
        if load > generation {
            let keep = if load > 0.0 { generation.max(0.0) / load } else { 0.0 };
            for &b in &buses {
                served[b] *= keep;
            }
        } else if generation > load {
            let floor: f64 = gens.iter().map(|&g| net.generators()[g].p_min).sum();
            if load >= floor && generation > floor {
                let cut = (generation - load) / (generation - floor);
                for &g in &gens {
                    let p_min = net.generators()[g].p_min;
                    dispatch[g] -= (dispatch[g] - p_min) * cut;
                }
            } else {
                for &g in &gens {
                    dispatch[g] = 0.0;
                }
                for &b in &buses {
                    served[b] = 0.0;
                }
            }
        }
    }
}
