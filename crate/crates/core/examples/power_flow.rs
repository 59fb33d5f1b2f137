//! Dispatch a case with the full-service OPF, check the flows with a plain
//! DC load flow, then trip two branches and re-dispatch.
//!
//! cargo run --release -p cascade-core --example power_flow -- [case] [loading] [a,b]

use cascade_core::grid::{scale_loads, LoadingProfile};
use cascade_core::pipeline::{load_case, parse_contingency};
use cascade_core::powerflow::{dc_opf_full_service, dc_pf};

fn main() -> cascade_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let case = args.next().unwrap_or_else(|| "ieee30".into());
    let c: f64 = args.next().map_or(1.0, |s| s.parse().expect("loading multiplier"));
    let pair = args.next().unwrap_or_else(|| "1,2".into());

    let net = scale_loads(&load_case(&case, None)?, LoadingProfile::new(c)?);
    let demand = net.demand();
    let mut alive = vec![true; net.n_branches()];
    let base = dc_opf_full_service(&net, &alive, &demand)?;
    println!(
        "{} buses, {} branches, load {:.1} MW, dispatched {:.1} MW, feasible {}",
        net.n_buses(),
        net.n_branches(),
        net.total_load(),
        base.gen_dispatch.iter().sum::<f64>(),
        base.feasible
    );

    let check = dc_pf(&net, &alive, &demand, &base.gen_dispatch)?;
    let gap = check.branch_flow.iter().zip(&base.branch_flow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("load flow with the OPF dispatch: max flow gap {gap:.2e} MW");

    let trip = parse_contingency(&pair, net.n_branches())?;
    for b in trip.branches() {
        alive[b] = false;
    }
    let after = dc_opf_full_service(&net, &alive, &demand)?;
    println!("after tripping {pair}: {} islands, served {:.1} MW", after.islands.len(), after.total_served());
    println!("{:>6} {:>10} {:>10} {:>8}", "branch", "before", "after", "rating");
    for (j, br) in net.branches().iter().enumerate() {
        println!("{:>6} {:>10.2} {:>10.2} {:>8.1}", j + 1, base.branch_flow[j], after.branch_flow[j], br.rating_long);
    }
    let over: Vec<usize> = after.overloaded(&net, 1.0, 1e-9).iter().map(|j| j + 1).collect();
    println!("above long-term rating: {over:?}");
    Ok(())
}
