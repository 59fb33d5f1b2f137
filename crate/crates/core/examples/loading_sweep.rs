//! Base operating point and cascade statistics across the loading sweep.
//!
//! cargo run --release -p cascade-core --example loading_sweep -- [samples] [policy]

use cascade_core::cascade::{generate_pool_with, CascadeSimulator, Policy};
use cascade_core::grid::{ieee30, LoadingProfile};

fn main() -> cascade_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let samples: usize = args.next().map_or(300, |s| s.parse().expect("sample count"));
    let policy: Policy = args.next().map_or(Ok(Policy::None), |s| s.parse())?;
    let net = ieee30();
    println!("policy {policy}, {samples} samples per level");
    println!("{:>5} {:>8} {:>8} {:>8} {:>8} {:>8}", "c", "sigma0", "no-prop", "mean T", "max T", "shed");
    for profile in LoadingProfile::sweep() {
        let sim = match CascadeSimulator::new(&net, profile, policy) {
            Ok(sim) => sim,
            Err(e) => {
                println!("{:>5.1} skipped: {e}", profile.c);
                continue;
            }
        };
        let pool = generate_pool_with(&sim, samples, 2024, 0.9)?;
        let s = pool.summary();
        println!(
            "{:>5.1} {:>8.4} {:>8.3} {:>8.2} {:>8} {:>8.3}",
            profile.c,
            sim.base_case().sigma,
            s.fraction_no_propagation,
            s.mean_termination_time,
            s.max_termination_time,
            s.fraction_with_shed
        );
    }
    Ok(())
}
