//! Train at one loading level and list the links whose failure does the
//! most damage according to the fitted influence matrices.
//!
//! cargo run --release -p cascade-core --example criticality -- [loading] [samples] [top]

use cascade_core::cascade::Policy;
use cascade_core::grid::ieee30;
use cascade_core::metrics::criticality;
use cascade_core::pipeline::{simulate_level, train_on_pools, LoadedPool, RunConfig};

fn main() -> cascade_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let c: f64 = args.next().map_or(1.5, |s| s.parse().expect("loading multiplier"));
    let samples: usize = args.next().map_or(300, |s| s.parse().expect("sample count"));
    let top: usize = args.next().map_or(10, |s| s.parse().expect("count"));
    let net = ieee30();
    let cfg = RunConfig { loading: vec![c], samples, policy: Policy::None, ..RunConfig::default() };
    let outcome = simulate_level(&net, &cfg, c)?;
    let Some(pool) = outcome.pool else {
        println!("level {c} skipped: {}", outcome.manifest.skipped.unwrap_or_default());
        return Ok(());
    };
    let loaded = LoadedPool { path: "memory".into(), manifest: outcome.manifest, pool };
    let model = train_on_pools(&[loaded], &cfg)?;
    let r = criticality(&model.link_model, &model.shed_model);
    println!("{:>4} {:>6} {:>9} {:>6} {:>9}", "rank", "link", "C_D", "link", "C_E");
    for k in 0..top.min(net.n_branches()) {
        let (d, e) = (r.rank_cd[k], r.rank_ce[k]);
        println!("{:>4} {:>6} {:>9.4} {:>6} {:>9.4}", k + 1, d + 1, r.cd[d], e + 1, r.ce[e]);
    }
    Ok(())
}
