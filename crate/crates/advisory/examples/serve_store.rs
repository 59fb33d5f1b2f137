//! Build a small store (the IEEE 30-bus case plus one model per policy at
//! one loading level) and serve it.
//!
//! cargo run --release -p cascade-advisory --example serve_store -- [store-dir] [port]
//!
//! curl -s localhost:8080/models
//! curl -s -XPOST localhost:8080/advise -H 'content-type: application/json' \
//!   -d '{"case_id":"ieee30","contingency":[6,8],"loading_c":1.3,"strategies":["none","redispatch-smart"]}'

use std::net::SocketAddr;
use std::path::PathBuf;

use cascade_advisory::{serve, ServiceConfig};
use cascade_core::cascade::Policy;
use cascade_core::grid::ieee30;
use cascade_core::grid::native::to_json;
use cascade_core::pipeline::{level_tag, simulate_level, train_on_pools, write_json_compact, LoadedPool, RunConfig};

const LOADING: f64 = 1.3;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let store = PathBuf::from(args.next().unwrap_or_else(|| "store".into()));
    let port: u16 = args.next().map_or(8080, |s| s.parse().expect("port"));
    let net = ieee30();
    std::fs::create_dir_all(store.join("cases"))?;
    std::fs::write(store.join("cases/ieee30.json"), to_json(&net))?;
    for policy in Policy::ALL {
        let cfg = RunConfig { loading: vec![LOADING], samples: 200, policy, ..RunConfig::default() };
        let outcome = simulate_level(&net, &cfg, LOADING)?;
        let Some(pool) = outcome.pool else { continue };
        let loaded = LoadedPool { path: "memory".into(), manifest: outcome.manifest, pool };
        let model = train_on_pools(&[loaded], &cfg)?;
        write_json_compact(&store.join(format!("models/{policy}-{}.json", level_tag(LOADING))), &model)?;
    }
    println!("serving {} on port {port}", store.display());
    let cfg = ServiceConfig { store_dir: store, ..ServiceConfig::default() };
    serve(cfg, SocketAddr::from(([127, 0, 0, 1], port))).await?;
    Ok(())
}
