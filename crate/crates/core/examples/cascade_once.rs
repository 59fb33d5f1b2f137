//! One contingency under each corrective policy, step by step.
//!
//! cargo run --release -p cascade-core --example cascade_once -- [loading] [a,b]

use cascade_core::cascade::{CascadeSimulator, Policy};
use cascade_core::grid::{ieee30, LoadingProfile};
use cascade_core::metrics::{link_fail_loss, load_shed_loss, LossOptions};
use cascade_core::pipeline::parse_contingency;

fn main() -> cascade_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let c: f64 = args.next().map_or(1.5, |s| s.parse().expect("loading multiplier"));
    let pair = args.next().unwrap_or_else(|| "6,8".into());
    let net = ieee30();
    let contingency = parse_contingency(&pair, net.n_branches())?;
    let weights: Vec<f64> = net.branches().iter().map(|b| b.cost_weight).collect();
    let opts = LossOptions::default();

    for policy in Policy::ALL {
        let sim = match CascadeSimulator::new(&net, LoadingProfile::new(c)?, policy) {
            Ok(sim) => sim,
            Err(e) => {
                println!("{policy}: {e}");
                continue;
            }
        };
        let s = sim.run(contingency, 0, 0)?;
        println!(
            "{policy}: terminates at step {}, link loss {:.3}, shed loss {:.2}",
            s.termination_time,
            link_fail_loss(&s, &weights, &opts),
            load_shed_loss(&s, &net.shed_priorities(), &opts)
        );
        for (t, (state, shed)) in s.states.iter().zip(&s.shed_mw).enumerate() {
            let down: Vec<usize> = state.iter().enumerate().filter(|(_, &a)| !a).map(|(j, _)| j + 1).collect();
            println!("  t={t} down {down:?} shed {:.1} MW", shed.iter().sum::<f64>());
        }
    }
    Ok(())
}
