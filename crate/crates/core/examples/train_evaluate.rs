//! Train both influence models per loading level and score them on the
//! held-out split.
//!
//! cargo run --release -p cascade-core --example train_evaluate -- [samples] [policy]

use cascade_core::cascade::{generate_pool_with, CascadeSample, CascadeSimulator, Policy};
use cascade_core::grid::{ieee30, line_graph_distance, LoadingProfile};
use cascade_core::influence::{predict_cascade, predict_load_shed, train, PredictionMode, TrainOptions};
use cascade_core::metrics::{link_accuracy, local_influence_loss, shed_accuracy, LossOptions, LossReport};

fn main() -> cascade_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let samples: usize = args.next().map_or(300, |s| s.parse().expect("sample count"));
    let policy: Policy = args.next().map_or(Ok(Policy::None), |s| s.parse())?;
    let net = ieee30();
    let k = line_graph_distance(&net);
    let weights: Vec<f64> = net.branches().iter().map(|b| b.cost_weight).collect();
    let priority = net.shed_priorities();
    println!(
        "{:>5} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "c", "link-tr", "link-te", "shed-tr", "shed-te", "L_link", "L_shed", "L_local"
    );
    for profile in LoadingProfile::sweep() {
        let sim = match CascadeSimulator::new(&net, profile, policy) {
            Ok(sim) => sim,
            Err(e) => {
                println!("{:>5.1} skipped: {e}", profile.c);
                continue;
            }
        };
        let pool = generate_pool_with(&sim, samples, 2024, 0.9)?;
        let (link, shed, _) = train(&pool.train_samples(), &TrainOptions::default())?;
        let score = |set: &[&CascadeSample]| -> cascade_core::Result<(f64, f64)> {
            let (mut la, mut sa) = (0.0, 0.0);
            for s in set {
                let p = predict_cascade(&link, s.initial_state(), s.loading_c)?;
                la += link_accuracy(p.final_state(), s.final_state());
                let l = predict_load_shed(&shed, &s.states, s.loading_c, PredictionMode::Eval)?;
                sa += shed_accuracy(&l.ever_shed(), &s.ever_shed());
            }
            Ok((la / set.len() as f64, sa / set.len() as f64))
        };
        let (ltr, str_) = score(&pool.train_samples())?;
        let (lte, ste) = score(&pool.test_samples())?;
        let all: Vec<&CascadeSample> = pool.samples.iter().collect();
        let losses = LossReport::of(&all, &weights, &priority, &LossOptions::default());
        println!(
            "{:>5.1} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.3} {:>9.1} {:>9.3}",
            profile.c,
            ltr,
            lte,
            str_,
            ste,
            losses.link_fail_loss,
            losses.load_shed_loss,
            local_influence_loss(&link.d, &k)?
        );
    }
    Ok(())
}
