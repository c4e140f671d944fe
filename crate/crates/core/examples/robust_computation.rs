//! Computes a random layered circuit on 49 nodes while the layer spiker
//! adversary tries to force restarts.
//!
//! cargo run --release --example robust_computation

use cliquefort::circuit::gen_random_layered;
use cliquefort::netsim::Event;
use cliquefort::protocol::{robust_compute, AdversaryKind, RunSetup};
use num_rational::Ratio;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut c = gen_random_layered(4, 40, 6, 1)?;
    c.assign_owners_round_robin(49);
    let inputs: Vec<bool> = (0..c.num_inputs()).map(|k| k % 3 != 1).collect();

    let mut setup = RunSetup::new(7, 2);
    setup.alpha = Ratio::new(1, 5);
    let rep = robust_compute(&c, &inputs, &setup, AdversaryKind::LayerSpiker.build(0))?;

    let k = &rep.constants;
    println!(
        "Lambda={} maxRetTime={} maxStoreTime={} restart threshold={} (analytic {:.3})",
        k.lambda, k.max_ret_time, k.max_store_time, k.threshold, k.analytic_threshold
    );
    for e in &rep.trace.events {
        match e.event {
            Event::Restart { layer, rep, crashes } => {
                println!("round {}: layer {layer} restarts as repetition {rep} after {crashes} crashes", e.round)
            }
            Event::LayerDone { layer, rounds } => println!("round {}: layer {layer} done in {rounds} rounds", e.round),
            _ => {}
        }
    }
    println!(
        "{} rounds, {} restarts (limit {}), {} crashes, outputs correct: {}",
        rep.total_rounds, rep.restarts, rep.restart_limit, rep.crashes, rep.correct
    );
    Ok(())
}
