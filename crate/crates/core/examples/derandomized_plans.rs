//! Picks query lines for many decoding tasks at once so that none has too
//! many erased queries and no node is queried too often.
//!
//! cargo run --example derandomized_plans

use cliquefort::derand::{delta_prime, det_dec, hit_counts, DerandConfig, DetDecRequest, Instance};
use cliquefort::rmldc::{make_params, ReedMullerCode};
use num_rational::Ratio;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let code = ReedMullerCode::new(make_params(7, 2, Ratio::new(1, 2))?);
    let p = code.params();
    let alpha = Ratio::new(1, 4);

    // Nodes 0..12 have crashed.
    let mut crashed = vec![false; p.n];
    crashed[..12].iter_mut().for_each(|c| *c = true);
    let instances: Vec<_> = (0..4 * p.n).map(|j| Instance { target: j % p.k, erasures: &crashed }).collect();
    let cfg = DerandConfig::default();
    let congestion = cfg.congestion(&code, instances.len());
    let req = DetDecRequest { instances, delta_prime: delta_prime(alpha, p.delta), congestion };

    let plans = det_dec(&code, &req, 0x5eed, cfg.restarts)?;
    let worst = plans
        .iter()
        .map(|pl| pl.queries.iter().filter(|&&x| crashed[x]).count())
        .max()
        .unwrap_or(0);
    let hits = hit_counts(&plans, p.n);
    println!(
        "{} plans; worst plan has {worst} erased queries (threshold {}); busiest node hit {} times (cap {})",
        plans.len(),
        p.erasure_threshold(),
        hits.iter().max().unwrap(),
        congestion.cap
    );
    Ok(())
}
