//! Records the crashes of an adversarial run and replays them with a
//! scripted adversary; the replayed trace is identical.
//!
//! cargo run --release --example replay_trace

use cliquefort::circuit::gen_parity_tree;
use cliquefort::netsim::{ScriptedAdversary, Trace};
use cliquefort::protocol::{robust_compute, AdversaryKind, RunSetup};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut c = gen_parity_tree(8)?;
    c.assign_owners_round_robin(27);
    let inputs = [true, false, true, true, false, false, true, false];
    let setup = RunSetup::new(3, 3);

    let first = robust_compute(&c, &inputs, &setup, AdversaryKind::Greedy.build(0))?;
    let jsonl = first.trace.to_jsonl();
    let events = Trace::read_jsonl(jsonl.as_bytes())?;
    let replay = robust_compute(&c, &inputs, &setup, Box::new(ScriptedAdversary::from_trace(&events)))?;

    println!("{} crashes recorded and replayed", first.crashes);
    println!("traces identical: {}", replay.trace.to_jsonl() == jsonl);
    Ok(())
}
