//! A toy protocol on the simulator: every node gossips a counter to its
//! right neighbour while a random adversary crashes nodes.
//!
//! cargo run --example clique_simulator

use cliquefort::netsim::{
    AdversaryView, ClusterState, Protocol, RandomAdversary, RoundCtx, SimError, Simulator, Trace,
};
use num_rational::Ratio;

struct Ring {
    n: usize,
    rounds: u64,
    received: Vec<u64>,
}

impl Protocol for Ring {
    type Msg = u64;

    fn on_round(&mut self, ctx: &mut RoundCtx<'_, u64>) -> Result<(), SimError> {
        for (v, inbox) in ctx.inbox.iter().enumerate() {
            self.received[v] += inbox.len() as u64;
        }
        if ctx.round() == 1 {
            ctx.arm_adversary();
        }
        let alive: Vec<usize> = ctx.cluster.alive().collect();
        for v in alive {
            ctx.send(v, (v + 1) % self.n, 4, ctx.round())?;
        }
        Ok(())
    }

    fn adversary_view(&self) -> AdversaryView<'_> {
        AdversaryView::idle()
    }

    fn finished(&self) -> bool {
        self.received.iter().sum::<u64>() >= self.rounds * self.n as u64 / 2
    }
}

fn main() -> Result<(), SimError> {
    let n = 16;
    let cluster = ClusterState::new(n, Ratio::new(1, 4), 2);
    println!("{n} nodes, {} bits per pair and round, crash budget {}", cluster.pair_limit(), cluster.budget());
    let ring = Ring { n, rounds: 40, received: vec![0; n] };
    let mut sim = Simulator::new(cluster, ring, Box::new(RandomAdversary::new(1, 0.1)), Trace::new(false));
    let rounds = sim.run(1_000)?;
    let c = sim.cluster();
    println!("finished after {rounds} rounds; crashed nodes {:?}", c.crashed_ids());
    println!("{}", sim.trace().to_jsonl().trim_end());
    Ok(())
}
