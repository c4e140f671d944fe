//! Spreads a layer's gates over the alive nodes with growing replication.
//!
//! cargo run --example allocate_gates

use cliquefort::protocol::allocate;
use cliquefort::protocol::allocate::load_bound;

fn main() {
    let gates: Vec<(u32, usize)> = (0..30).map(|g| (g, 1 + (g as usize * 7) % 6)).collect();
    let alive: Vec<usize> = (0..25).filter(|v| v % 4 != 0).collect();
    for l1 in 0..=5 {
        let a = allocate(&gates, l1, &alive, 25).expect("some node is alive");
        let (num, den) = load_bound(&gates, a.copies, alive.len());
        println!(
            "l1={l1}: {} copies per gate, max load {} <= {:.1}",
            a.copies,
            a.max_load(),
            num as f64 / den as f64
        );
    }
}
