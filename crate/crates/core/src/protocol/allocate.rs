//! Greedy assignment of gates to alive nodes.

use serde::Serialize;

use crate::circuit::GateId;
use crate::netsim::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Allocation {
    /// Gates of each node, ascending by id. Empty for nodes outside `alive`.
    pub assigned: Vec<Vec<GateId>>,
    /// Total fan of the gates of each node.
    pub loads: Vec<usize>,
    /// Copies made of every gate, `min(2^l1, |alive|)`.
    pub copies: usize,
}

impl Allocation {
    pub fn max_load(&self) -> usize {
        self.loads.iter().copied().max().unwrap_or(0)
    }
}

/// Assigns every `(gate, fan)` to the `min(2^l1, |alive|)` least-loaded alive
/// nodes, visiting gates by descending fan (ties by id) and breaking load ties
/// by node id.
pub fn allocate(gates: &[(GateId, usize)], l1: u32, alive: &[NodeId], n: usize) -> Option<Allocation> {
    if alive.is_empty() {
        return None;
    }
    let mut order = gates.to_vec();
    order.sort_by_key(|&(g, fan)| (std::cmp::Reverse(fan), g));
    let copies = (1usize << l1.min(63)).min(alive.len());
    let mut nodes = alive.to_vec();
    nodes.sort_unstable();
    nodes.dedup();
    let mut assigned = vec![Vec::new(); n];
    let mut loads = vec![0usize; n];
    for (g, fan) in order {
        nodes.sort_by_key(|&v| (loads[v], v));
        for &v in &nodes[..copies] {
            assigned[v].push(g);
            loads[v] += fan;
        }
    }
    for a in assigned.iter_mut() {
        a.sort_unstable();
    }
    Some(Allocation {
        assigned,
        loads,
        copies,
    })
}

/// `max(4 P L / |alive|, Delta)` with `P` the total fan and `Delta` the
/// largest fan, as an exact fraction `(numerator, denominator)`.
pub fn load_bound(gates: &[(GateId, usize)], copies: usize, alive: usize) -> (usize, usize) {
    let total: usize = gates.iter().map(|g| g.1).sum();
    let max_fan = gates.iter().map(|g| g.1).max().unwrap_or(0);
    let num = 4 * total * copies;
    if num >= max_fan * alive {
        (num, alive)
    } else {
        (max_fan, 1)
    }
}
