//! Layered boolean circuits.
//!
//! Gates are single-output boolean functions. Every edge of the DAG is its own
//! wire, so a gate feeding three consumers owns three wires carrying the same
//! bit. Layers follow dependency depth: inputs sit in layer 0 and every other
//! gate sits one layer above its deepest source.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type GateId = u32;

/// Largest fan-in accepted for table-driven gates.
pub const MAX_LUT_FAN_IN: usize = 16;

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("duplicate gate id {0}")]
    DuplicateGate(GateId),
    #[error("gate {gate} reads from unknown gate {missing}")]
    DanglingWire { gate: GateId, missing: GateId },
    #[error("cycle through gate {0}")]
    Cycle(GateId),
    #[error("gate {gate}: declared layer {declared}, computed {computed}")]
    LayerMismatch {
        gate: GateId,
        declared: u32,
        computed: u32,
    },
    #[error("gate {gate}: {reason}")]
    BadGate { gate: GateId, reason: String },
    #[error("expected {expected} input bits, got {got}")]
    InputCount { expected: usize, got: usize },
    #[error("infeasible generator parameters: {0}")]
    Infeasible(String),
    #[error("unsupported circuit file version {0}")]
    Version(u32),
    #[error("circuit file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("circuit file: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CircuitError>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GateKind {
    Input,
    Output,
    /// Truth table with `2^fan_in` entries; entry `x` is the output when input
    /// port `b` carries bit `(x >> b) & 1`.
    Lut(Vec<bool>),
    And,
    Or,
    Xor,
    Not,
    Maj,
    Id,
}

impl GateKind {
    fn name(&self) -> &'static str {
        match self {
            GateKind::Input => "INPUT",
            GateKind::Output => "OUTPUT",
            GateKind::Lut(_) => "LUT",
            GateKind::And => "AND",
            GateKind::Or => "OR",
            GateKind::Xor => "XOR",
            GateKind::Not => "NOT",
            GateKind::Maj => "MAJ",
            GateKind::Id => "ID",
        }
    }

    fn check_arity(&self, fan_in: usize) -> std::result::Result<(), String> {
        let ok = match self {
            GateKind::Input => fan_in == 0,
            GateKind::Output | GateKind::Not | GateKind::Id => fan_in == 1,
            GateKind::And | GateKind::Or | GateKind::Xor => fan_in >= 1,
            GateKind::Maj => fan_in % 2 == 1,
            GateKind::Lut(t) => {
                if fan_in > MAX_LUT_FAN_IN {
                    return Err(format!("LUT fan-in {fan_in} exceeds {MAX_LUT_FAN_IN}"));
                }
                t.len() == 1 << fan_in
            }
        };
        if ok {
            Ok(())
        } else {
            Err(format!("{} gate cannot have fan-in {fan_in}", self.name()))
        }
    }

    /// Applies the gate to its input bits, in port order.
    pub fn apply(&self, bits: &[bool]) -> bool {
        match self {
            GateKind::Input => panic!("input gates have no inputs"),
            GateKind::Output | GateKind::Id => bits[0],
            GateKind::Not => !bits[0],
            GateKind::And => bits.iter().all(|&b| b),
            GateKind::Or => bits.iter().any(|&b| b),
            GateKind::Xor => bits.iter().fold(false, |acc, &b| acc ^ b),
            GateKind::Maj => 2 * bits.iter().filter(|&&b| b).count() > bits.len(),
            GateKind::Lut(t) => {
                let idx = bits
                    .iter()
                    .enumerate()
                    .fold(0usize, |acc, (k, &b)| acc | (usize::from(b) << k));
                t[idx]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gate {
    pub id: GateId,
    pub kind: GateKind,
    /// Source gates, one per input port.
    pub inputs: Vec<GateId>,
    /// Node holding the bit of an INPUT gate.
    pub owner: Option<usize>,
}

impl Gate {
    pub fn new(id: GateId, kind: GateKind, inputs: Vec<GateId>) -> Self {
        Self {
            id,
            kind,
            inputs,
            owner: None,
        }
    }

    pub fn input(id: GateId, owner: usize) -> Self {
        Self {
            id,
            kind: GateKind::Input,
            inputs: Vec::new(),
            owner: Some(owner),
        }
    }
}

/// One edge of the circuit: the `port`-th input of `dst` reads `src`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WireId {
    pub src: GateId,
    pub dst: GateId,
    pub port: u32,
}

/// Depth, width and maximum total fan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CircuitReport {
    pub depth: u32,
    pub width: usize,
    pub max_fan: usize,
}

/// A validated circuit with its derived layer structure.
#[derive(Debug, Clone)]
pub struct LayeredCircuit {
    gates: Vec<Gate>,
    index: BTreeMap<GateId, usize>,
    layer: Vec<u32>,
    out_wires: Vec<Vec<WireId>>,
    by_layer: Vec<Vec<GateId>>,
    wires_by_layer: Vec<Vec<WireId>>,
    report: CircuitReport,
}

impl LayeredCircuit {
    /// Builds and validates a circuit; gates may be given in any order.
    pub fn new(mut gates: Vec<Gate>) -> Result<Self> {
        gates.sort_by_key(|g| g.id);
        let mut index = BTreeMap::new();
        for (k, g) in gates.iter().enumerate() {
            if index.insert(g.id, k).is_some() {
                return Err(CircuitError::DuplicateGate(g.id));
            }
        }
        for g in &gates {
            g.kind
                .check_arity(g.inputs.len())
                .map_err(|reason| CircuitError::BadGate { gate: g.id, reason })?;
            match (&g.kind, g.owner) {
                (GateKind::Input, None) => {
                    return Err(CircuitError::BadGate {
                        gate: g.id,
                        reason: "INPUT gate needs an owner".into(),
                    })
                }
                (GateKind::Input, Some(_)) => {}
                (_, Some(_)) => {
                    return Err(CircuitError::BadGate {
                        gate: g.id,
                        reason: "only INPUT gates have an owner".into(),
                    })
                }
                _ => {}
            }
            for &src in &g.inputs {
                if !index.contains_key(&src) {
                    return Err(CircuitError::DanglingWire {
                        gate: g.id,
                        missing: src,
                    });
                }
            }
        }

        let mut out_wires = vec![Vec::new(); gates.len()];
        for g in &gates {
            for (port, &src) in g.inputs.iter().enumerate() {
                out_wires[index[&src]].push(WireId {
                    src,
                    dst: g.id,
                    port: port as u32,
                });
            }
        }
        for (k, g) in gates.iter().enumerate() {
            if matches!(g.kind, GateKind::Output) && !out_wires[k].is_empty() {
                return Err(CircuitError::BadGate {
                    gate: g.id,
                    reason: "OUTPUT gate cannot feed other gates".into(),
                });
            }
        }

        let layer = compute_layers(&gates, &index)?;
        let depth = layer.iter().copied().max().unwrap_or(0);
        let mut by_layer = vec![Vec::new(); depth as usize + 1];
        let mut wires_by_layer = vec![Vec::new(); depth as usize + 1];
        for (k, g) in gates.iter().enumerate() {
            by_layer[layer[k] as usize].push(g.id);
            wires_by_layer[layer[k] as usize].extend(out_wires[k].iter().copied());
        }
        let width = wires_by_layer.iter().map(Vec::len).max().unwrap_or(0);
        let max_fan = gates
            .iter()
            .enumerate()
            .map(|(k, g)| g.inputs.len() + out_wires[k].len())
            .max()
            .unwrap_or(0);
        Ok(Self {
            gates,
            index,
            layer,
            out_wires,
            by_layer,
            wires_by_layer,
            report: CircuitReport {
                depth,
                width,
                max_fan,
            },
        })
    }

    pub fn report(&self) -> CircuitReport {
        self.report
    }

    pub fn depth(&self) -> u32 {
        self.report.depth
    }

    pub fn width(&self) -> usize {
        self.report.width
    }

    pub fn max_fan(&self) -> usize {
        self.report.max_fan
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn gate(&self, id: GateId) -> &Gate {
        &self.gates[self.index[&id]]
    }

    pub fn contains(&self, id: GateId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn layer_of(&self, id: GateId) -> u32 {
        self.layer[self.index[&id]]
    }

    /// Gates of layer `i`, ascending by id.
    pub fn gates_in_layer(&self, i: u32) -> &[GateId] {
        self.by_layer.get(i as usize).map_or(&[], Vec::as_slice)
    }

    /// Wires leaving layer `i`.
    pub fn wires_of_layer(&self, i: u32) -> &[WireId] {
        self.wires_by_layer.get(i as usize).map_or(&[], Vec::as_slice)
    }

    /// Outgoing wires of a gate, ordered by destination then port.
    pub fn out_wires(&self, id: GateId) -> &[WireId] {
        &self.out_wires[self.index[&id]]
    }

    /// Incoming wires of a gate, in port order.
    pub fn in_wires(&self, id: GateId) -> Vec<WireId> {
        self.gate(id)
            .inputs
            .iter()
            .enumerate()
            .map(|(port, &src)| WireId {
                src,
                dst: id,
                port: port as u32,
            })
            .collect()
    }

    pub fn fan(&self, id: GateId) -> usize {
        self.gate(id).inputs.len() + self.out_wires(id).len()
    }

    pub fn input_gates(&self) -> impl Iterator<Item = &Gate> {
        self.gates
            .iter()
            .filter(|g| matches!(g.kind, GateKind::Input))
    }

    pub fn output_gates(&self) -> impl Iterator<Item = &Gate> {
        self.gates
            .iter()
            .filter(|g| matches!(g.kind, GateKind::Output))
    }

    pub fn num_inputs(&self) -> usize {
        self.input_gates().count()
    }

    /// Moves INPUT gate `k` (in id order) to node `k mod n`.
    pub fn assign_owners_round_robin(&mut self, n: usize) {
        let mut k = 0;
        for g in self.gates.iter_mut() {
            if matches!(g.kind, GateKind::Input) {
                g.owner = Some(k % n);
                k += 1;
            }
        }
    }

    /// Output bit of every gate, given input bits in INPUT-gate id order.
    pub fn eval_all(&self, inputs: &[bool]) -> Result<BTreeMap<GateId, bool>> {
        let expected = self.num_inputs();
        if inputs.len() != expected {
            return Err(CircuitError::InputCount {
                expected,
                got: inputs.len(),
            });
        }
        let mut values = BTreeMap::new();
        let mut next_input = inputs.iter();
        for layer in &self.by_layer {
            for &id in layer {
                let g = self.gate(id);
                let v = match g.kind {
                    GateKind::Input => *next_input.next().expect("counted above"),
                    _ => {
                        let bits: Vec<bool> = g.inputs.iter().map(|s| values[s]).collect();
                        g.kind.apply(&bits)
                    }
                };
                values.insert(id, v);
            }
        }
        Ok(values)
    }

    /// Serializes to the JSON file format.
    pub fn to_json(&self) -> String {
        let file = CircuitFile {
            version: 1,
            gates: self.gates.iter().map(GateRecord::from).collect(),
        };
        serde_json::to_string_pretty(&file).expect("plain data")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CircuitFile = serde_json::from_str(text)?;
        if file.version != 1 {
            return Err(CircuitError::Version(file.version));
        }
        let declared: Vec<(GateId, Option<u32>)> =
            file.gates.iter().map(|g| (g.id, g.layer)).collect();
        let gates = file
            .gates
            .into_iter()
            .map(Gate::try_from)
            .collect::<Result<Vec<_>>>()?;
        let c = Self::new(gates)?;
        for (id, layer) in declared {
            if let Some(declared) = layer {
                let computed = c.layer_of(id);
                if declared != computed {
                    return Err(CircuitError::LayerMismatch {
                        gate: id,
                        declared,
                        computed,
                    });
                }
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn compute_layers(gates: &[Gate], index: &BTreeMap<GateId, usize>) -> Result<Vec<u32>> {
    // Iterative DFS with colouring: 0 unvisited, 1 on stack, 2 done.
    let mut layer = vec![0u32; gates.len()];
    let mut state = vec![0u8; gates.len()];
    for start in 0..gates.len() {
        if state[start] == 2 {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        state[start] = 1;
        while let Some(&mut (k, ref mut next)) = stack.last_mut() {
            if let Some(&src) = gates[k].inputs.get(*next) {
                *next += 1;
                let s = index[&src];
                match state[s] {
                    0 => {
                        state[s] = 1;
                        stack.push((s, 0));
                    }
                    1 => return Err(CircuitError::Cycle(gates[s].id)),
                    _ => {}
                }
            } else {
                layer[k] = gates[k]
                    .inputs
                    .iter()
                    .map(|s| layer[index[s]] + 1)
                    .max()
                    .unwrap_or(0);
                state[k] = 2;
                stack.pop();
            }
        }
    }
    for (k, g) in gates.iter().enumerate() {
        if layer[k] == 0 && !matches!(g.kind, GateKind::Input) {
            return Err(CircuitError::BadGate {
                gate: g.id,
                reason: "only INPUT gates may sit in layer 0".into(),
            });
        }
        if layer[k] != 0 && matches!(g.kind, GateKind::Input) {
            unreachable!("input gates have no sources");
        }
    }
    Ok(layer)
}

/// Recomputes layers from scratch and returns depth, width and max fan.
pub fn validate(c: &LayeredCircuit) -> Result<CircuitReport> {
    let fresh = LayeredCircuit::new(c.gates.clone())?;
    for g in &c.gates {
        let (declared, computed) = (c.layer_of(g.id), fresh.layer_of(g.id));
        if declared != computed {
            return Err(CircuitError::LayerMismatch {
                gate: g.id,
                declared,
                computed,
            });
        }
    }
    Ok(fresh.report())
}

/// Output bits in OUTPUT-gate id order.
pub fn eval_reference(c: &LayeredCircuit, inputs: &[bool]) -> Result<Vec<bool>> {
    let values = c.eval_all(inputs)?;
    Ok(c.output_gates().map(|g| values[&g.id]).collect())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CircuitFile {
    version: u32,
    gates: Vec<GateRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GateRecord {
    id: GateId,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table: Option<String>,
    #[serde(default)]
    inputs: Vec<GateId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    owner: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layer: Option<u32>,
}

impl From<&Gate> for GateRecord {
    fn from(g: &Gate) -> Self {
        let table = match &g.kind {
            GateKind::Lut(t) => {
                let mut bytes = vec![0u8; t.len().div_ceil(8)];
                for (k, &b) in t.iter().enumerate() {
                    bytes[k / 8] |= u8::from(b) << (k % 8);
                }
                Some(hex::encode(bytes))
            }
            _ => None,
        };
        Self {
            id: g.id,
            kind: g.kind.name().to_string(),
            table,
            inputs: g.inputs.clone(),
            owner: g.owner,
            layer: None,
        }
    }
}

impl TryFrom<GateRecord> for Gate {
    type Error = CircuitError;

    fn try_from(r: GateRecord) -> Result<Self> {
        let bad = |reason: String| CircuitError::BadGate { gate: r.id, reason };
        let kind = match r.kind.as_str() {
            "INPUT" => GateKind::Input,
            "OUTPUT" => GateKind::Output,
            "AND" => GateKind::And,
            "OR" => GateKind::Or,
            "XOR" => GateKind::Xor,
            "NOT" => GateKind::Not,
            "MAJ" => GateKind::Maj,
            "ID" => GateKind::Id,
            "LUT" => {
                let fan_in = r.inputs.len();
                if fan_in > MAX_LUT_FAN_IN {
                    return Err(bad(format!("LUT fan-in {fan_in} exceeds {MAX_LUT_FAN_IN}")));
                }
                let hex_table = r.table.as_deref().ok_or_else(|| bad("LUT needs a table".into()))?;
                let bytes = hex::decode(hex_table).map_err(|e| bad(format!("table: {e}")))?;
                let entries = 1usize << fan_in;
                if bytes.len() != entries.div_ceil(8) {
                    return Err(bad(format!(
                        "table has {} bytes, fan-in {fan_in} needs {}",
                        bytes.len(),
                        entries.div_ceil(8)
                    )));
                }
                let bit = |k: usize| bytes[k / 8] >> (k % 8) & 1 == 1;
                if (entries..bytes.len() * 8).any(bit) {
                    return Err(bad("table sets bits beyond 2^fan_in entries".into()));
                }
                GateKind::Lut((0..entries).map(bit).collect())
            }
            other => return Err(bad(format!("unknown kind {other:?}"))),
        };
        if r.table.is_some() && !matches!(kind, GateKind::Lut(_)) {
            return Err(bad("only LUT gates carry a table".into()));
        }
        Ok(Gate {
            id: r.id,
            kind,
            inputs: r.inputs,
            owner: r.owner,
        })
    }
}

/// Balanced XOR tree over `n_inputs` bits with one OUTPUT gate. Input `k` is
/// owned by node `k`.
pub fn gen_parity_tree(n_inputs: usize) -> Result<LayeredCircuit> {
    if n_inputs == 0 {
        return Err(CircuitError::Infeasible("parity of zero inputs".into()));
    }
    let mut gates: Vec<Gate> = (0..n_inputs).map(|k| Gate::input(k as GateId, k)).collect();
    let mut frontier: Vec<GateId> = (0..n_inputs as GateId).collect();
    let mut next = n_inputs as GateId;
    while frontier.len() > 1 {
        let mut level = Vec::new();
        for pair in frontier.chunks(2) {
            if pair.len() == 2 {
                gates.push(Gate::new(next, GateKind::Xor, pair.to_vec()));
                level.push(next);
                next += 1;
            } else {
                level.push(pair[0]);
            }
        }
        frontier = level;
    }
    gates.push(Gate::new(next, GateKind::Output, vec![frontier[0]]));
    LayeredCircuit::new(gates)
}

/// Random strictly layered circuit of the given depth whose layers
/// `0..depth-1` each emit exactly `width` wires, with every total fan at most
/// `max_fan`. Internal gates are random LUTs of fan-in 1 to 3; the last layer
/// is one OUTPUT per gate of layer `depth - 1`.
pub fn gen_random_layered(
    depth: u32,
    width: usize,
    max_fan: usize,
    seed: u64,
) -> Result<LayeredCircuit> {
    let infeasible = |why: &str| Err(CircuitError::Infeasible(why.to_string()));
    if depth == 0 || width == 0 || max_fan == 0 {
        return infeasible("depth, width and max_fan must be positive");
    }
    if width < max_fan {
        return infeasible("width must be at least max_fan");
    }
    if depth > 1 && max_fan < 2 {
        return infeasible("internal gates need max_fan >= 2");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_inputs = width.div_ceil((max_fan / 2).max(1));
    let mut gates: Vec<Gate> = (0..n_inputs).map(|k| Gate::input(k as GateId, k)).collect();
    let mut next = n_inputs as GateId;
    // (gate, remaining fan-out capacity) of the previous layer
    let mut sources: Vec<(GateId, usize)> = (0..n_inputs as GateId).map(|g| (g, max_fan)).collect();
    let kmax = 3.min(max_fan.saturating_sub(1)).max(1);

    for layer in 1..depth {
        let is_last_internal = layer + 1 == depth;
        // Gate count g must fit `width` fan-ins of at most kmax each and leave
        // g * max_fan - width spare fan-out for the next layer.
        let lo = if is_last_internal {
            width.div_ceil(max_fan - 1)
        } else {
            (2 * width).div_ceil(max_fan)
        }
        .max(width.div_ceil(kmax));
        if lo > width {
            return infeasible("cannot route the next layer within max_fan");
        }
        let g = rng.gen_range(lo..=width);
        let mut fan_ins = vec![1usize; g];
        let mut open: Vec<usize> = (0..g).collect();
        for _ in g..width {
            let pick = rng.gen_range(0..open.len());
            fan_ins[open[pick]] += 1;
            if fan_ins[open[pick]] == kmax {
                open.swap_remove(pick);
            }
        }
        let ids: Vec<GateId> = (0..fan_ins.len() as GateId).map(|k| next + k).collect();
        next += ids.len() as GateId;
        let slots = route(&mut rng, &sources, width)?;
        let mut slot = slots.into_iter();
        for (&id, &k) in ids.iter().zip(&fan_ins) {
            let inputs: Vec<GateId> = slot.by_ref().take(k).collect();
            let table = (0..1usize << k).map(|_| rng.gen_bool(0.5)).collect();
            gates.push(Gate::new(id, GateKind::Lut(table), inputs));
        }
        sources = ids.iter().zip(&fan_ins).map(|(&g, &k)| (g, max_fan - k)).collect();
    }

    let outputs = if depth == 1 { width } else { sources.len() };
    for src in route(&mut rng, &sources, outputs)? {
        gates.push(Gate::new(next, GateKind::Output, vec![src]));
        next += 1;
    }
    LayeredCircuit::new(gates)
}

// Picks `total` consumer slots over `sources` such that every source is used
// at least once and at most its capacity, then shuffles them.
fn route(rng: &mut ChaCha8Rng, sources: &[(GateId, usize)], total: usize) -> Result<Vec<GateId>> {
    let capacity: usize = sources.iter().map(|s| s.1).sum();
    if total < sources.len() || total > capacity {
        return Err(CircuitError::Infeasible(format!(
            "{} sources with capacity {capacity} cannot emit {total} wires",
            sources.len()
        )));
    }
    let mut slots: Vec<GateId> = sources.iter().map(|s| s.0).collect();
    let mut spare: Vec<GateId> = sources
        .iter()
        .flat_map(|&(g, cap)| std::iter::repeat_n(g, cap - 1))
        .collect();
    spare.shuffle(rng);
    slots.extend(spare.into_iter().take(total - sources.len()));
    slots.shuffle(rng);
    Ok(slots)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The example circuit with four inputs, two gates in layer 1 and one in
    /// layer 2.
    fn fig1() -> LayeredCircuit {
        let (in1, in2, in3, in4, g1, g2, g3, out1, out2) = (1, 2, 3, 4, 5, 6, 7, 8, 9);
        LayeredCircuit::new(vec![
            Gate::input(in1, 0),
            Gate::input(in2, 1),
            Gate::input(in3, 2),
            Gate::input(in4, 3),
            Gate::new(g1, GateKind::Id, vec![in1]),
            Gate::new(g2, GateKind::And, vec![in1, in2, in3, in4]),
            Gate::new(g3, GateKind::Xor, vec![g1, g2, in2]),
            Gate::new(out1, GateKind::Output, vec![g1]),
            Gate::new(out2, GateKind::Output, vec![g3]),
        ])
        .unwrap()
    }

    #[test]
    fn fig1_metrics() {
        let c = fig1();
        let rep = validate(&c).unwrap();
        assert_eq!(rep, CircuitReport { depth: 3, width: 6, max_fan: 5 });
        assert_eq!(c.fan(6), 5);
        assert_eq!(c.fan(1), 2);
        assert_eq!(c.gates_in_layer(1), &[5, 6]);
        assert_eq!(c.gates_in_layer(2), &[7, 8]);
        assert_eq!(c.wires_of_layer(0).len(), 6);
        assert_eq!(c.wires_of_layer(1).len(), 3);
    }

    #[test]
    fn single_pair() {
        let c = LayeredCircuit::new(vec![Gate::input(0, 0), Gate::new(1, GateKind::Output, vec![0])])
            .unwrap();
        assert_eq!(c.report(), CircuitReport { depth: 1, width: 1, max_fan: 1 });
        assert_eq!(eval_reference(&c, &[true]).unwrap(), vec![true]);
    }

    #[test]
    fn rejects_bad_structure() {
        let self_loop = vec![Gate::input(0, 0), Gate::new(1, GateKind::Xor, vec![0, 1])];
        assert!(matches!(LayeredCircuit::new(self_loop), Err(CircuitError::Cycle(1))));
        let cycle = vec![
            Gate::input(0, 0),
            Gate::new(1, GateKind::Xor, vec![0, 2]),
            Gate::new(2, GateKind::Id, vec![1]),
        ];
        assert!(matches!(LayeredCircuit::new(cycle), Err(CircuitError::Cycle(_))));
        let dangling = vec![Gate::input(0, 0), Gate::new(1, GateKind::Output, vec![7])];
        assert!(matches!(
            LayeredCircuit::new(dangling),
            Err(CircuitError::DanglingWire { gate: 1, missing: 7 })
        ));
        let dup = vec![Gate::input(0, 0), Gate::input(0, 1)];
        assert!(matches!(LayeredCircuit::new(dup), Err(CircuitError::DuplicateGate(0))));
        let feeding_output = vec![
            Gate::input(0, 0),
            Gate::new(1, GateKind::Output, vec![0]),
            Gate::new(2, GateKind::Output, vec![1]),
        ];
        assert!(LayeredCircuit::new(feeding_output).is_err());
        let no_owner = vec![Gate::new(0, GateKind::Input, vec![])];
        assert!(LayeredCircuit::new(no_owner).is_err());
        let bad_lut = vec![Gate::input(0, 0), Gate::new(1, GateKind::Lut(vec![true; 3]), vec![0])];
        assert!(LayeredCircuit::new(bad_lut).is_err());
    }

    #[test]
    fn parity_examples() {
        let c = gen_parity_tree(8).unwrap();
        let xors = c.gates().iter().filter(|g| g.kind == GateKind::Xor).count();
        assert_eq!(xors, 7);
        // three XOR levels plus the OUTPUT gate
        assert_eq!(c.depth(), 4);
        let bits: Vec<bool> = "10110010".chars().map(|ch| ch == '1').collect();
        let ones = bits.iter().filter(|&&b| b).count();
        assert_eq!(eval_reference(&c, &bits).unwrap(), vec![ones % 2 == 1]);
        assert_eq!(eval_reference(&c, &bits).unwrap(), vec![false]);
    }

    #[test]
    fn and_tree_and_identity_chain() {
        let and = LayeredCircuit::new(vec![
            Gate::input(0, 0),
            Gate::input(1, 1),
            Gate::input(2, 2),
            Gate::new(3, GateKind::And, vec![0, 1]),
            Gate::new(4, GateKind::And, vec![3, 2]),
            Gate::new(5, GateKind::Output, vec![4]),
        ])
        .unwrap();
        assert_eq!(eval_reference(&and, &[false; 3]).unwrap(), vec![false]);
        let chain = LayeredCircuit::new(vec![
            Gate::input(0, 0),
            Gate::new(1, GateKind::Id, vec![0]),
            Gate::new(2, GateKind::Id, vec![1]),
            Gate::new(3, GateKind::Output, vec![2]),
        ])
        .unwrap();
        for b in [false, true] {
            assert_eq!(eval_reference(&chain, &[b]).unwrap(), vec![b]);
        }
        assert!(matches!(
            eval_reference(&chain, &[]),
            Err(CircuitError::InputCount { expected: 1, got: 0 })
        ));
    }

    #[test]
    fn builtin_semantics() {
        assert!(GateKind::Maj.apply(&[true, true, false]));
        assert!(!GateKind::Maj.apply(&[true, false, false]));
        assert!(GateKind::Not.apply(&[false]));
        assert!(GateKind::Or.apply(&[false, true]));
        // table entry 0b10 = port 1 set, port 0 clear
        let lut = GateKind::Lut(vec![false, false, true, false]);
        assert!(lut.apply(&[false, true]));
        assert!(!lut.apply(&[true, false]));
    }

    #[test]
    fn json_roundtrip_and_rejections() {
        let c = fig1();
        let back = LayeredCircuit::from_json(&c.to_json()).unwrap();
        assert_eq!(back.gates(), c.gates());
        let lut = LayeredCircuit::new(vec![
            Gate::input(0, 0),
            Gate::input(1, 0),
            Gate::new(2, GateKind::Lut(vec![false, true, true, false]), vec![0, 1]),
            Gate::new(3, GateKind::Output, vec![2]),
        ])
        .unwrap();
        let text = lut.to_json();
        assert!(text.contains("\"06\""));
        assert_eq!(LayeredCircuit::from_json(&text).unwrap().gates(), lut.gates());

        let unknown = r#"{"version":1,"gates":[],"extra":0}"#;
        assert!(matches!(LayeredCircuit::from_json(unknown), Err(CircuitError::Parse(_))));
        let v2 = r#"{"version":2,"gates":[]}"#;
        assert!(matches!(LayeredCircuit::from_json(v2), Err(CircuitError::Version(2))));
        let wrong_layer = r#"{"version":1,"gates":[
            {"id":0,"kind":"INPUT","owner":0},
            {"id":1,"kind":"OUTPUT","inputs":[0],"layer":2}]}"#;
        assert!(matches!(
            LayeredCircuit::from_json(wrong_layer),
            Err(CircuitError::LayerMismatch { gate: 1, declared: 2, computed: 1 })
        ));
        let high_bits = r#"{"version":1,"gates":[
            {"id":0,"kind":"INPUT","owner":0},
            {"id":1,"kind":"LUT","table":"f2","inputs":[0]},
            {"id":2,"kind":"OUTPUT","inputs":[1]}]}"#;
        assert!(LayeredCircuit::from_json(high_bits).is_err());
    }

    #[test]
    fn random_generator_shape() {
        let c = gen_random_layered(4, 40, 6, 7).unwrap();
        let rep = validate(&c).unwrap();
        assert_eq!(rep.depth, 4);
        assert_eq!(rep.width, 40);
        assert!(rep.max_fan <= 6);
        for i in 0..3 {
            assert_eq!(c.wires_of_layer(i).len(), 40);
        }
        let again = gen_random_layered(4, 40, 6, 7).unwrap();
        assert_eq!(c.gates(), again.gates());
        assert_ne!(c.gates(), gen_random_layered(4, 40, 6, 8).unwrap().gates());
    }

    #[test]
    fn random_generator_rejects_infeasible() {
        assert!(gen_random_layered(0, 4, 2, 0).is_err());
        assert!(gen_random_layered(3, 2, 4, 0).is_err());
        assert!(gen_random_layered(3, 4, 1, 0).is_err());
        let flat = gen_random_layered(1, 5, 2, 3).unwrap();
        assert_eq!(flat.depth(), 1);
        assert_eq!(flat.width(), 5);
    }
}
