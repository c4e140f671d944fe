//! Crash-resilient evaluation of a layered circuit on the clique.
//!
//! Inputs are encoded and spread over all nodes, then the circuit is computed
//! layer by layer: gates are handed to alive nodes, the nodes fetch the wire
//! values they need through local decoding, evaluate, and store the results
//! encoded again. Too many crashes within one repetition restart the layer.

pub mod allocate;
pub mod constants;
pub mod engine;
pub mod registry;

use std::collections::BTreeMap;
use std::str::FromStr;

use num_rational::Ratio;
use serde::Serialize;
use thiserror::Error;

use crate::circuit::{CircuitError, CircuitReport, GateId, LayeredCircuit};
use crate::derand::{good_strings, search_seed, DerandError, SeedContext};
use crate::netsim::{
    Adversary, ClusterState, NodeId, GreedyQueryKiller, LayerSpiker, NoAdversary, RandomAdversary, ScriptedAdversary,
    SimError, Simulator, StorerKiller, Trace, TraceEvent,
};
use crate::rmldc::{make_params, LdcError, ReedMullerCode};

pub use allocate::{allocate, Allocation};
pub use constants::{Overrides, RunConstants};
pub use engine::Engine;
pub use registry::{WireLocation, WireRegistry};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ldc(#[from] LdcError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Derand(#[from] DerandError),
    #[error("aborted: {0}")]
    Sim(#[from] SimError),
    #[error("output extraction: {0}")]
    Extract(String),
}

/// A run-time check that failed without stopping the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub round: u64,
    pub kind: &'static str,
    pub detail: String,
}

impl Violation {
    pub fn new(round: u64, kind: &'static str, detail: String) -> Self {
        Self { round, kind, detail }
    }
}

/// Which crash adversary to run against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum AdversaryKind {
    None,
    Random,
    Greedy,
    StorerKiller,
    LayerSpiker,
    /// Replays the CRASH events of a trace.
    Scripted(Vec<TraceEvent>),
}

impl AdversaryKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Random => "random",
            Self::Greedy => "greedy",
            Self::StorerKiller => "storer-killer",
            Self::LayerSpiker => "layer-spiker",
            Self::Scripted(_) => "scripted",
        }
    }

    pub fn build(&self, seed: u64) -> Box<dyn Adversary + Send> {
        match self {
            Self::None => Box::new(NoAdversary),
            Self::Random => Box::new(RandomAdversary::new(seed, RandomAdversary::DEFAULT_RATE)),
            Self::Greedy => Box::new(GreedyQueryKiller),
            Self::StorerKiller => Box::new(StorerKiller),
            Self::LayerSpiker => Box::new(LayerSpiker),
            Self::Scripted(events) => Box::new(ScriptedAdversary::from_trace(events)),
        }
    }
}

impl FromStr for AdversaryKind {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "none" => Self::None,
            "random" => Self::Random,
            "greedy" | "greedy_query_killer" => Self::Greedy,
            "storer-killer" | "storer_killer" => Self::StorerKiller,
            "layer-spiker" | "layer_spiker" => Self::LayerSpiker,
            _ => return Err(ProtocolError::Config(format!("unknown adversary {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSetup {
    pub q: u32,
    pub r: usize,
    pub delta: Ratio<u64>,
    pub alpha: Ratio<u64>,
    /// Bandwidth multiplier: `b * ceil(log2 n)` bits per pair and round.
    pub b: u32,
    pub overrides: Overrides,
    /// Keep one trace event per message.
    pub verbose_trace: bool,
}

impl RunSetup {
    pub fn new(q: u32, r: usize) -> Self {
        Self {
            q,
            r,
            delta: Ratio::new(1, 2),
            alpha: Ratio::new(1, 4),
            b: 2,
            overrides: Overrides::default(),
            verbose_trace: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub outputs: Vec<bool>,
    pub expected: Vec<bool>,
    pub correct: bool,
    pub total_rounds: u64,
    pub restarts: u32,
    pub crashes: usize,
    pub crash_budget: usize,
    pub restart_limit: u32,
    pub max_per_node_queries: usize,
    /// Rounds spent on each layer, restarts included.
    pub layer_rounds: Vec<u64>,
    /// Rounds up to and including the input store.
    pub init_rounds: u64,
    pub violations: Vec<Violation>,
    pub constants: RunConstants,
    pub circuit: CircuitReport,
    #[serde(skip)]
    pub trace: Trace,
}

impl RunReport {
    pub fn within_round_bound(&self) -> bool {
        self.total_rounds
            <= self.init_rounds + self.constants.round_bound(self.circuit.depth, self.restarts)
    }
}

/// Builds the code and run constants for `circuit` under `setup`.
pub fn prepare(circuit: &LayeredCircuit, setup: &RunSetup) -> Result<(ReedMullerCode, RunConstants), ProtocolError> {
    let code = ReedMullerCode::new(make_params(setup.q, setup.r, setup.delta)?);
    let consts = RunConstants::new(&code, circuit.report(), setup.alpha, &setup.overrides)?;
    let n = code.params().n;
    if let Some(g) = circuit.input_gates().find(|g| g.owner.is_none_or(|o| o >= n)) {
        return Err(ProtocolError::Config(format!(
            "input gate {} has owner {:?}, need one of 0..{n}",
            g.id, g.owner
        )));
    }
    if setup.b == 0 {
        return Err(ProtocolError::Config("bandwidth multiplier must be positive".into()));
    }
    Ok((code, consts))
}

/// INPUT gates grouped by owner, ascending.
pub(crate) fn inputs_by_owner(circuit: &LayeredCircuit) -> BTreeMap<NodeId, Vec<GateId>> {
    let mut owned: BTreeMap<NodeId, Vec<GateId>> = BTreeMap::new();
    for g in circuit.input_gates() {
        owned.entry(g.owner.expect("INPUT gates have owners")).or_default().push(g.id);
    }
    owned
}

/// The registry after the input store: each owner stores the outgoing wires
/// of its INPUT gates in round 1.
pub fn init_inputs(circuit: &LayeredCircuit, code: &ReedMullerCode) -> WireRegistry {
    let mut reg = WireRegistry::new(code.params().k, code.params().bits_per_symbol());
    for (owner, gates) in inputs_by_owner(circuit) {
        let layout: Vec<_> = gates.iter().map(|&g| (g, circuit.out_wires(g).to_vec())).collect();
        reg.record(owner, 1, &layout);
    }
    reg
}

/// Runs the protocol on `circuit` with `inputs` (one bit per INPUT gate, by
/// ascending id) against `adversary`.
pub fn robust_compute(
    circuit: &LayeredCircuit,
    inputs: &[bool],
    setup: &RunSetup,
    adversary: Box<dyn Adversary>,
) -> Result<RunReport, ProtocolError> {
    let (code, consts) = prepare(circuit, setup)?;
    let expected = crate::circuit::eval_reference(circuit, inputs)?;
    let engine = Engine::new(circuit, &code, &consts, inputs.to_vec(), setup.verbose_trace)?;
    let cluster = ClusterState::new(consts.n, setup.alpha, setup.b);
    let crash_budget = cluster.budget();
    let mut sim = Simulator::new(cluster, engine, adversary, Trace::new(setup.verbose_trace));

    let input_fan: usize = circuit.input_gates().map(|g| circuit.fan(g.id)).sum();
    let guard = 2 * consts.round_bound(circuit.depth(), consts.restart_limit) + input_fan as u64 + 16;
    while sim.protocol().in_init() {
        sim.step()?;
    }
    let init_rounds = sim.cluster().round();
    let total_rounds = sim.run(guard)?;

    let outputs = extract_outputs(circuit, &code, &consts, sim.cluster(), sim.protocol())?;
    let (cluster, engine, trace) = sim.into_parts();
    Ok(RunReport {
        correct: outputs == expected,
        outputs,
        expected,
        total_rounds,
        restarts: engine.restarts(),
        crashes: cluster.total_crashes(),
        crash_budget,
        restart_limit: consts.restart_limit,
        max_per_node_queries: engine.max_per_node_queries(),
        layer_rounds: engine.layer_rounds().to_vec(),
        init_rounds,
        violations: engine.violations().to_vec(),
        circuit: circuit.report(),
        constants: consts,
        trace,
    })
}

/// Reads every OUTPUT gate's value back out of the surviving nodes by
/// locally decoding its input wire.
pub fn extract_outputs(
    circuit: &LayeredCircuit,
    code: &ReedMullerCode,
    consts: &RunConstants,
    cluster: &ClusterState,
    engine: &Engine<'_>,
) -> Result<Vec<bool>, ProtocolError> {
    let registry = engine.registry();
    let mask = cluster.crashed_mask();
    let crashed = cluster.crashed_ids();
    let mut outs: Vec<GateId> = circuit.output_gates().map(|g| g.id).collect();
    outs.sort_unstable();
    let wires: Vec<_> = outs.iter().map(|&g| circuit.in_wires(g)[0]).collect();
    let seed = search_seed(&SeedContext {
        round: cluster.round(),
        layer: circuit.depth() + 1,
        rep: 1,
        l1: 0,
        l2: 0,
        node: 0,
        crashed: &crashed,
    });
    let set = good_strings(code, &mask, &wires, 0, registry, consts.alpha, &consts.derand, seed)?;
    set.strings
        .iter()
        .map(|gs| {
            let (key, pos) = registry
                .resolve(gs.wire)
                .ok_or_else(|| ProtocolError::Extract(format!("{:?} was never stored", gs.wire)))?;
            let responses: Vec<_> = gs
                .plan
                .queries
                .iter()
                .map(|&t| {
                    if cluster.is_alive(t) {
                        engine.stored_symbol(t, &key)
                    } else {
                        None
                    }
                })
                .collect();
            let sym = code
                .local_decode(&gs.plan, &responses)?
                .ok_or_else(|| ProtocolError::Extract(format!("{:?} could not be decoded", gs.wire)))?;
            Ok(registry::symbol_bit(sym, pos.bit, consts.payload_bits))
        })
        .collect()
}
