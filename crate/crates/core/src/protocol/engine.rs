//! Round-by-round execution of the layered computation.
//!
//! Every alive node keeps its own symbol storage, its own copy of the wire
//! registry and the responses it received. Pure functions that every node
//! evaluates identically (allocation, line choice, the response schedule) are
//! computed once and shared, which is what the nodes would get by each
//! running them locally.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::{debug, warn};

use super::allocate::allocate;
use super::constants::RunConstants;
use super::registry::{pack_chunks, symbol_bit, CodewordKey, WireRegistry};
use super::Violation;
use crate::circuit::{GateId, LayeredCircuit, WireId};
use crate::derand::{good_strings, search_seed, SeedContext};
use crate::gfield::FieldElement;
use crate::netsim::{AdversaryView, ClusterState, Event, NodeId, Phase, Protocol, RoundCtx, SimError};
use crate::rmldc::{Codeword, Message, ReedMullerCode};

#[derive(Debug, Clone)]
pub enum Msg {
    Store {
        key: CodewordKey,
        value: FieldElement,
    },
    /// Reply to query `query` of retrieval attempt `string` of the recipient.
    Response {
        string: u32,
        query: u32,
        value: FieldElement,
    },
}

#[derive(Debug, Default)]
struct NodeState {
    storage: HashMap<CodewordKey, FieldElement>,
    registry: WireRegistry,
    digest: u64,
    responses: HashMap<(u32, u32), FieldElement>,
}

/// One node's store within a store phase.
#[derive(Debug)]
struct StoreJob {
    node: NodeId,
    gates: Vec<(GateId, Vec<WireId>)>,
    codewords: Vec<Vec<FieldElement>>,
}

#[derive(Debug, Clone, Copy)]
struct Job {
    target: NodeId,
    requester: NodeId,
    string: u32,
    query: u32,
    key: CodewordKey,
}

#[derive(Debug)]
struct Attempt {
    wire: WireId,
    bit: usize,
    plan: crate::rmldc::QueryPlan,
    /// Per query: `None` if erased at planning, else the response round.
    arrival: Vec<Option<u64>>,
}

#[derive(Debug)]
struct RequesterPlan {
    node: NodeId,
    wires: usize,
    attempts: Vec<Attempt>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    NotStarted,
    Init { start: u64, len: u64 },
    Retrieve { start: u64 },
    Store { start: u64 },
    Finished,
}

#[derive(Debug, Clone, Copy)]
struct Cursor {
    layer: u32,
    rep: u32,
    l1: u32,
    l2: u32,
}

pub struct Engine<'a> {
    circuit: &'a LayeredCircuit,
    code: &'a ReedMullerCode,
    consts: &'a RunConstants,
    reference: BTreeMap<GateId, bool>,
    inputs: Vec<bool>,
    verbose: bool,

    stage: Stage,
    cursor: Cursor,
    nodes: Vec<NodeState>,
    public: WireRegistry,
    stored_in_layer: BTreeSet<GateId>,

    assigned: Vec<Vec<GateId>>,
    pending: Vec<Vec<WireId>>,
    retrieved: Vec<BTreeMap<WireId, bool>>,
    stored_this_step: Vec<bool>,

    plans: Vec<RequesterPlan>,
    jobs: Vec<Vec<Job>>,
    pending_queries: Vec<usize>,
    stores: Vec<StoreJob>,
    storers: Vec<NodeId>,

    last_reset: u64,
    last_round: u64,
    layer_start: u64,
    crashes_this_rep: usize,
    restarts: u32,
    max_per_node_queries: usize,
    layer_rounds: Vec<u64>,
    violations: Vec<Violation>,
    rep_violations: Vec<Violation>,
    digest_mismatch_rounds: u64,
}

fn proto_err(round: u64, reason: impl Into<String>) -> SimError {
    SimError::Protocol {
        round,
        reason: reason.into(),
    }
}

impl<'a> Engine<'a> {
    pub fn new(
        circuit: &'a LayeredCircuit,
        code: &'a ReedMullerCode,
        consts: &'a RunConstants,
        inputs: Vec<bool>,
        verbose: bool,
    ) -> Result<Self, crate::circuit::CircuitError> {
        let reference = circuit.eval_all(&inputs)?;
        let n = consts.n;
        let registry = WireRegistry::new(code.params().k, consts.payload_bits);
        Ok(Self {
            circuit,
            code,
            consts,
            reference,
            inputs,
            verbose,
            stage: Stage::NotStarted,
            cursor: Cursor {
                layer: 1,
                rep: 1,
                l1: 1,
                l2: 1,
            },
            nodes: (0..n)
                .map(|_| NodeState {
                    registry: registry.clone(),
                    digest: registry.digest(),
                    ..NodeState::default()
                })
                .collect(),
            public: registry,
            stored_in_layer: BTreeSet::new(),
            assigned: vec![Vec::new(); n],
            pending: vec![Vec::new(); n],
            retrieved: vec![BTreeMap::new(); n],
            stored_this_step: vec![false; n],
            plans: Vec::new(),
            jobs: Vec::new(),
            pending_queries: vec![0; n],
            stores: Vec::new(),
            storers: Vec::new(),
            last_reset: 0,
            last_round: 0,
            layer_start: 0,
            crashes_this_rep: 0,
            restarts: 0,
            max_per_node_queries: 0,
            layer_rounds: Vec::new(),
            violations: Vec::new(),
            rep_violations: Vec::new(),
            digest_mismatch_rounds: 0,
        })
    }

    pub fn registry(&self) -> &WireRegistry {
        &self.public
    }

    pub fn restarts(&self) -> u32 {
        self.restarts
    }

    pub fn max_per_node_queries(&self) -> usize {
        self.max_per_node_queries
    }

    pub fn layer_rounds(&self) -> &[u64] {
        &self.layer_rounds
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    /// The symbol node `t` holds for codeword `key`, if any.
    pub fn stored_symbol(&self, t: NodeId, key: &CodewordKey) -> Option<FieldElement> {
        self.nodes[t].storage.get(key).copied()
    }

    pub fn in_init(&self) -> bool {
        matches!(self.stage, Stage::NotStarted | Stage::Init { .. })
    }

    fn deliver(&mut self, ctx: &RoundCtx<'_, Msg>) {
        for (t, inbox) in ctx.inbox.iter().enumerate() {
            for env in inbox {
                match env.payload {
                    Msg::Store { key, value } => {
                        self.nodes[t].storage.insert(key, value);
                    }
                    Msg::Response { string, query, value } => {
                        self.nodes[t].responses.insert((string, query), value);
                    }
                }
            }
        }
    }

    // ---- store ---------------------------------------------------------

    fn build_store(&self, node: NodeId, gates: &[GateId], values: &BTreeMap<GateId, bool>) -> StoreJob {
        let mut layout = Vec::with_capacity(gates.len());
        let mut data = Vec::new();
        for &g in gates {
            let wires = self.circuit.out_wires(g).to_vec();
            data.extend(std::iter::repeat_n(values[&g], wires.len()));
            layout.push((g, wires));
        }
        let p = self.code.params();
        let codewords = pack_chunks(&data, p.k, self.consts.payload_bits, p.q)
            .into_iter()
            .map(|m| {
                self.code
                    .encode(&Message(m))
                    .expect("chunk has K symbols")
                    .0
                    .into_iter()
                    .map(|s| s.expect("fresh codeword"))
                    .collect()
            })
            .collect();
        StoreJob {
            node,
            gates: layout,
            codewords,
        }
    }

    fn send_store_chunk(&mut self, ctx: &mut RoundCtx<'_, Msg>, start: u64, chunk: usize) -> Result<(), SimError> {
        for job in &self.stores {
            if !ctx.cluster.is_alive(job.node) {
                continue;
            }
            let Some(cw) = job.codewords.get(chunk) else {
                continue;
            };
            let key = CodewordKey {
                storer: job.node,
                round: start,
                chunk: chunk as u32,
            };
            for (t, &value) in cw.iter().enumerate() {
                if !ctx.cluster.is_alive(t) {
                    continue;
                }
                if self.verbose {
                    ctx.trace.push(
                        ctx.round(),
                        Event::StoreSymbol {
                            from: job.node,
                            to: t,
                            chunk: chunk as u32,
                            value: value.value(),
                        },
                    );
                }
                ctx.send(job.node, t, self.consts.symbol_bits, Msg::Store { key, value })?;
            }
        }
        Ok(())
    }

    /// Registers every store whose node survived the phase.
    fn finish_store(&mut self, ctx: &mut RoundCtx<'_, Msg>, start: u64) {
        let round = ctx.round();
        let stores = std::mem::take(&mut self.stores);
        let mut successes = Vec::new();
        for job in &stores {
            let ok = ctx.cluster.is_alive(job.node);
            ctx.trace.push(
                round,
                Event::Store {
                    node: job.node,
                    layer: if self.in_init() { 0 } else { self.cursor.layer },
                    gates: job.gates.len(),
                    chunks: job.codewords.len(),
                    ok,
                },
            );
            if ok {
                successes.push(job);
            }
        }
        for job in &successes {
            self.public.record(job.node, start, &job.gates);
            for (g, _) in &job.gates {
                self.stored_in_layer.insert(*g);
            }
        }
        // Each alive node applies the same public update to its own copy.
        for t in ctx.cluster.alive() {
            let node = &mut self.nodes[t];
            for job in &successes {
                node.registry.record(job.node, start, &job.gates);
            }
            node.digest = node.registry.digest();
        }
        self.storers.clear();
    }

    fn begin_init(&mut self, ctx: &mut RoundCtx<'_, Msg>) -> Result<(), SimError> {
        let start = ctx.round();
        self.stores = super::inputs_by_owner(self.circuit)
            .iter()
            .map(|(&v, gates)| self.build_store(v, gates, &self.reference))
            .collect();
        let len = self.stores.iter().map(|s| s.codewords.len()).max().unwrap_or(0).max(1) as u64;
        self.storers = self.stores.iter().map(|s| s.node).collect();
        self.stage = Stage::Init { start, len };
        self.send_store_chunk(ctx, start, 0)
    }

    fn begin_store(&mut self, ctx: &mut RoundCtx<'_, Msg>) -> Result<(), SimError> {
        let start = ctx.round();
        let mut stores = Vec::new();
        for v in ctx.cluster.alive() {
            if self.assigned[v].is_empty() || !self.pending[v].is_empty() || self.stored_this_step[v] {
                continue;
            }
            let mut values = BTreeMap::new();
            for &g in &self.assigned[v] {
                let gate = self.circuit.gate(g);
                let bits: Vec<bool> = self
                    .circuit
                    .in_wires(g)
                    .iter()
                    .map(|w| self.retrieved[v][w])
                    .collect();
                let value = gate.kind.apply(&bits);
                if value != self.reference[&g] {
                    self.violations.push(Violation::new(start, "gate-value", format!("node {v} computed gate {g} wrong")));
                }
                values.insert(g, value);
            }
            let job = self.build_store(v, &self.assigned[v], &values);
            if job.codewords.len() as u64 > self.consts.max_store_time {
                return Err(proto_err(
                    start,
                    format!(
                        "node {v} needs {} store rounds, maxStoreTime is {}",
                        job.codewords.len(),
                        self.consts.max_store_time
                    ),
                ));
            }
            self.stored_this_step[v] = true;
            stores.push(job);
        }
        self.storers = stores.iter().map(|s| s.node).collect();
        self.stores = stores;
        self.stage = Stage::Store { start };
        self.send_store_chunk(ctx, start, 0)
    }

    // ---- retrieve ------------------------------------------------------

    fn begin_step(&mut self, cluster: &ClusterState, round: u64) {
        let layer = self.cursor.layer;
        let gates: Vec<(GateId, usize)> = self
            .circuit
            .gates_in_layer(layer)
            .iter()
            .filter(|g| !self.stored_in_layer.contains(g))
            .map(|&g| (g, self.circuit.fan(g)))
            .collect();
        let alive: Vec<NodeId> = cluster.alive().collect();
        let alloc = allocate(&gates, self.cursor.l1, &alive, self.consts.n).expect("some node is alive");
        for v in 0..self.consts.n {
            let load = alloc.loads[v];
            if num_rational::Ratio::from_integer(load as u64) > self.consts.lambda {
                self.rep_violations.push(Violation::new(
                    round,
                    "load",
                    format!("layer {layer} l1 {}: node {v} load {load} exceeds Lambda", self.cursor.l1),
                ));
            }
            self.pending[v] = alloc.assigned[v].iter().flat_map(|&g| self.circuit.in_wires(g)).collect();
            self.pending[v].sort_unstable();
            self.assigned[v] = alloc.assigned[v].clone();
            self.retrieved[v].clear();
            self.stored_this_step[v] = false;
        }
    }

    fn begin_retrieve(&mut self, ctx: &mut RoundCtx<'_, Msg>) -> Result<(), SimError> {
        let start = ctx.round();
        let c = self.cursor;
        let mask = ctx.cluster.crashed_mask();
        let crashed = ctx.cluster.crashed_ids();
        let max_ret = self.consts.max_ret_time;
        let mut queue_len: HashMap<(NodeId, NodeId), u64> = HashMap::new();
        let mut per_target = vec![0usize; self.consts.n];
        self.jobs = vec![Vec::new(); max_ret as usize];
        self.plans.clear();

        for v in ctx.cluster.alive().collect::<Vec<_>>() {
            if self.pending[v].is_empty() {
                continue;
            }
            if !self.consts.within_halving(self.pending[v].len(), c.l2) {
                self.rep_violations.push(Violation::new(
                    start,
                    "halving",
                    format!(
                        "layer {} l1 {} l2 {}: node {v} still needs {} wires",
                        c.layer,
                        c.l1,
                        c.l2,
                        self.pending[v].len()
                    ),
                ));
            }
            let seed = search_seed(&SeedContext {
                round: start,
                layer: c.layer,
                rep: c.rep,
                l1: c.l1,
                l2: c.l2,
                node: v,
                crashed: &crashed,
            });
            let set = good_strings(
                self.code,
                &mask,
                &self.pending[v],
                c.l2,
                &self.public,
                self.consts.alpha,
                &self.consts.derand,
                seed,
            )
            .map_err(|e| proto_err(start, format!("node {v}: {e}")))?;

            let mut attempts = Vec::with_capacity(set.strings.len());
            for (s, gs) in set.strings.iter().enumerate() {
                let (key, pos) = self.public.resolve(gs.wire).expect("resolved by good_strings");
                let mut arrival = Vec::with_capacity(gs.plan.queries.len());
                for (qi, &t) in gs.plan.queries.iter().enumerate() {
                    if mask[t] {
                        arrival.push(None);
                        continue;
                    }
                    let slot = queue_len.entry((t, v)).or_insert(0);
                    if *slot >= max_ret {
                        return Err(proto_err(
                            start,
                            format!("node {t} owes node {v} more than maxRetTime = {max_ret} responses"),
                        ));
                    }
                    self.jobs[*slot as usize].push(Job {
                        target: t,
                        requester: v,
                        string: s as u32,
                        query: qi as u32,
                        key,
                    });
                    arrival.push(Some(start + *slot + 1));
                    *slot += 1;
                    per_target[t] += 1;
                }
                attempts.push(Attempt {
                    wire: gs.wire,
                    bit: pos.bit,
                    plan: gs.plan.clone(),
                    arrival,
                });
            }
            self.plans.push(RequesterPlan {
                node: v,
                wires: self.pending[v].len(),
                attempts,
            });
        }
        self.max_per_node_queries = self.max_per_node_queries.max(per_target.iter().copied().max().unwrap_or(0));
        self.pending_queries = per_target;
        self.stage = Stage::Retrieve { start };
        self.send_responses(ctx, 0)
    }

    fn send_responses(&mut self, ctx: &mut RoundCtx<'_, Msg>, offset: u64) -> Result<(), SimError> {
        // A query stays pending until its response has been delivered.
        if let Some(prev) = offset.checked_sub(1).and_then(|o| self.jobs.get(o as usize)) {
            for job in prev {
                self.pending_queries[job.target] -= 1;
            }
        }
        let Some(jobs) = self.jobs.get(offset as usize) else {
            return Ok(());
        };
        for job in jobs {
            if !ctx.cluster.is_alive(job.target) {
                continue;
            }
            let value = self.nodes[job.target].storage.get(&job.key).copied().ok_or_else(|| {
                proto_err(ctx.round(), format!("node {} lacks a symbol of {:?}", job.target, job.key))
            })?;
            if self.verbose {
                ctx.trace.push(
                    ctx.round(),
                    Event::QueryResponse {
                        from: job.target,
                        to: job.requester,
                        value: value.value(),
                    },
                );
            }
            ctx.send(
                job.target,
                job.requester,
                self.consts.symbol_bits,
                Msg::Response {
                    string: job.string,
                    query: job.query,
                    value,
                },
            )?;
        }
        Ok(())
    }

    /// Decides every attempt once all responses are due.
    fn finish_retrieve(&mut self, ctx: &mut RoundCtx<'_, Msg>) {
        let round = ctx.round();
        let cluster = ctx.cluster;
        let bits = self.consts.payload_bits;
        let plans = std::mem::take(&mut self.plans);
        for rp in &plans {
            let v = rp.node;
            if !cluster.is_alive(v) {
                continue;
            }
            let responses = std::mem::take(&mut self.nodes[v].responses);
            let mut done = BTreeSet::new();
            let mut voided = 0;
            for (s, at) in rp.attempts.iter().enumerate() {
                // Any queried node that was alive at planning and crashes
                // before the attempt's last response arrives voids it.
                let completion = at.arrival.iter().flatten().copied().max().unwrap_or(0);
                let public_ok = at
                    .plan
                    .queries
                    .iter()
                    .zip(&at.arrival)
                    .all(|(&t, arr)| arr.is_none() || cluster.crash_round(t).is_none_or(|c| c > completion));
                let received: Vec<Option<FieldElement>> = (0..at.plan.queries.len())
                    .map(|qi| responses.get(&(s as u32, qi as u32)).copied())
                    .collect();
                let all_arrived = at.arrival.iter().zip(&received).all(|(a, r)| a.is_none() || r.is_some());
                if public_ok && !all_arrived {
                    self.violations.push(Violation::new(
                        round,
                        "retrieve-agreement",
                        format!("node {v} missed a response on attempt {s}"),
                    ));
                }
                if !public_ok {
                    voided += 1;
                    continue;
                }
                if done.contains(&at.wire) {
                    continue;
                }
                match self.code.local_decode(&at.plan, &received) {
                    Ok(Some(sym)) => {
                        let bit = symbol_bit(sym, at.bit, bits);
                        if bit != self.reference[&at.wire.src] {
                            self.violations.push(Violation::new(
                                round,
                                "wire-value",
                                format!("node {v} decoded {:?} wrong", at.wire),
                            ));
                        }
                        self.retrieved[v].insert(at.wire, bit);
                        done.insert(at.wire);
                    }
                    other => self.violations.push(Violation::new(
                        round,
                        "retrieve-agreement",
                        format!("node {v}: attempt at {:?} should decode, got {other:?}", at.wire),
                    )),
                }
            }
            self.pending[v].retain(|w| !done.contains(w));
            ctx.trace.push(
                round,
                Event::Retrieve {
                    node: v,
                    layer: self.cursor.layer,
                    wires: rp.wires,
                    retrieved: done.len(),
                    attempts: rp.attempts.len(),
                    voided,
                },
            );
        }
        for node in &mut self.nodes {
            node.responses.clear();
        }
        self.jobs.clear();
        self.pending_queries.iter_mut().for_each(|p| *p = 0);
    }

    // ---- loop control --------------------------------------------------

    /// Moves past a finished store phase; starts the next retrieve phase or
    /// finishes the run.
    fn advance(&mut self, ctx: &mut RoundCtx<'_, Msg>) -> Result<(), SimError> {
        let round = ctx.round();
        let f = ctx.cluster.crashes_since(self.last_reset);
        if f > self.consts.threshold {
            self.restarts += 1;
            if self.restarts > self.consts.restart_limit {
                return Err(proto_err(
                    round,
                    format!("restart {} exceeds limit {}", self.restarts, self.consts.restart_limit),
                ));
            }
            self.cursor.rep += 1;
            ctx.trace.push(
                round,
                Event::Restart {
                    layer: self.cursor.layer,
                    rep: self.cursor.rep,
                    crashes: f,
                },
            );
            debug!("layer {} restarts after {f} crashes", self.cursor.layer);
            self.rep_violations.clear();
            self.last_reset = round;
            self.cursor.l1 = 1;
            self.cursor.l2 = 1;
            self.begin_step(ctx.cluster, round);
            return self.begin_retrieve(ctx);
        }
        if self.cursor.l2 < self.consts.l2_max {
            self.cursor.l2 += 1;
            return self.begin_retrieve(ctx);
        }
        self.cursor.l2 = 1;
        if self.cursor.l1 < self.consts.l1_max {
            self.cursor.l1 += 1;
            self.begin_step(ctx.cluster, round);
            return self.begin_retrieve(ctx);
        }

        let layer = self.cursor.layer;
        if let Some(g) = self
            .circuit
            .gates_in_layer(layer)
            .iter()
            .find(|g| !self.stored_in_layer.contains(g))
        {
            return Err(proto_err(round, format!("layer {layer} ended with gate {g} unstored")));
        }
        self.check_layer(ctx.cluster, round, layer);
        self.violations.append(&mut self.rep_violations);
        self.layer_rounds.push(round - self.layer_start);
        ctx.trace.push(
            round,
            Event::LayerDone {
                layer,
                rounds: round - self.layer_start,
            },
        );
        if layer >= self.circuit.depth() {
            self.stage = Stage::Finished;
            ctx.trace.push(
                round,
                Event::Metrics {
                    total_rounds: round,
                    restarts: self.restarts,
                    crashes: ctx.cluster.total_crashes(),
                    max_per_node_queries: self.max_per_node_queries,
                },
            );
            return Ok(());
        }
        self.start_layer(ctx, layer + 1)
    }

    fn start_layer(&mut self, ctx: &mut RoundCtx<'_, Msg>, layer: u32) -> Result<(), SimError> {
        let round = ctx.round();
        self.cursor = Cursor {
            layer,
            rep: 1,
            l1: 1,
            l2: 1,
        };
        self.stored_in_layer.clear();
        self.last_reset = round;
        self.layer_start = round;
        self.begin_step(ctx.cluster, round);
        self.begin_retrieve(ctx)
    }

    /// Every wire leaving `layer` must decode, from the symbols alive nodes
    /// hold, to its reference value.
    fn check_layer(&mut self, cluster: &ClusterState, round: u64, layer: u32) {
        let mut decoded: HashMap<CodewordKey, Option<Message>> = HashMap::new();
        for &w in self.circuit.wires_of_layer(layer) {
            let ok = self.public.resolve(w).is_some_and(|(key, pos)| {
                let msg = decoded.entry(key).or_insert_with(|| {
                    let cw = Codeword(
                        (0..self.consts.n)
                            .map(|t| {
                                if cluster.is_alive(t) {
                                    self.nodes[t].storage.get(&key).copied()
                                } else {
                                    None
                                }
                            })
                            .collect(),
                    );
                    self.code.block_decode(&cw).ok()
                });
                msg.as_ref().is_some_and(|m| {
                    symbol_bit(m.0[pos.symbol], pos.bit, self.consts.payload_bits) == self.reference[&w.src]
                })
            });
            if !ok {
                self.violations.push(Violation::new(
                    round,
                    "layer-completion",
                    format!("layer {layer}: {w:?} is not recoverable with its reference value"),
                ));
            }
        }
    }

    fn check_digests(&mut self, cluster: &ClusterState) {
        let expected = self.public.digest();
        if cluster.alive().any(|t| self.nodes[t].digest != expected) {
            self.digest_mismatch_rounds += 1;
            if self.digest_mismatch_rounds == 1 {
                self.violations.push(Violation::new(
                    cluster.round(),
                    "registry",
                    "alive nodes disagree on the wire registry".to_string(),
                ));
            }
        }
    }

    pub fn inputs(&self) -> &[bool] {
        &self.inputs
    }

    pub fn reference(&self) -> &BTreeMap<GateId, bool> {
        &self.reference
    }
}

impl Protocol for Engine<'_> {
    type Msg = Msg;

    fn on_round(&mut self, ctx: &mut RoundCtx<'_, Msg>) -> Result<(), SimError> {
        self.deliver(ctx);
        let round = ctx.round();
        match self.stage {
            Stage::NotStarted => self.begin_init(ctx)?,
            Stage::Init { start, len } => {
                if round == start + len {
                    self.finish_store(ctx, start);
                    self.check_layer(ctx.cluster, round, 0);
                    ctx.arm_adversary();
                    if self.circuit.depth() == 0 {
                        warn!("circuit has no layers to compute");
                        self.stage = Stage::Finished;
                    } else {
                        self.start_layer(ctx, 1)?;
                    }
                } else {
                    self.send_store_chunk(ctx, start, (round - start) as usize)?;
                }
            }
            Stage::Retrieve { start } => {
                if round == start + self.consts.max_ret_time {
                    self.finish_retrieve(ctx);
                    self.begin_store(ctx)?;
                } else {
                    self.send_responses(ctx, round - start)?;
                }
            }
            Stage::Store { start } => {
                if round == start + self.consts.max_store_time {
                    self.finish_store(ctx, start);
                    self.advance(ctx)?;
                } else {
                    self.send_store_chunk(ctx, start, (round - start) as usize)?;
                }
            }
            Stage::Finished => {}
        }
        self.crashes_this_rep = ctx.cluster.crashes_since(self.last_reset);
        self.last_round = round;
        self.check_digests(ctx.cluster);
        Ok(())
    }

    fn adversary_view(&self) -> AdversaryView<'_> {
        // Asked at the start of the round after `last_round`.
        let next = self.last_round + 1;
        let phase = match self.stage {
            Stage::Retrieve { start } => Phase::Retrieve { offset: next - start },
            Stage::Store { start } => Phase::Store { offset: next - start },
            _ => Phase::Idle,
        };
        AdversaryView {
            phase,
            pending_queries: &self.pending_queries,
            storers: &self.storers,
            crashes_this_rep: self.crashes_this_rep,
            restart_threshold: self.consts.threshold,
        }
    }

    fn finished(&self) -> bool {
        self.stage == Stage::Finished
    }
}
