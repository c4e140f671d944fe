//! Property tests for the invariants of each layer of the stack.

#![allow(clippy::needless_range_loop)]

use std::collections::BTreeMap;

use cliquefort::circuit::{eval_reference, gen_random_layered, GateKind, LayeredCircuit};
use cliquefort::derand::{delta_prime, det_dec, hit_counts, DerandConfig, DetDecRequest, Instance};
use cliquefort::gfield::{lagrange_at_zero, mat_vec, solve_linear, FieldElement, UniPoly};
use cliquefort::netsim::ScriptedAdversary;
use cliquefort::protocol::registry::{locate_bit, pack_chunks, symbol_bit};
use cliquefort::protocol::{allocate, allocate::load_bound, robust_compute, RunSetup};
use cliquefort::rmldc::{make_params, Codeword, Message, ReedMullerCode};
use num_rational::Ratio;
use proptest::prelude::*;

const PRIMES: [u32; 6] = [2, 3, 5, 7, 11, 13];

fn fe(v: u32, q: u32) -> FieldElement {
    FieldElement::new(v as u64, q).unwrap()
}

fn code(q: u32, r: usize) -> ReedMullerCode {
    ReedMullerCode::new(make_params(q, r, Ratio::new(1, 2)).unwrap())
}

fn small_code() -> impl Strategy<Value = (u32, usize)> {
    prop_oneof![Just((5u32, 2usize)), Just((3, 3)), Just((7, 2)), Just((5, 3))]
}

proptest! {
    #[test]
    fn field_axioms(qi in 0..PRIMES.len(), a in 0u32..13, b in 0u32..13, c in 0u32..13) {
        let q = PRIMES[qi];
        let (a, b, c) = (fe(a % q, q), fe(b % q, q), fe(c % q, q));
        prop_assert_eq!(a + b, b + a);
        prop_assert_eq!(a * b, b * a);
        prop_assert_eq!((a + b) + c, a + (b + c));
        prop_assert_eq!((a * b) * c, a * (b * c));
        prop_assert_eq!(a * (b + c), a * b + a * c);
        prop_assert_eq!(a - a, FieldElement::zero(q));
        prop_assert_eq!((a * b).value() as u64, (a.value() as u64 * b.value() as u64) % q as u64);
        if !a.is_zero() {
            prop_assert_eq!(a * a.inv().unwrap(), FieldElement::one(q));
        } else {
            prop_assert!(a.inv().is_err());
        }
    }

    #[test]
    fn lagrange_recovers_constant_term(
        qi in 2..PRIMES.len(),
        coeffs in prop::collection::vec(0u32..13, 1..5),
        extra in 0usize..3,
    ) {
        let q = PRIMES[qi];
        let deg = coeffs.len() - 1;
        let poly = UniPoly::new(coeffs.iter().map(|&c| fe(c % q, q)).collect(), q).unwrap();
        let take = (deg + 1 + extra).min(q as usize - 1);
        let samples: Vec<_> = (1..=take as u32).map(|a| (fe(a, q), poly.eval(fe(a, q)))).collect();
        prop_assert_eq!(lagrange_at_zero(&samples, deg).unwrap(), poly.eval(FieldElement::zero(q)));
    }

    #[test]
    fn solve_inverts_mat_vec(qi in 2..PRIMES.len(), k in 1usize..6, seed in prop::collection::vec(0u32..13, 72)) {
        let q = PRIMES[qi];
        let a: Vec<Vec<_>> = (0..k).map(|i| (0..k).map(|j| fe(seed[i * k + j] % q, q)).collect()).collect();
        let x: Vec<_> = (0..k).map(|i| fe(seed[36 + i] % q, q)).collect();
        let b = mat_vec(&a, &x);
        match solve_linear(&a, &b) {
            Ok(sol) => prop_assert_eq!(sol, x),
            // Only singular matrices may fail; then A x = 0 has a nonzero solution
            // and some column combination vanishes, which the rank check below confirms.
            Err(_) => prop_assert!(rank(&a) < k),
        }
    }

    #[test]
    fn encoding_is_systematic_and_block_decodes(
        (q, r) in small_code(),
        vals in prop::collection::vec(0u32..7, 20),
        erase in prop::collection::vec(any::<bool>(), 125),
    ) {
        let code = code(q, r);
        let p = code.params().clone();
        let msg = Message((0..p.k).map(|i| fe(vals[i % vals.len()] % q, q)).collect());
        let mut cw = code.encode(&msg).unwrap();
        for i in 0..p.k {
            prop_assert_eq!(cw.0[code.target_position(i)], Some(msg.0[i]));
        }
        // Erase at most delta * N positions.
        let budget = (p.delta * Ratio::from_integer(p.n as u64)).to_integer() as usize;
        let drop: Vec<usize> = (0..p.n).filter(|&t| erase[t % erase.len()]).take(budget).collect();
        cw.erase(drop);
        prop_assert_eq!(code.block_decode(&cw).unwrap(), msg);
    }

    #[test]
    fn local_decode_is_exact_under_the_threshold(
        (q, r) in small_code(),
        vals in prop::collection::vec(0u32..7, 20),
        target in 0usize..100,
        dir in 0usize..1000,
        erase in prop::collection::vec(any::<bool>(), 6),
    ) {
        let code = code(q, r);
        let p = code.params().clone();
        let msg = Message((0..p.k).map(|i| fe(vals[i % vals.len()] % q, q)).collect());
        let cw = code.encode(&msg).unwrap();
        let i = target % p.k;
        let plan = code.plan_for_direction(i, dir % code.directions().len()).unwrap();
        let thr = p.erasure_threshold();
        let mut dropped = 0;
        let responses: Vec<_> = plan.queries.iter().enumerate().map(|(k, &x)| {
            if erase[k % erase.len()] && dropped < thr {
                dropped += 1;
                None
            } else {
                cw.0[x]
            }
        }).collect();
        prop_assert_eq!(code.local_decode(&plan, &responses).unwrap(), Some(msg.0[i]));
    }

    #[test]
    fn det_dec_plans_carry_certificates(
        (q, r) in prop_oneof![Just((5u32, 2usize)), Just((7, 2)), Just((3, 3))],
        p_mult in 1usize..=4,
        mask_seed in prop::collection::vec(any::<bool>(), 49),
        targets in prop::collection::vec(0usize..100, 200),
        seed in any::<u64>(),
    ) {
        let code = code(q, r);
        let params = code.params().clone();
        let alpha = Ratio::new(1, 4);
        let dp = delta_prime(alpha, params.delta);
        let limit = (dp * Ratio::from_integer(params.n as u64)).to_integer() as usize;
        let mut mask = vec![false; params.n];
        let mut erased = 0;
        for (t, m) in mask.iter_mut().enumerate() {
            if mask_seed[t % mask_seed.len()] && erased < limit {
                *m = true;
                erased += 1;
            }
        }
        let count = (p_mult * params.n).min(targets.len());
        let instances: Vec<_> = targets[..count]
            .iter()
            .map(|&t| Instance { target: t % params.k, erasures: &mask })
            .collect();
        let congestion = DerandConfig::default().congestion(&code, instances.len());
        let req = DetDecRequest { instances, delta_prime: dp, congestion };
        let plans = det_dec(&code, &req, seed, 64).unwrap();
        let thr = params.erasure_threshold();
        for (inst, plan) in req.instances.iter().zip(&plans) {
            prop_assert_eq!(plan.target_index, inst.target);
            prop_assert!(plan.queries.iter().filter(|&&x| mask[x]).count() <= thr);
        }
        prop_assert!(hit_counts(&plans, params.n).into_iter().max().unwrap() <= congestion.cap);
        prop_assert_eq!(det_dec(&code, &req, seed, 64).unwrap(), plans);
    }

    #[test]
    fn allocation_respects_load_bound(
        fans in prop::collection::vec(1usize..=50, 1..200),
        alive_bits in prop::collection::vec(any::<bool>(), 49),
        l1 in 0u32..=6,
    ) {
        let gates: Vec<_> = fans.iter().enumerate().map(|(g, &f)| (g as u32, f)).collect();
        let mut alive: Vec<usize> = (0..49).filter(|&v| alive_bits[v]).collect();
        if alive.is_empty() {
            alive.push(0);
        }
        let a = allocate(&gates, l1, &alive, 49).unwrap();
        prop_assert_eq!(a.copies, (1usize << l1).min(alive.len()));
        let (num, den) = load_bound(&gates, a.copies, alive.len());
        prop_assert!(a.max_load() * den <= num);
        let mut copies = BTreeMap::new();
        for v in 0..49 {
            if !alive.contains(&v) {
                prop_assert!(a.assigned[v].is_empty());
            }
            for &g in &a.assigned[v] {
                *copies.entry(g).or_insert(0) += 1;
            }
            let load: usize = a.assigned[v].iter().map(|&g| fans[g as usize]).sum();
            prop_assert_eq!(load, a.loads[v]);
        }
        prop_assert!(copies.values().all(|&c| c == a.copies));
        prop_assert_eq!(copies.len(), gates.len());
        prop_assert_eq!(allocate(&gates, l1, &alive, 49).unwrap(), a);
    }

    #[test]
    fn layers_partition_gates_and_wires(depth in 1u32..6, width in 4usize..16, fan in 2usize..5, seed in any::<u64>()) {
        let fan = fan.min(width);
        let c = gen_random_layered(depth, width, fan, seed).unwrap();
        let report = c.report();
        prop_assert_eq!(report.depth, depth);
        let mut seen_gates = 0;
        let mut seen_wires = 0;
        let mut width_seen = 0;
        for i in 0..=depth {
            for &g in c.gates_in_layer(i) {
                prop_assert_eq!(c.layer_of(g), i);
            }
            for w in c.wires_of_layer(i) {
                prop_assert_eq!(c.layer_of(w.src), i);
                prop_assert!(c.layer_of(w.dst) > i);
            }
            seen_gates += c.gates_in_layer(i).len();
            seen_wires += c.wires_of_layer(i).len();
            width_seen = width_seen.max(c.wires_of_layer(i).len());
        }
        prop_assert_eq!(seen_gates, c.gates().len());
        let total_wires: usize = c.gates().iter().map(|g| g.inputs.len()).sum();
        prop_assert_eq!(seen_wires, total_wires);
        prop_assert_eq!(width_seen, report.width);
        let max_fan = c.gates().iter().map(|g| c.fan(g.id)).max().unwrap();
        prop_assert_eq!(max_fan, report.max_fan);
        prop_assert!(report.max_fan <= fan);
        let again = LayeredCircuit::from_json(&c.to_json()).unwrap();
        prop_assert_eq!(again.report(), report);
        prop_assert_eq!(again.to_json(), c.to_json());
    }

    #[test]
    fn reference_evaluation_matches_truth_tables(depth in 1u32..5, width in 2usize..8, seed in any::<u64>()) {
        let c = gen_random_layered(depth, width, 2.min(width), seed).unwrap();
        let m = c.num_inputs();
        prop_assume!(m <= 10);
        let tables = truth_tables(&c);
        let outs: Vec<_> = c.output_gates().map(|g| g.id).collect();
        for assignment in 0..(1usize << m) {
            let inputs: Vec<bool> = (0..m).map(|k| assignment >> k & 1 == 1).collect();
            let want: Vec<bool> = outs.iter().map(|g| tables[g][assignment]).collect();
            prop_assert_eq!(eval_reference(&c, &inputs).unwrap(), want);
        }
    }

    #[test]
    fn packing_round_trips(data in prop::collection::vec(any::<bool>(), 0..200), (q, r) in small_code()) {
        let p = code(q, r).params().clone();
        let bits = p.bits_per_symbol();
        let chunks = pack_chunks(&data, p.k, bits, q);
        prop_assert_eq!(chunks.len(), data.len().div_ceil(p.k * bits));
        for (off, &b) in data.iter().enumerate() {
            let pos = locate_bit(off, p.k, bits);
            prop_assert_eq!(symbol_bit(chunks[pos.chunk as usize][pos.symbol], pos.bit, bits), b);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn any_crash_schedule_within_budget_keeps_outputs_exact(
        seed in any::<u64>(),
        crashes in prop::collection::vec((0u64..3000, 0usize..25), 0..10),
        input_bits in prop::collection::vec(any::<bool>(), 8),
    ) {
        let mut c = gen_random_layered(3, 10, 4, seed).unwrap();
        c.assign_owners_round_robin(25);
        let inputs: Vec<bool> = (0..c.num_inputs()).map(|k| input_bits[k % 8]).collect();
        let mut schedule: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (round, v) in crashes {
            schedule.entry(round).or_default().push(v);
        }
        let setup = RunSetup::new(5, 2);
        let rep = robust_compute(&c, &inputs, &setup, Box::new(ScriptedAdversary::new(schedule))).unwrap();
        prop_assert!(rep.correct);
        prop_assert!(rep.crashes <= rep.crash_budget);
        prop_assert!(rep.restarts <= rep.restart_limit);
        prop_assert!(rep.violations.is_empty(), "{:?}", rep.violations);
        prop_assert!(rep.within_round_bound());
    }
}

/// Rank over F_q by plain row reduction; an oracle for singularity.
fn rank(a: &[Vec<FieldElement>]) -> usize {
    let mut m = a.to_vec();
    let (rows, cols) = (m.len(), m[0].len());
    let mut rank = 0;
    for col in 0..cols {
        let Some(p) = (rank..rows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, p);
        let inv = m[rank][col].inv().unwrap();
        for r in 0..rows {
            if r != rank && !m[r][col].is_zero() {
                let f = m[r][col] * inv;
                for c in 0..cols {
                    let sub = f * m[rank][c];
                    m[r][c] = m[r][c] - sub;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Every gate's value as a table over all input assignments, built from the
/// gate semantics directly.
fn truth_tables(c: &LayeredCircuit) -> BTreeMap<u32, Vec<bool>> {
    let m = c.num_inputs();
    let inputs: Vec<u32> = c.input_gates().map(|g| g.id).collect();
    let mut tables: BTreeMap<u32, Vec<bool>> = BTreeMap::new();
    for layer in 0..=c.depth() {
        for &g in c.gates_in_layer(layer) {
            let gate = c.gate(g);
            let table = (0..1usize << m)
                .map(|a| {
                    let x: Vec<bool> = gate.inputs.iter().map(|s| tables[s][a]).collect();
                    match &gate.kind {
                        GateKind::Input => {
                            let k = inputs.iter().position(|&i| i == g).unwrap();
                            a >> k & 1 == 1
                        }
                        GateKind::Output | GateKind::Id => x[0],
                        GateKind::Not => !x[0],
                        GateKind::And => x.iter().all(|&b| b),
                        GateKind::Or => x.iter().any(|&b| b),
                        GateKind::Xor => x.iter().filter(|&&b| b).count() % 2 == 1,
                        GateKind::Maj => 2 * x.iter().filter(|&&b| b).count() > x.len(),
                        GateKind::Lut(t) => t[x.iter().enumerate().map(|(i, &b)| (b as usize) << i).sum::<usize>()],
                    }
                })
                .collect();
            tables.insert(g, table);
        }
    }
    tables
}

#[test]
fn codeword_erasures_count() {
    let mut cw = Codeword(vec![Some(fe(1, 5)); 4]);
    cw.erase([0, 2]);
    assert_eq!(cw.erasures(), 2);
}
