//! Deterministic choice of local-decoding lines.
//!
//! `det_dec` picks one query line per decoding instance such that every line
//! has few enough erased points to decode, while no codeword position is hit
//! by too many lines. The search is a fixed deterministic procedure seeded from
//! the caller's context, so every node that runs it on the same arguments gets
//! the same answer without communicating.

use std::hash::Hasher;

use fnv::FnvHasher;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::circuit::WireId;
use crate::rmldc::{QueryPlan, ReedMullerCode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DerandError {
    #[error("delta' = {delta_prime} must lie strictly below delta = {delta}")]
    DeltaPrime {
        delta_prime: Ratio<u64>,
        delta: Ratio<u64>,
    },
    #[error("instance {instance}: {erased} erasures exceed delta' * N = {limit}")]
    TooManyErasures {
        instance: usize,
        erased: usize,
        limit: Ratio<u64>,
    },
    #[error("instance {instance}: erasure mask has length {got}, code length is {expected}")]
    MaskLength {
        instance: usize,
        expected: usize,
        got: usize,
    },
    #[error("instance {instance}: target {target} out of range")]
    Target { instance: usize, target: usize },
    #[error("wire {0:?} is not stored anywhere")]
    Unresolved(WireId),
    #[error("derandomization failed after {restarts} restarts")]
    Exhausted { restarts: usize },
}

pub type Result<T> = std::result::Result<T, DerandError>;

/// Tunable constants of the search.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DerandConfig {
    /// Multiplier of `log2 K` in the trials per instance.
    pub trials_mult: u32,
    /// Multiplier in front of the congestion cap.
    pub cap_mult: u32,
    /// Randomized restarts after the deterministic first pass.
    pub restarts: usize,
}

impl Default for DerandConfig {
    fn default() -> Self {
        Self {
            trials_mult: 4,
            cap_mult: 6,
            restarts: 64,
        }
    }
}

impl DerandConfig {
    /// Trials per instance, `M = ceil(trials_mult * log2 max(K, 2))`.
    pub fn trials(&self, k: usize) -> usize {
        (self.trials_mult as f64 * (k.max(2) as f64).log2()).ceil() as usize
    }

    /// Congestion limits for `p` instances on this code.
    pub fn congestion(&self, code: &ReedMullerCode, p: usize) -> CongestionConfig {
        let params = code.params();
        let m = self.trials(params.k);
        let spread = (p * (params.q as usize - 1)).div_ceil(2 * (params.n - 1)).max(1);
        CongestionConfig {
            trials: m,
            cap: self.cap_mult as usize * spread * m,
        }
    }

    /// The congestion constant `c1` with `cap = c1 * ceil(..) * log2 N`.
    pub fn c1(&self, code: &ReedMullerCode) -> f64 {
        let params = code.params();
        (self.cap_mult as usize * self.trials(params.k)) as f64 / (params.n as f64).log2()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CongestionConfig {
    /// Candidate lines tried per instance in a randomized restart.
    pub trials: usize,
    /// Largest number of chosen lines allowed through one position.
    pub cap: usize,
}

/// One decoding task: recover message index `target` from a codeword whose
/// positions flagged in `erasures` are gone.
#[derive(Debug, Clone, Copy)]
pub struct Instance<'a> {
    pub target: usize,
    pub erasures: &'a [bool],
}

#[derive(Debug, Clone)]
pub struct DetDecRequest<'a> {
    pub instances: Vec<Instance<'a>>,
    pub delta_prime: Ratio<u64>,
    pub congestion: CongestionConfig,
}

/// Hits per codeword position over a set of plans.
pub fn hit_counts(plans: &[QueryPlan], n: usize) -> Vec<usize> {
    let mut hits = vec![0; n];
    for p in plans {
        for &x in &p.queries {
            hits[x] += 1;
        }
    }
    hits
}

fn erased_on(line: &[usize], erasures: &[bool]) -> usize {
    line.iter().filter(|&&x| erasures[x]).count()
}

/// Returns one plan per instance with at most `floor(delta(q-1))` erased
/// queries each and at most `cap` plans through any position.
///
/// The first pass walks the canonical directions round-robin per target,
/// skipping lines that are too erased. If that violates the cap, up to
/// `restarts` randomized passes draw `M` candidate lines per instance from a
/// ChaCha8 stream seeded by `search_seed` and the pass number.
pub fn det_dec(
    code: &ReedMullerCode,
    req: &DetDecRequest<'_>,
    search_seed: u64,
    restarts: usize,
) -> Result<Vec<QueryPlan>> {
    let params = code.params();
    if req.delta_prime >= params.delta {
        return Err(DerandError::DeltaPrime {
            delta_prime: req.delta_prime,
            delta: params.delta,
        });
    }
    let limit = req.delta_prime * Ratio::from_integer(params.n as u64);
    for (j, inst) in req.instances.iter().enumerate() {
        if inst.erasures.len() != params.n {
            return Err(DerandError::MaskLength {
                instance: j,
                expected: params.n,
                got: inst.erasures.len(),
            });
        }
        if inst.target >= params.k {
            return Err(DerandError::Target {
                instance: j,
                target: inst.target,
            });
        }
        let erased = inst.erasures.iter().filter(|&&e| e).count();
        if Ratio::from_integer(erased as u64) > limit {
            return Err(DerandError::TooManyErasures {
                instance: j,
                erased,
                limit,
            });
        }
    }

    let thr = params.erasure_threshold();
    let dirs = code.directions().len();
    let good = |inst: &Instance<'_>, d: usize| erased_on(code.line(inst.target, d), inst.erasures) <= thr;
    let within_cap = |choice: &[usize]| {
        let mut hits = vec![0usize; params.n];
        for (inst, &d) in req.instances.iter().zip(choice) {
            for &x in code.line(inst.target, d) {
                hits[x] += 1;
                if hits[x] > req.congestion.cap {
                    return false;
                }
            }
        }
        true
    };
    let finish = |choice: Vec<usize>| -> Vec<QueryPlan> {
        req.instances
            .iter()
            .zip(choice)
            .map(|(inst, d)| code.plan_for_direction(inst.target, d).expect("validated"))
            .collect()
    };

    let mut cursor = vec![0usize; params.k];
    let mut choice = Vec::with_capacity(req.instances.len());
    for inst in &req.instances {
        let start = cursor[inst.target];
        let Some(d) = (0..dirs).map(|s| (start + s) % dirs).find(|&d| good(inst, d)) else {
            // No line through this target decodes: no restart can help.
            return Err(DerandError::Exhausted { restarts: 0 });
        };
        cursor[inst.target] = d + 1;
        choice.push(d);
    }
    if within_cap(&choice) {
        return Ok(finish(choice));
    }

    'restart: for restart in 1..=restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(search_seed ^ (restart as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        choice.clear();
        for inst in &req.instances {
            let pick = (0..req.congestion.trials)
                .map(|_| rng.gen_range(0..dirs))
                .find(|&d| good(inst, d));
            match pick {
                Some(d) => choice.push(d),
                None => continue 'restart,
            }
        }
        if within_cap(&choice) {
            return Ok(finish(choice));
        }
    }
    Err(DerandError::Exhausted { restarts })
}

/// Context mixed into the search seed of one planning call.
#[derive(Debug, Clone, Copy)]
pub struct SeedContext<'a> {
    pub round: u64,
    pub layer: u32,
    pub rep: u32,
    pub l1: u32,
    pub l2: u32,
    pub node: usize,
    /// Crashed node ids, ascending.
    pub crashed: &'a [usize],
}

/// 64-bit FNV-1a over the little-endian `u64` encoding of round, layer, rep,
/// l1, l2, node id, crash-set length and the crashed ids.
pub fn search_seed(ctx: &SeedContext<'_>) -> u64 {
    let mut h = FnvHasher::default();
    let fields = [
        ctx.round,
        ctx.layer as u64,
        ctx.rep as u64,
        ctx.l1 as u64,
        ctx.l2 as u64,
        ctx.node as u64,
        ctx.crashed.len() as u64,
    ];
    for v in fields.into_iter().chain(ctx.crashed.iter().map(|&c| c as u64)) {
        h.write(&v.to_le_bytes());
    }
    h.finish()
}

/// Maps a stored wire to the message index holding its bit.
pub trait SymbolLocator {
    fn message_index(&self, wire: WireId) -> Option<usize>;
}

/// One chosen line: attempt `attempt` at retrieving `wire`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GoodString {
    pub wire: WireId,
    pub attempt: u32,
    pub plan: QueryPlan,
}

/// Lines for `2^ell` attempts at every wire, in wire order then attempt order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GoodStringSet {
    pub strings: Vec<GoodString>,
    pub hit_counts: Vec<usize>,
    pub cap: usize,
}

impl GoodStringSet {
    pub fn plan(&self, wire: WireId, attempt: u32) -> Option<&QueryPlan> {
        self.strings
            .iter()
            .find(|s| s.wire == wire && s.attempt == attempt)
            .map(|s| &s.plan)
    }
}

/// Plans `2^ell` retrieval attempts for each wire, treating the symbols of
/// crashed nodes as erased (node `t` holds symbol `t` of every codeword).
#[allow(clippy::too_many_arguments)]
pub fn good_strings(
    code: &ReedMullerCode,
    crashed: &[bool],
    wires: &[WireId],
    ell: u32,
    locator: &impl SymbolLocator,
    alpha: Ratio<u64>,
    cfg: &DerandConfig,
    search_seed: u64,
) -> Result<GoodStringSet> {
    let copies = 1usize << ell;
    let mut instances = Vec::with_capacity(copies * wires.len());
    for &w in wires {
        let target = locator.message_index(w).ok_or(DerandError::Unresolved(w))?;
        instances.extend(std::iter::repeat_n(Instance { target, erasures: crashed }, copies));
    }
    let congestion = cfg.congestion(code, instances.len());
    let req = DetDecRequest {
        instances,
        delta_prime: delta_prime(alpha, code.params().delta),
        congestion,
    };
    let plans = det_dec(code, &req, search_seed, cfg.restarts)?;
    let hit_counts = hit_counts(&plans, code.params().n);
    let strings = plans
        .into_iter()
        .enumerate()
        .map(|(k, plan)| GoodString {
            wire: wires[k / copies],
            attempt: (k % copies) as u32,
            plan,
        })
        .collect();
    Ok(GoodStringSet {
        strings,
        hit_counts,
        cap: congestion.cap,
    })
}

/// `(alpha + delta) / 2`.
pub fn delta_prime(alpha: Ratio<u64>, delta: Ratio<u64>) -> Ratio<u64> {
    (alpha + delta) / Ratio::from_integer(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rmldc::make_params;
    use std::collections::BTreeMap;

    fn code(q: u32, r: usize) -> ReedMullerCode {
        ReedMullerCode::new(make_params(q, r, Ratio::new(1, 2)).unwrap())
    }

    fn request<'a>(instances: Vec<Instance<'a>>, code: &ReedMullerCode) -> DetDecRequest<'a> {
        let congestion = DerandConfig::default().congestion(code, instances.len());
        DetDecRequest {
            instances,
            delta_prime: Ratio::new(3, 8),
            congestion,
        }
    }

    #[test]
    fn single_clean_instance_takes_first_direction() {
        let c = code(5, 2);
        let none = vec![false; 25];
        let req = request(vec![Instance { target: 0, erasures: &none }], &c);
        let plans = det_dec(&c, &req, 0, 64).unwrap();
        assert_eq!(plans.len(), 1);
        assert_eq!(plans[0].direction, c.directions()[0]);
        assert_eq!(plans[0].direction.values(), vec![1, 0]);
    }

    #[test]
    fn avoids_fully_erased_diagonal() {
        let c = code(5, 2);
        let p = c.params();
        let mut erased = vec![false; 25];
        for a in 1..5 {
            erased[p.index_of(&crate::gfield::FPoint::from_values(&[a, a], 5).unwrap())] = true;
        }
        // Oracle: erased queries on each of the 6 lines through (0, 0).
        let per_line: Vec<usize> = (0..6).map(|d| erased_on(c.line(0, d), &erased)).collect();
        let diagonal = c.directions().iter().position(|d| d.values() == vec![1, 1]).unwrap();
        assert_eq!(per_line[diagonal], 4);
        assert_eq!(per_line.iter().filter(|&&e| e > 0).count(), 1);

        // Start the round-robin on the diagonal by asking for enough copies.
        let instances = vec![Instance { target: 0, erasures: &erased }; 12];
        let plans = det_dec(&c, &request(instances, &c), 0, 64).unwrap();
        assert!(plans.iter().all(|pl| pl.direction.values() != vec![1, 1]));
    }

    #[test]
    fn many_clean_instances_respect_cap() {
        let c = code(5, 2);
        let none = vec![false; 25];
        let instances: Vec<_> = (0..25).map(|j| Instance { target: j % 3, erasures: &none }).collect();
        let req = request(instances, &c);
        let plans = det_dec(&c, &req, 9, 64).unwrap();
        let hits = hit_counts(&plans, 25);
        // Recount by hand instead of trusting `hit_counts`.
        let mut recount = BTreeMap::new();
        for pl in &plans {
            for &x in &pl.queries {
                *recount.entry(x).or_insert(0usize) += 1;
            }
        }
        for (x, &h) in hits.iter().enumerate() {
            assert_eq!(recount.get(&x).copied().unwrap_or(0), h);
        }
        assert!(hits.iter().all(|&h| h <= req.congestion.cap));
    }

    #[test]
    fn rejects_bad_requests() {
        let c = code(5, 2);
        let many = vec![true; 25];
        let req = request(vec![Instance { target: 0, erasures: &many }], &c);
        assert!(matches!(det_dec(&c, &req, 0, 1), Err(DerandError::TooManyErasures { .. })));
        let none = vec![false; 25];
        let mut req = request(vec![Instance { target: 0, erasures: &none }], &c);
        req.delta_prime = Ratio::new(1, 2);
        assert!(matches!(det_dec(&c, &req, 0, 1), Err(DerandError::DeltaPrime { .. })));
        let req = request(vec![Instance { target: 5, erasures: &none }], &c);
        assert!(matches!(det_dec(&c, &req, 0, 1), Err(DerandError::Target { .. })));
        let short = vec![false; 3];
        let req = request(vec![Instance { target: 0, erasures: &short }], &c);
        assert!(matches!(det_dec(&c, &req, 0, 1), Err(DerandError::MaskLength { .. })));
    }

    #[test]
    fn tight_cap_forces_restarts_or_failure() {
        let c = code(5, 2);
        let none = vec![false; 25];
        let instances = vec![Instance { target: 0, erasures: &none }; 7];
        let req = DetDecRequest {
            instances,
            delta_prime: Ratio::new(3, 8),
            congestion: CongestionConfig { trials: 1, cap: 1 },
        };
        // Six disjoint lines exist, so a seventh instance always collides.
        assert_eq!(det_dec(&c, &req, 0, 8), Err(DerandError::Exhausted { restarts: 8 }));
    }

    #[test]
    fn seed_depends_on_every_field() {
        let crashed = [3, 7];
        let base = SeedContext {
            round: 10,
            layer: 1,
            rep: 1,
            l1: 2,
            l2: 3,
            node: 4,
            crashed: &crashed,
        };
        let s = search_seed(&base);
        assert_eq!(s, search_seed(&base));
        let variants = [
            SeedContext { round: 11, ..base },
            SeedContext { layer: 2, ..base },
            SeedContext { rep: 2, ..base },
            SeedContext { l1: 3, ..base },
            SeedContext { l2: 4, ..base },
            SeedContext { node: 5, ..base },
            SeedContext { crashed: &[3], ..base },
        ];
        for v in variants {
            assert_ne!(search_seed(&v), s);
        }
    }

    #[test]
    fn seed_matches_reference_fnv1a() {
        // Independent FNV-1a: offset basis 0xcbf29ce484222325, prime 0x100000001b3.
        let crashed = [2usize];
        let ctx = SeedContext {
            round: 1,
            layer: 2,
            rep: 3,
            l1: 4,
            l2: 5,
            node: 6,
            crashed: &crashed,
        };
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in [1u64, 2, 3, 4, 5, 6, 1, 2] {
            for byte in v.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        assert_eq!(search_seed(&ctx), h);
    }

    struct Direct;
    impl SymbolLocator for Direct {
        fn message_index(&self, w: WireId) -> Option<usize> {
            Some(w.src as usize % 3)
        }
    }

    #[test]
    fn good_strings_examples() {
        let c = code(5, 2);
        let alpha = Ratio::new(1, 4);
        let cfg = DerandConfig::default();
        let w = |k: u32| WireId { src: k, dst: 100, port: k };

        let clean = vec![false; 25];
        let one = good_strings(&c, &clean, &[w(0)], 0, &Direct, alpha, &cfg, 1).unwrap();
        assert_eq!(one.strings.len(), 1);
        assert_eq!(erased_on(&one.strings[0].plan.queries, &clean), 0);

        let mut crashed = vec![false; 25];
        for t in [1, 5, 6, 12, 24, 18] {
            crashed[t] = true;
        }
        let wires: Vec<_> = (0..5).map(w).collect();
        let set = good_strings(&c, &crashed, &wires, 2, &Direct, alpha, &cfg, 77).unwrap();
        assert_eq!(set.strings.len(), 20);
        for s in &set.strings {
            assert!(erased_on(&s.plan.queries, &crashed) <= 2);
        }
        let again = good_strings(&c, &crashed, &wires, 2, &Direct, alpha, &cfg, 77).unwrap();
        assert_eq!(set, again);
        assert!(set.plan(w(3), 3).is_some());
        assert!(set.plan(w(3), 4).is_none());
    }

    #[test]
    fn unresolved_wire_is_an_error() {
        struct Nowhere;
        impl SymbolLocator for Nowhere {
            fn message_index(&self, _: WireId) -> Option<usize> {
                None
            }
        }
        let c = code(5, 2);
        let w = WireId { src: 0, dst: 1, port: 0 };
        let res = good_strings(&c, &[false; 25], &[w], 0, &Nowhere, Ratio::new(1, 4), &DerandConfig::default(), 0);
        assert_eq!(res, Err(DerandError::Unresolved(w)));
    }
}
