//! Where every stored wire lives, and how wire bits are packed into symbols.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::Hasher;

use fnv::FnvHasher;
use serde::Serialize;

use crate::circuit::{GateId, WireId};
use crate::derand::SymbolLocator;
use crate::gfield::FieldElement;
use crate::netsim::NodeId;

/// Identifies one stored codeword: chunk `chunk` of the store that `storer`
/// started in round `round`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CodewordKey {
    pub storer: NodeId,
    pub round: u64,
    pub chunk: u32,
}

/// Position of one bit inside a chunked, packed bit string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BitPosition {
    pub chunk: u32,
    /// Message index inside the chunk.
    pub symbol: usize,
    /// Bit inside the symbol, 0 being the most significant payload bit.
    pub bit: usize,
}

/// Locates bit `offset` when every chunk carries `k` symbols of `bits` bits.
pub fn locate_bit(offset: usize, k: usize, bits: usize) -> BitPosition {
    let per_chunk = k * bits;
    let within = offset % per_chunk;
    BitPosition {
        chunk: (offset / per_chunk) as u32,
        symbol: within / bits,
        bit: within % bits,
    }
}

/// Splits `data` into chunks of `k` symbols with `bits` bits each, big-endian
/// within a symbol, zero padded. An empty string gives no chunks.
pub fn pack_chunks(data: &[bool], k: usize, bits: usize, q: u32) -> Vec<Vec<FieldElement>> {
    data.chunks(k * bits)
        .map(|part| {
            (0..k)
                .map(|s| {
                    let v = (0..bits).fold(0u64, |acc, b| {
                        acc << 1 | u64::from(part.get(s * bits + b).copied().unwrap_or(false))
                    });
                    FieldElement::new(v, q).expect("payload bits fit below q")
                })
                .collect()
        })
        .collect()
}

/// Extracts one payload bit from a decoded symbol.
pub fn symbol_bit(symbol: FieldElement, bit: usize, bits: usize) -> bool {
    (symbol.value() >> (bits - 1 - bit)) & 1 == 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WireLocation {
    pub storer: NodeId,
    pub round: u64,
    /// Bit offset in the storer's string.
    pub offset: usize,
}

/// Stored gates and the location of each of their wires.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct WireRegistry {
    k: usize,
    bits: usize,
    gates: BTreeSet<GateId>,
    wires: BTreeMap<WireId, WireLocation>,
}

impl WireRegistry {
    pub fn new(k: usize, bits: usize) -> Self {
        Self {
            k,
            bits,
            ..Self::default()
        }
    }

    pub fn is_stored(&self, g: GateId) -> bool {
        self.gates.contains(&g)
    }

    pub fn stored_gates(&self) -> &BTreeSet<GateId> {
        &self.gates
    }

    /// Records a successful store of `gates`, whose outgoing wires occupy the
    /// storer's string in the order given. Gates already stored keep their
    /// earlier location.
    pub fn record(&mut self, storer: NodeId, round: u64, gates: &[(GateId, Vec<WireId>)]) {
        let mut offset = 0;
        for (g, wires) in gates {
            let fresh = self.gates.insert(*g);
            for &w in wires {
                if fresh {
                    self.wires.insert(w, WireLocation { storer, round, offset });
                }
                offset += 1;
            }
        }
    }

    pub fn location(&self, w: WireId) -> Option<WireLocation> {
        self.wires.get(&w).copied()
    }

    /// Codeword and bit position holding `w`.
    pub fn resolve(&self, w: WireId) -> Option<(CodewordKey, BitPosition)> {
        let loc = self.location(w)?;
        let pos = locate_bit(loc.offset, self.k, self.bits);
        Some((
            CodewordKey {
                storer: loc.storer,
                round: loc.round,
                chunk: pos.chunk,
            },
            pos,
        ))
    }

    /// FNV-1a digest of the full contents.
    pub fn digest(&self) -> u64 {
        let mut h = FnvHasher::default();
        for g in &self.gates {
            h.write_u32(*g);
        }
        for (w, loc) in &self.wires {
            for v in [w.src as u64, w.dst as u64, w.port as u64, loc.storer as u64, loc.round, loc.offset as u64] {
                h.write_u64(v);
            }
        }
        h.finish()
    }
}

impl SymbolLocator for WireRegistry {
    fn message_index(&self, wire: WireId) -> Option<usize> {
        self.resolve(wire).map(|(_, pos)| pos.symbol)
    }
}
