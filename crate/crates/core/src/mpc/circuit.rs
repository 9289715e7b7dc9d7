//! Arithmetic circuits over shared values and the builder that emits them.
//!
//! The builder folds anything involving public constants into local gates, so
//! only genuine shared×shared products become interactive `Mul` gates.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::MpcError;
use crate::field::{Fe, Field};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WireId(pub u32);

/// Names a party-local input share, e.g. `r3.a1.b0` or `v7.int`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InputRef(pub String);

impl InputRef {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }
}

impl fmt::Display for InputRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gate {
    Input(InputRef),
    /// Public constant; every party holds it as a degree-0 sharing.
    Const(u64),
    Add(WireId, WireId),
    Sub(WireId, WireId),
    Scale(WireId, u64),
    /// One resharing round.
    Mul(WireId, WireId),
    /// Jointly generated random value: sum of one fresh sharing per party.
    Random,
    /// Every party broadcasts its share; the wire then holds the public value.
    Open(WireId),
}

impl Gate {
    pub fn is_interactive(&self) -> bool {
        matches!(self, Gate::Mul(..) | Gate::Random | Gate::Open(..))
    }

    pub fn operands(&self) -> Vec<WireId> {
        match *self {
            Gate::Input(_) | Gate::Const(_) | Gate::Random => vec![],
            Gate::Add(a, b) | Gate::Sub(a, b) | Gate::Mul(a, b) => vec![a, b],
            Gate::Scale(a, _) | Gate::Open(a) => vec![a],
        }
    }
}

/// Gate accounting for a compiled computation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitStats {
    pub comparisons: u32,
    pub top_level_mults: u32,
    pub internal_bit_mults: u32,
    pub rounds: u32,
}

impl CircuitStats {
    pub fn total_mults(&self) -> u32 {
        self.top_level_mults + self.internal_bit_mults
    }

    pub fn accumulate(&mut self, other: &CircuitStats) {
        self.comparisons += other.comparisons;
        self.top_level_mults += other.top_level_mults;
        self.internal_bit_mults += other.internal_bit_mults;
        self.rounds += other.rounds;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Circuit {
    pub gates: Vec<Gate>,
    /// Opened results, by label.
    pub outputs: Vec<(String, WireId)>,
    /// Wires whose shares each party keeps instead of opening.
    pub exports: Vec<(String, WireId)>,
    pub stats: CircuitStats,
}

impl Circuit {
    /// Interactive depth of each gate; local gates inherit the max of their
    /// operands.
    pub fn levels(&self) -> Vec<u32> {
        let mut levels = Vec::with_capacity(self.gates.len());
        for g in &self.gates {
            let base = g.operands().iter().map(|w| levels[w.0 as usize]).max().unwrap_or(0);
            levels.push(if g.is_interactive() { base + 1 } else { base });
        }
        levels
    }

    pub fn depth(&self) -> u32 {
        self.levels()
            .iter()
            .zip(&self.gates)
            .filter(|(_, g)| g.is_interactive())
            .map(|(l, _)| *l)
            .max()
            .unwrap_or(0)
    }

    pub fn needs_degree_reduction(&self) -> bool {
        self.gates.iter().any(|g| matches!(g, Gate::Mul(..) | Gate::Random))
    }

    pub fn inputs(&self) -> impl Iterator<Item = &InputRef> {
        self.gates.iter().filter_map(|g| match g {
            Gate::Input(r) => Some(r),
            _ => None,
        })
    }
}

/// A value during circuit construction: either known to everyone or held as
/// shares on a wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wire {
    Public(Fe),
    Shared(WireId),
}

/// Which counter a multiplication is charged to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MulKind {
    TopLevel,
    Internal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Less,
    Greater,
}

pub struct CircuitBuilder {
    field: Field,
    circuit: Circuit,
}

impl CircuitBuilder {
    pub fn new(field: Field) -> Self {
        Self {
            field,
            circuit: Circuit {
                gates: Vec::new(),
                outputs: Vec::new(),
                exports: Vec::new(),
                stats: CircuitStats::default(),
            },
        }
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn stats(&self) -> CircuitStats {
        self.circuit.stats
    }

    fn push(&mut self, g: Gate) -> WireId {
        let id = WireId(self.circuit.gates.len() as u32);
        self.circuit.gates.push(g);
        id
    }

    fn materialize(&mut self, w: Wire) -> WireId {
        match w {
            Wire::Shared(id) => id,
            Wire::Public(c) => self.push(Gate::Const(c.value())),
        }
    }

    pub fn input(&mut self, r: InputRef) -> Wire {
        Wire::Shared(self.push(Gate::Input(r)))
    }

    pub fn constant(&self, v: u64) -> Wire {
        Wire::Public(self.field.elem(v))
    }

    pub fn add(&mut self, a: Wire, b: Wire) -> Wire {
        match (a, b) {
            (Wire::Public(x), Wire::Public(y)) => Wire::Public(x + y),
            (Wire::Public(x), w) | (w, Wire::Public(x)) if x.is_zero() => w,
            _ => {
                let (a, b) = (self.materialize(a), self.materialize(b));
                Wire::Shared(self.push(Gate::Add(a, b)))
            }
        }
    }

    pub fn sub(&mut self, a: Wire, b: Wire) -> Wire {
        match (a, b) {
            (Wire::Public(x), Wire::Public(y)) => Wire::Public(x - y),
            (w, Wire::Public(y)) if y.is_zero() => w,
            _ => {
                let (a, b) = (self.materialize(a), self.materialize(b));
                Wire::Shared(self.push(Gate::Sub(a, b)))
            }
        }
    }

    pub fn scale(&mut self, a: Wire, c: Fe) -> Wire {
        match a {
            Wire::Public(x) => Wire::Public(x * c),
            _ if c.is_zero() => Wire::Public(c),
            w if c == self.field.one() => w,
            Wire::Shared(id) => Wire::Shared(self.push(Gate::Scale(id, c.value()))),
        }
    }

    /// Product; interactive only when both sides are shared.
    pub fn mul(&mut self, a: Wire, b: Wire, kind: MulKind) -> Wire {
        match (a, b) {
            (Wire::Public(x), w) | (w, Wire::Public(x)) => self.scale(w, x),
            (Wire::Shared(x), Wire::Shared(y)) => {
                match kind {
                    MulKind::TopLevel => self.circuit.stats.top_level_mults += 1,
                    MulKind::Internal => self.circuit.stats.internal_bit_mults += 1,
                }
                Wire::Shared(self.push(Gate::Mul(x, y)))
            }
        }
    }

    pub fn random(&mut self) -> Wire {
        Wire::Shared(self.push(Gate::Random))
    }

    pub fn open(&mut self, label: impl Into<String>, w: Wire) {
        let id = self.materialize(w);
        let out = self.push(Gate::Open(id));
        self.circuit.outputs.push((label.into(), out));
    }

    pub fn export(&mut self, label: impl Into<String>, w: Wire) {
        let id = self.materialize(w);
        self.circuit.exports.push((label.into(), id));
    }

    pub fn not(&mut self, x: Wire) -> Wire {
        let one = self.constant(1);
        self.sub(one, x)
    }

    pub fn and(&mut self, x: Wire, y: Wire, kind: MulKind) -> Wire {
        self.mul(x, y, kind)
    }

    /// `x + y − 2xy`.
    pub fn xor(&mut self, x: Wire, y: Wire, kind: MulKind) -> Wire {
        let xy = self.mul(x, y, kind);
        let s = self.add(x, y);
        let two = self.field.elem(2);
        let twice = self.scale(xy, two);
        self.sub(s, twice)
    }

    /// `x + y − xy`.
    pub fn or(&mut self, x: Wire, y: Wire, kind: MulKind) -> Wire {
        let xy = self.mul(x, y, kind);
        let s = self.add(x, y);
        self.sub(s, xy)
    }

    /// XOR with a public bit is local.
    pub fn xor_public(&mut self, x: Wire, bit: bool) -> Wire {
        if bit {
            self.not(x)
        } else {
            x
        }
    }

    /// Conjunction of `literals`: `j` shared literals cost `j − 1` multiplications,
    /// arranged as a balanced tree to keep the round count logarithmic.
    pub fn and_all(&mut self, literals: &[Wire], kind: MulKind) -> Wire {
        if literals.is_empty() {
            return self.constant(1);
        }
        let mut layer = literals.to_vec();
        while layer.len() > 1 {
            let mut next = Vec::with_capacity(layer.len().div_ceil(2));
            for pair in layer.chunks(2) {
                next.push(match pair {
                    [a, b] => self.and(*a, *b, kind),
                    [a] => *a,
                    _ => unreachable!(),
                });
            }
            layer = next;
        }
        layer[0]
    }

    /// Strict comparison of a bit-shared value (LSB first) against a public
    /// bound, scanning from the most significant bit while keeping shared
    /// `lt` and `eq` flags. At most `2m` multiplications.
    pub fn compare_public(&mut self, bits: &[Wire], bound: u64, dir: Direction) -> Result<Wire, MpcError> {
        let width = bits.len() as u8;
        if width == 0 || width > 63 || bound >> width != 0 {
            return Err(MpcError::WidthMismatch { bound, width });
        }
        self.circuit.stats.comparisons += 1;
        let mut decided = self.constant(0);
        let mut eq = self.constant(1);
        for i in (0..bits.len()).rev() {
            let t = (bound >> i) & 1 == 1;
            let b = bits[i];
            // bit position where x and the bound first differ in the right direction
            let wins = match dir {
                Direction::Less if t => Some(self.not(b)),
                Direction::Greater if !t => Some(b),
                _ => None,
            };
            if let Some(w) = wins {
                let term = self.mul(eq, w, MulKind::Internal);
                decided = self.add(decided, term);
            }
            if i > 0 {
                let same = self.xor_public(b, t);
                let same = self.not(same);
                eq = self.mul(eq, same, MulKind::Internal);
            }
        }
        Ok(decided)
    }

    /// `Σ 2^i · bit_i`, local.
    pub fn bits_to_int(&mut self, bits: &[Wire]) -> Wire {
        let mut acc = self.constant(0);
        let mut weight = self.field.one();
        let two = self.field.elem(2);
        for &b in bits {
            let term = self.scale(b, weight);
            acc = self.add(acc, term);
            weight *= two;
        }
        acc
    }

    /// Opens `int − Σ 2^i bit_i` under `label`, and `r·b·(1−b)` for each bit
    /// under `label.b{i}`. An honest encoding opens only zeros.
    pub fn consistency_gadget(&mut self, label: &str, int: Option<Wire>, bits: &[Wire]) {
        if let Some(int) = int {
            let recombined = self.bits_to_int(bits);
            let d = self.sub(int, recombined);
            self.open(label.to_owned(), d);
        }
        for (i, &b) in bits.iter().enumerate() {
            let nb = self.not(b);
            let prod = self.mul(b, nb, MulKind::Internal);
            let r = self.random();
            let masked = self.mul(r, prod, MulKind::Internal);
            self.open(format!("{label}.b{i}"), masked);
        }
    }

    pub fn finish(self) -> Circuit {
        self.circuit
    }
}
