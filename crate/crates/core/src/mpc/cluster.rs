//! In-process execution of `n` parties with FIFO message delivery.
//!
//! Each operation compiles a small circuit, runs one [`Party`] per node and
//! returns the exported shares as a new [`SharedValue`]. The message
//! transcript is kept for inspection.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use rand::RngCore;

use crate::error::MpcError;
use crate::field::{Fe, Field};
use crate::rng::RandomStream;
use crate::shamir::Share;

use super::circuit::{Circuit, CircuitBuilder, CircuitStats, Direction, InputRef, MulKind, Wire};
use super::party::{MpcMessage, Party, PartyConfig};
use super::value::{check_width, BoolOp, Operand, Repr, SharedValue, ValueId};

/// Result of running a circuit on every party.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    /// Opened values (identical at every party).
    pub outputs: BTreeMap<String, Fe>,
    /// `exports[label][j]` is node `j + 1`'s share.
    pub exports: BTreeMap<String, Vec<Share>>,
    pub rounds: u32,
}

pub struct LocalCluster {
    field: Field,
    k: usize,
    n: usize,
    rng: RandomStream,
    sessions: u64,
    stats: CircuitStats,
    transcript: Vec<MpcMessage>,
}

impl LocalCluster {
    pub fn new(field: Field, k: usize, n: usize, seed: u64) -> Self {
        Self {
            field,
            k,
            n,
            rng: RandomStream::from_u64(seed),
            sessions: 0,
            stats: CircuitStats::default(),
            transcript: Vec::new(),
        }
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Accumulated gate counts and executed rounds.
    pub fn stats(&self) -> CircuitStats {
        self.stats
    }

    pub fn transcript(&self) -> &[MpcMessage] {
        &self.transcript
    }

    pub fn rng(&mut self) -> &mut RandomStream {
        &mut self.rng
    }

    /// Client-side input of a secret.
    pub fn input(&mut self, secret: u64, repr: Repr, width: u8, policy: Option<String>) -> Result<SharedValue, MpcError> {
        SharedValue::input(self.field, secret, repr, width, self.k, self.n, policy, &mut self.rng)
    }

    /// Runs `circuit` with per-node inputs.
    pub fn run(
        &mut self,
        circuit: Circuit,
        inputs: impl Fn(u32) -> BTreeMap<InputRef, Fe>,
    ) -> Result<RunOutcome, MpcError> {
        self.sessions += 1;
        let session = format!("local-{}", self.sessions);
        let circuit = Arc::new(circuit);
        let mut parties = (1..=self.n as u32)
            .map(|i| {
                Party::new(
                    PartyConfig {
                        session: session.clone(),
                        index: i,
                        n: self.n,
                        k: self.k,
                        field: self.field,
                    },
                    circuit.clone(),
                    inputs(i),
                    self.rng.fork(&format!("{session}/party-{i}")),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut queue: VecDeque<MpcMessage> = VecDeque::new();
        for p in parties.iter_mut() {
            queue.extend(p.start()?);
        }
        while let Some(msg) = queue.pop_front() {
            self.transcript.push(msg.clone());
            let to = msg.to as usize - 1;
            queue.extend(parties[to].receive(msg)?);
        }
        if !parties.iter().all(Party::is_done) {
            return Err(MpcError::RoundDesync {
                expected: circuit.depth(),
                got: parties[0].current_round(),
            });
        }
        let outputs = parties[0].outputs();
        if parties.iter().any(|p| p.outputs() != outputs) {
            return Err(MpcError::OpenFailed);
        }
        let mut exports: BTreeMap<String, Vec<Share>> = BTreeMap::new();
        for p in &parties {
            for (label, v) in p.exports() {
                exports.entry(label).or_default().push(Share::new(p.index(), v));
            }
        }
        let rounds = parties[0].rounds_executed();
        let mut stats = circuit.stats;
        stats.rounds = rounds;
        self.stats.accumulate(&stats);
        Ok(RunOutcome {
            outputs,
            exports,
            rounds,
        })
    }

    fn bind_inputs(b: &mut CircuitBuilder, v: &SharedValue, tag: &str) -> (Option<Wire>, Vec<Wire>) {
        let int = v.int_shares.as_ref().map(|_| b.input(InputRef::new(format!("{tag}.int"))));
        let bits = (0..v.bit_shares.len())
            .map(|i| b.input(InputRef::new(format!("{tag}.b{i}"))))
            .collect();
        (int, bits)
    }

    fn node_inputs(values: &[(&str, &SharedValue)], node: u32) -> BTreeMap<InputRef, Fe> {
        let mut m = BTreeMap::new();
        for (tag, v) in values {
            let s = v.node_shares(node);
            if let Some(int) = s.int {
                m.insert(InputRef::new(format!("{tag}.int")), int);
            }
            for (i, b) in s.bits.into_iter().enumerate() {
                m.insert(InputRef::new(format!("{tag}.b{i}")), b);
            }
        }
        m
    }

    /// Integer view used by arithmetic: the int component, or a single bit.
    fn int_wire(v: &SharedValue, int: Option<Wire>, bits: &[Wire]) -> Result<Wire, MpcError> {
        match int {
            Some(w) => Ok(w),
            None if v.is_single_bit() => Ok(bits[0]),
            None => Err(MpcError::ReprMismatch),
        }
    }

    fn new_int(&mut self, out: RunOutcome, policy: Option<String>) -> SharedValue {
        let shares = out.exports.get("out").cloned().unwrap_or_default();
        SharedValue::from_int_shares(ValueId(self.rng.next_u64()), shares, self.k, policy)
    }

    fn new_bit(&mut self, out: RunOutcome, policy: Option<String>) -> SharedValue {
        let shares = out.exports.get("out").cloned().unwrap_or_default();
        SharedValue {
            id: ValueId(self.rng.next_u64()),
            repr: Repr::BitsOnly,
            k: self.k,
            int_shares: None,
            bit_shares: vec![shares],
            width: 1,
            policy_ref: policy,
        }
    }

    fn check_compatible(&self, v: &SharedValue) -> Result<(), MpcError> {
        if v.k != self.k || v.n() != self.n {
            return Err(MpcError::ReprMismatch);
        }
        Ok(())
    }

    /// Node-local addition; zero rounds.
    pub fn add(&mut self, a: &SharedValue, b: Operand) -> Result<SharedValue, MpcError> {
        self.check_compatible(a)?;
        let mut builder = CircuitBuilder::new(self.field);
        let (ai, ab) = Self::bind_inputs(&mut builder, a, "a");
        let x = Self::int_wire(a, ai, &ab)?;
        let (y, vals): (Wire, Vec<(&str, &SharedValue)>) = match b {
            Operand::Public(c) => (builder.constant(c), vec![("a", a)]),
            Operand::Shared(bv) => {
                self.check_compatible(bv)?;
                let (bi, bb) = Self::bind_inputs(&mut builder, bv, "b");
                (Self::int_wire(bv, bi, &bb)?, vec![("a", a), ("b", bv)])
            }
        };
        let s = builder.add(x, y);
        builder.export("out", s);
        let out = self.run(builder.finish(), |i| Self::node_inputs(&vals, i))?;
        let policy = a.policy_ref.clone();
        Ok(self.new_int(out, policy))
    }

    /// One resharing round.
    pub fn mul(&mut self, a: &SharedValue, b: &SharedValue) -> Result<SharedValue, MpcError> {
        self.check_compatible(a)?;
        self.check_compatible(b)?;
        let mut builder = CircuitBuilder::new(self.field);
        let (ai, ab) = Self::bind_inputs(&mut builder, a, "a");
        let (bi, bb) = Self::bind_inputs(&mut builder, b, "b");
        let x = Self::int_wire(a, ai, &ab)?;
        let y = Self::int_wire(b, bi, &bb)?;
        let p = builder.mul(x, y, MulKind::TopLevel);
        builder.export("out", p);
        let out = self.run(builder.finish(), |i| Self::node_inputs(&[("a", a), ("b", b)], i))?;
        let bits = a.is_single_bit() && b.is_single_bit();
        let policy = a.policy_ref.clone();
        Ok(if bits { self.new_bit(out, policy) } else { self.new_int(out, policy) })
    }

    pub fn bool_op(&mut self, op: BoolOp, operands: &[&SharedValue]) -> Result<SharedValue, MpcError> {
        let arity = if op == BoolOp::Not { 1 } else { 2 };
        if operands.len() != arity || operands.iter().any(|v| !v.is_single_bit()) {
            return Err(MpcError::ReprMismatch);
        }
        for v in operands {
            self.check_compatible(v)?;
        }
        let mut builder = CircuitBuilder::new(self.field);
        let tags = ["a", "b"];
        let wires: Vec<Wire> = operands
            .iter()
            .zip(tags)
            .map(|(v, t)| Self::bind_inputs(&mut builder, v, t).1[0])
            .collect();
        let r = match op {
            BoolOp::Not => builder.not(wires[0]),
            BoolOp::And => builder.and(wires[0], wires[1], MulKind::TopLevel),
            BoolOp::Or => builder.or(wires[0], wires[1], MulKind::TopLevel),
            BoolOp::Xor => builder.xor(wires[0], wires[1], MulKind::TopLevel),
        };
        builder.export("out", r);
        let vals: Vec<(&str, &SharedValue)> = tags.iter().copied().zip(operands.iter().copied()).collect();
        let out = self.run(builder.finish(), |i| Self::node_inputs(&vals, i))?;
        let policy = operands[0].policy_ref.clone();
        Ok(self.new_bit(out, policy))
    }

    pub fn compare_public(&mut self, x: &SharedValue, bound: u64, dir: Direction) -> Result<SharedValue, MpcError> {
        self.check_compatible(x)?;
        if x.repr == Repr::IntOnly {
            return Err(MpcError::ReprMismatch);
        }
        let mut builder = CircuitBuilder::new(self.field);
        let (_, bits) = Self::bind_inputs(&mut builder, x, "x");
        let r = builder.compare_public(&bits, bound, dir)?;
        builder.export("out", r);
        let out = self.run(builder.finish(), |i| Self::node_inputs(&[("x", x)], i))?;
        let policy = x.policy_ref.clone();
        Ok(self.new_bit(out, policy))
    }

    /// Local recombination `Σ 2^i·bit_i`.
    pub fn bits_to_int(&mut self, x: &SharedValue) -> Result<SharedValue, MpcError> {
        self.check_compatible(x)?;
        if x.repr == Repr::IntOnly {
            return Err(MpcError::ReprMismatch);
        }
        check_width(self.field, x.width)?;
        let mut builder = CircuitBuilder::new(self.field);
        let (_, bits) = Self::bind_inputs(&mut builder, x, "x");
        let v = builder.bits_to_int(&bits);
        builder.export("out", v);
        let out = self.run(builder.finish(), |i| Self::node_inputs(&[("x", x)], i))?;
        let policy = x.policy_ref.clone();
        Ok(self.new_int(out, policy))
    }

    /// Opens `int − Σ 2^i·bit_i` and a randomized booleanity test per bit;
    /// accepts iff every opened value is zero.
    pub fn consistency_check(&mut self, x: &SharedValue) -> Result<bool, MpcError> {
        self.check_compatible(x)?;
        if x.repr != Repr::Dual {
            return Err(MpcError::ReprMismatch);
        }
        let mut builder = CircuitBuilder::new(self.field);
        let (int, bits) = Self::bind_inputs(&mut builder, x, "x");
        builder.consistency_gadget("x", int, &bits);
        let out = self.run(builder.finish(), |i| Self::node_inputs(&[("x", x)], i))?;
        Ok(out.outputs.values().all(Fe::is_zero))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::value::Authorization;

    fn open(v: &SharedValue) -> u64 {
        let mut v = v.clone();
        v.policy_ref = None;
        let all: Vec<u32> = (1..=v.n() as u32).collect();
        v.open(&Authorization::PublicAggregate, &all).unwrap().value()
    }

    #[test]
    fn add_and_mul_examples() {
        let f = Field::new(31).unwrap();
        let mut c = LocalCluster::new(f, 3, 5, 1);
        let a = c.input(3, Repr::IntOnly, 0, None).unwrap();
        let b = c.input(4, Repr::IntOnly, 0, None).unwrap();
        assert_eq!(open(&c.add(&a, Operand::Shared(&b)).unwrap()), 7);
        assert_eq!(open(&c.add(&a, Operand::Public(0)).unwrap()), 3);
        assert_eq!(open(&c.add(&a, Operand::Public(30)).unwrap()), 2);
        assert_eq!(c.stats().rounds, 0);
        assert_eq!(open(&c.mul(&a, &b).unwrap()), 12);
        assert_eq!(c.stats().rounds, 1);
        let z = c.input(0, Repr::IntOnly, 0, None).unwrap();
        assert_eq!(open(&c.mul(&z, &b).unwrap()), 0);
    }

    #[test]
    fn threshold_too_high_for_mul() {
        let f = Field::new(31).unwrap();
        let mut c = LocalCluster::new(f, 3, 4, 1);
        let a = c.input(3, Repr::IntOnly, 0, None).unwrap();
        assert_eq!(c.mul(&a, &a), Err(MpcError::ThresholdTooHigh { t: 2, n: 4 }));
        // linear operations still work
        assert_eq!(open(&c.add(&a, Operand::Shared(&a)).unwrap()), 6);
    }

    #[test]
    fn boolean_gates() {
        let f = Field::mersenne61();
        let mut c = LocalCluster::new(f, 3, 5, 2);
        for x in [false, true] {
            let xv = c.input(x as u64, Repr::BitsOnly, 1, None).unwrap();
            assert_eq!(open(&c.bool_op(BoolOp::Xor, &[&xv, &xv]).unwrap()), 0);
            let nx = c.bool_op(BoolOp::Not, &[&xv]).unwrap();
            assert_eq!(open(&c.bool_op(BoolOp::Not, &[&nx]).unwrap()), x as u64);
            for y in [false, true] {
                let yv = c.input(y as u64, Repr::BitsOnly, 1, None).unwrap();
                assert_eq!(open(&c.bool_op(BoolOp::And, &[&xv, &yv]).unwrap()), (x && y) as u64);
                assert_eq!(open(&c.bool_op(BoolOp::Or, &[&xv, &yv]).unwrap()), (x || y) as u64);
                assert_eq!(open(&c.bool_op(BoolOp::Xor, &[&xv, &yv]).unwrap()), (x ^ y) as u64);
            }
        }
    }

    #[test]
    fn comparison_examples() {
        let f = Field::mersenne61();
        let mut c = LocalCluster::new(f, 3, 5, 3);
        let five = c.input(5, Repr::Dual, 4, None).unwrap();
        let nine = c.input(9, Repr::Dual, 4, None).unwrap();
        assert_eq!(open(&c.compare_public(&five, 9, Direction::Less).unwrap()), 1);
        assert_eq!(open(&c.compare_public(&nine, 9, Direction::Less).unwrap()), 0);
        assert_eq!(open(&c.compare_public(&nine, 5, Direction::Greater).unwrap()), 1);
        assert_eq!(open(&c.compare_public(&nine, 9, Direction::Greater).unwrap()), 0);
        assert!(matches!(
            c.compare_public(&five, 16, Direction::Less),
            Err(MpcError::WidthMismatch { .. })
        ));
    }

    #[test]
    fn bits_to_int_and_consistency() {
        let f = Field::mersenne61();
        let mut c = LocalCluster::new(f, 3, 5, 4);
        let x = c.input(13, Repr::Dual, 4, None).unwrap();
        let as_bits = SharedValue {
            repr: Repr::BitsOnly,
            int_shares: None,
            ..x.clone()
        };
        assert_eq!(open(&c.bits_to_int(&as_bits).unwrap()), 13);
        assert!(c.consistency_check(&x).unwrap());

        // int 13 with bits of 12
        let twelve = c.input(12, Repr::Dual, 4, None).unwrap();
        let mut bad = x.clone();
        bad.bit_shares = twelve.bit_shares.clone();
        assert!(!c.consistency_check(&bad).unwrap());
    }

    #[test]
    fn booleanity_catches_non_bit_share() {
        // bits (2, 0, 1, 1) with int 14: the difference opens to zero, the
        // booleanity test does not
        let f = Field::mersenne61();
        let mut c = LocalCluster::new(f, 3, 5, 5);
        let int = c.input(14, Repr::IntOnly, 0, None).unwrap();
        let two = c.input(2, Repr::IntOnly, 0, None).unwrap();
        let rest = c.input(0b1100, Repr::BitsOnly, 4, None).unwrap();
        let mut bits = rest.bit_shares.clone();
        bits[0] = two.int_shares.clone().unwrap();
        let bad = SharedValue {
            repr: Repr::Dual,
            int_shares: int.int_shares.clone(),
            bit_shares: bits,
            width: 4,
            ..int
        };
        assert!(!c.consistency_check(&bad).unwrap());
    }
}
