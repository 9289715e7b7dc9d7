//! One party's view of a circuit evaluation: a deterministic state machine
//! that consumes gate messages and emits the next round's messages.
//!
//! Interactive gates are grouped by depth. All gates of one depth form a round;
//! a party sends one batched message per peer and kind, waits for the matching
//! message from every party, finishes the round, evaluates the local gates
//! that became computable and moves on.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{MathError, MpcError};
use crate::field::{Fe, Field};
use crate::reshare::combine_subshares;
use crate::rng::RandomStream;
use crate::shamir::{reconstruct, share_with_coeffs, Share};

use super::circuit::{Circuit, Gate, InputRef};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MsgKind {
    MulReshare,
    OpenContrib,
    RandContrib,
}

impl MsgKind {
    pub fn wire_name(self) -> &'static str {
        match self {
            MsgKind::MulReshare => "MUL_RESHARE",
            MsgKind::OpenContrib => "OPEN_CONTRIB",
            MsgKind::RandContrib => "RAND_CONTRIB",
        }
    }

    pub fn from_wire_name(s: &str) -> Option<Self> {
        match s {
            "MUL_RESHARE" => Some(MsgKind::MulReshare),
            "OPEN_CONTRIB" => Some(MsgKind::OpenContrib),
            "RAND_CONTRIB" => Some(MsgKind::RandContrib),
            _ => None,
        }
    }

    fn of(g: &Gate) -> Option<Self> {
        match g {
            Gate::Mul(..) => Some(MsgKind::MulReshare),
            Gate::Open(..) => Some(MsgKind::OpenContrib),
            Gate::Random => Some(MsgKind::RandContrib),
            _ => None,
        }
    }
}

/// All gate payloads of one kind that `from` sends to `to` in one round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MpcMessage {
    pub session: String,
    pub round: u32,
    pub from: u32,
    pub to: u32,
    pub kind: MsgKind,
    pub items: Vec<(u32, Fe)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireItem {
    pub gate_id: u32,
    pub payload: String,
}

/// Field-agnostic serialized form of [`MpcMessage`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireMpcMessage {
    pub session: String,
    pub round: u32,
    pub from: u32,
    pub to: u32,
    pub items: Vec<WireItem>,
}

impl MpcMessage {
    pub fn to_wire(&self) -> WireMpcMessage {
        WireMpcMessage {
            session: self.session.clone(),
            round: self.round,
            from: self.from,
            to: self.to,
            items: self
                .items
                .iter()
                .map(|(g, v)| WireItem {
                    gate_id: *g,
                    payload: v.to_string(),
                })
                .collect(),
        }
    }

    pub fn from_wire(w: &WireMpcMessage, kind: MsgKind, field: Field) -> Result<Self, MathError> {
        Ok(Self {
            session: w.session.clone(),
            round: w.round,
            from: w.from,
            to: w.to,
            kind,
            items: w
                .items
                .iter()
                .map(|it| Ok((it.gate_id, field.parse(&it.payload)?)))
                .collect::<Result<_, MathError>>()?,
        })
    }
}

/// Resharing step of a multiplication: the local product `a·b` (a point on a
/// degree-2t polynomial) shared again with the given higher coefficients.
/// Entry `j - 1` is the sub-share for party `j`.
pub fn reshare_product(a: Fe, b: Fe, coeffs: &[Fe], n: usize) -> Result<Vec<Share>, MathError> {
    share_with_coeffs(a * b, coeffs, n)
}

/// Degree reduction: Lagrange-weighted sum at zero of the sub-shares received
/// from all parties.
pub fn degree_reduce(field: Field, me: u32, received: &BTreeMap<u32, Fe>) -> Result<Fe, MathError> {
    Ok(combine_subshares(field, me, received)?.value)
}

/// Passive BGW needs `2t < n` with `t = k − 1`.
pub fn check_honest_majority(k: usize, n: usize) -> Result<(), MpcError> {
    let t = k.saturating_sub(1);
    if 2 * t >= n {
        return Err(MpcError::ThresholdTooHigh { t, n });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartyConfig {
    pub session: String,
    pub index: u32,
    pub n: usize,
    pub k: usize,
    pub field: Field,
}

type Inbox = BTreeMap<u32, BTreeMap<(MsgKind, u32), Vec<(u32, Fe)>>>;

pub struct Party {
    cfg: PartyConfig,
    circuit: Arc<Circuit>,
    levels: Vec<u32>,
    max_level: u32,
    inputs: BTreeMap<InputRef, Fe>,
    values: Vec<Option<Fe>>,
    round: u32,
    started: bool,
    done: bool,
    inbox: Inbox,
    rng: RandomStream,
}

impl Party {
    pub fn new(
        cfg: PartyConfig,
        circuit: Arc<Circuit>,
        inputs: BTreeMap<InputRef, Fe>,
        rng: RandomStream,
    ) -> Result<Self, MpcError> {
        if circuit.needs_degree_reduction() {
            check_honest_majority(cfg.k, cfg.n)?;
        }
        if cfg.index == 0 || cfg.index as usize > cfg.n {
            return Err(MathError::InvalidIndex(cfg.index).into());
        }
        let levels = circuit.levels();
        let max_level = circuit.depth();
        let values = vec![None; circuit.gates.len()];
        Ok(Self {
            cfg,
            circuit,
            levels,
            max_level,
            inputs,
            values,
            round: 0,
            started: false,
            done: false,
            inbox: BTreeMap::new(),
            rng,
        })
    }

    pub fn index(&self) -> u32 {
        self.cfg.index
    }

    pub fn session(&self) -> &str {
        &self.cfg.session
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn current_round(&self) -> u32 {
        self.round
    }

    /// Interactive phases this party has completed.
    pub fn rounds_executed(&self) -> u32 {
        if self.done {
            self.max_level
        } else {
            self.round.saturating_sub(1)
        }
    }

    pub fn outputs(&self) -> BTreeMap<String, Fe> {
        self.collect(&self.circuit.outputs)
    }

    pub fn exports(&self) -> BTreeMap<String, Fe> {
        self.collect(&self.circuit.exports)
    }

    fn collect(&self, wires: &[(String, super::circuit::WireId)]) -> BTreeMap<String, Fe> {
        wires
            .iter()
            .filter_map(|(l, w)| self.values[w.0 as usize].map(|v| (l.clone(), v)))
            .collect()
    }

    fn value(&self, w: super::circuit::WireId) -> Fe {
        self.values[w.0 as usize].expect("operand evaluated before use")
    }

    fn eval_local(&mut self, level: u32) -> Result<(), MpcError> {
        let field = self.cfg.field;
        for idx in 0..self.circuit.gates.len() {
            if self.levels[idx] != level || self.values[idx].is_some() {
                continue;
            }
            let v = match &self.circuit.gates[idx] {
                Gate::Input(r) => *self
                    .inputs
                    .get(r)
                    .ok_or_else(|| MpcError::MissingInput(r.to_string()))?,
                Gate::Const(c) => field.elem(*c),
                Gate::Add(a, b) => self.value(*a) + self.value(*b),
                Gate::Sub(a, b) => self.value(*a) - self.value(*b),
                Gate::Scale(a, c) => self.value(*a) * field.elem(*c),
                _ => continue,
            };
            self.values[idx] = Some(v);
        }
        Ok(())
    }

    /// Evaluates depth-0 gates and emits round-1 messages.
    pub fn start(&mut self) -> Result<Vec<MpcMessage>, MpcError> {
        if self.started {
            return Ok(Vec::new());
        }
        self.started = true;
        self.eval_local(0)?;
        self.begin_round(1)
    }

    fn begin_round(&mut self, r: u32) -> Result<Vec<MpcMessage>, MpcError> {
        self.round = r;
        if r > self.max_level {
            self.done = true;
            return Ok(Vec::new());
        }
        let n = self.cfg.n;
        let k = self.cfg.k;
        let field = self.cfg.field;
        let mut per_dest: BTreeMap<(MsgKind, u32), Vec<(u32, Fe)>> = BTreeMap::new();
        for idx in 0..self.circuit.gates.len() {
            if self.levels[idx] != r {
                continue;
            }
            let gate = self.circuit.gates[idx].clone();
            let Some(kind) = MsgKind::of(&gate) else { continue };
            let row: Vec<Fe> = match gate {
                Gate::Mul(a, b) => {
                    let coeffs: Vec<Fe> = (1..k).map(|_| field.random(&mut self.rng)).collect();
                    reshare_product(self.value(a), self.value(b), &coeffs, n)?
                        .into_iter()
                        .map(|s| s.value)
                        .collect()
                }
                Gate::Random => {
                    let coeffs: Vec<Fe> = (0..k).map(|_| field.random(&mut self.rng)).collect();
                    share_with_coeffs(coeffs[0], &coeffs[1..], n)?
                        .into_iter()
                        .map(|s| s.value)
                        .collect()
                }
                Gate::Open(a) => vec![self.value(a); n],
                _ => unreachable!(),
            };
            for (j, v) in row.into_iter().enumerate() {
                per_dest.entry((kind, j as u32 + 1)).or_default().push((idx as u32, v));
            }
        }
        let mut out = Vec::new();
        for ((kind, to), items) in per_dest {
            let msg = MpcMessage {
                session: self.cfg.session.clone(),
                round: r,
                from: self.cfg.index,
                to,
                kind,
                items,
            };
            if to == self.cfg.index {
                self.stash(msg)?;
            } else {
                out.push(msg);
            }
        }
        out.extend(self.try_complete()?);
        Ok(out)
    }

    fn stash(&mut self, msg: MpcMessage) -> Result<(), MpcError> {
        let slot = self.inbox.entry(msg.round).or_default();
        if slot.contains_key(&(msg.kind, msg.from)) {
            let gate = msg.items.first().map(|i| i.0).unwrap_or(0);
            return Err(MpcError::DuplicateMessage { from: msg.from, gate });
        }
        slot.insert((msg.kind, msg.from), msg.items);
        Ok(())
    }

    /// Accepts a peer message; may complete the current round and emit the next.
    pub fn receive(&mut self, msg: MpcMessage) -> Result<Vec<MpcMessage>, MpcError> {
        if msg.session != self.cfg.session || msg.to != self.cfg.index {
            return Err(MpcError::RoundDesync {
                expected: self.round,
                got: msg.round,
            });
        }
        if msg.from == 0 || msg.from as usize > self.cfg.n {
            return Err(MathError::InvalidIndex(msg.from).into());
        }
        // a peer can be at most one round ahead of us
        let lowest = self.round.max(1);
        if self.done || msg.round < lowest || msg.round > lowest + 1 {
            return Err(MpcError::RoundDesync {
                expected: self.round,
                got: msg.round,
            });
        }
        self.stash(msg)?;
        if !self.started {
            return Ok(Vec::new());
        }
        self.try_complete()
    }

    fn expected_kinds(&self, r: u32) -> Vec<MsgKind> {
        let mut kinds: Vec<MsgKind> = self
            .circuit
            .gates
            .iter()
            .zip(&self.levels)
            .filter(|(_, &l)| l == r)
            .filter_map(|(g, _)| MsgKind::of(g))
            .collect();
        kinds.sort();
        kinds.dedup();
        kinds
    }

    fn try_complete(&mut self) -> Result<Vec<MpcMessage>, MpcError> {
        let r = self.round;
        if self.done || r == 0 {
            return Ok(Vec::new());
        }
        let kinds = self.expected_kinds(r);
        let n = self.cfg.n as u32;
        let Some(slot) = self.inbox.get(&r) else {
            return Ok(Vec::new());
        };
        let complete = kinds
            .iter()
            .all(|&kind| (1..=n).all(|from| slot.contains_key(&(kind, from))));
        if !complete {
            return Ok(Vec::new());
        }
        let slot = self.inbox.remove(&r).expect("checked above");
        // gate -> (from -> payload)
        let mut by_gate: BTreeMap<u32, BTreeMap<u32, Fe>> = BTreeMap::new();
        for ((_, from), items) in slot {
            for (g, v) in items {
                by_gate.entry(g).or_default().insert(from, v);
            }
        }
        let field = self.cfg.field;
        for idx in 0..self.circuit.gates.len() {
            if self.levels[idx] != r || !self.circuit.gates[idx].is_interactive() {
                continue;
            }
            let received = by_gate.get(&(idx as u32)).filter(|m| m.len() == self.cfg.n).ok_or(
                MpcError::RoundDesync {
                    expected: r,
                    got: r,
                },
            )?;
            let v = match self.circuit.gates[idx] {
                Gate::Mul(..) => degree_reduce(field, self.cfg.index, received)?,
                Gate::Random => received.values().copied().sum(),
                Gate::Open(..) => {
                    let shares: Vec<Share> = received.iter().map(|(&i, &v)| Share::new(i, v)).collect();
                    reconstruct(&shares, self.cfg.k).map_err(|_| MpcError::OpenFailed)?
                }
                _ => unreachable!(),
            };
            self.values[idx] = Some(v);
        }
        self.eval_local(r)?;
        self.begin_round(r + 1)
    }
}
