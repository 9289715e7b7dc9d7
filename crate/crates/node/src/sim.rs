//! Five nodes in one process, connected by per-link FIFO queues.
//!
//! Delivery order is chosen by a [`Scheduler`]; with a fixed scheduler and
//! node seeds every run produces the same envelopes in the same order.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::config::{DeploymentPlan, NodeConfig};
use crate::crypto;
use crate::error::NodeError;
use crate::node::{Node, Output};
use crate::transport::{ConnId, TransportError};
use crate::wire::Envelope;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheduler {
    /// Oldest pending message first.
    Fifo,
    /// A seeded random choice among links with pending messages.
    Random(u64),
}

/// One delivered (or dropped) peer envelope.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub from: u32,
    pub to: u32,
    pub envelope: Envelope,
    pub delivered: bool,
}

struct InFlight {
    order: u64,
    envelope: Envelope,
    frame: Vec<u8>,
}

pub struct SimNetwork {
    configs: BTreeMap<u32, NodeConfig>,
    nodes: BTreeMap<u32, Option<Node>>,
    incarnations: BTreeMap<u32, u64>,
    links: BTreeMap<(u32, u32), VecDeque<InFlight>>,
    order: u64,
    picker: Option<ChaCha20Rng>,
    conns: BTreeMap<ConnId, u32>,
    inbox: BTreeMap<ConnId, VecDeque<Vec<u8>>>,
    next_conn: ConnId,
    transcript: Vec<Delivery>,
    wire_log: Vec<Vec<u8>>,
    errors: Vec<(u32, u32, NodeError)>,
    /// Links that silently drop traffic, as (from, to).
    cut: BTreeSet<(u32, u32)>,
}

impl std::fmt::Debug for SimNetwork {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimNetwork")
            .field("nodes", &self.indices())
            .field("delivered", &self.transcript.len())
            .finish_non_exhaustive()
    }
}

impl SimNetwork {
    pub fn new(configs: Vec<NodeConfig>, scheduler: Scheduler) -> Result<Self, NodeError> {
        let mut nodes = BTreeMap::new();
        let mut map = BTreeMap::new();
        for cfg in configs {
            nodes.insert(cfg.index, Some(Node::open(cfg.clone(), 0)?));
            map.insert(cfg.index, cfg);
        }
        Ok(Self {
            incarnations: map.keys().map(|&i| (i, 0)).collect(),
            configs: map,
            nodes,
            links: BTreeMap::new(),
            order: 0,
            picker: match scheduler {
                Scheduler::Fifo => None,
                Scheduler::Random(s) => Some(ChaCha20Rng::seed_from_u64(s)),
            },
            conns: BTreeMap::new(),
            inbox: BTreeMap::new(),
            next_conn: 1,
            transcript: Vec::new(),
            wire_log: Vec::new(),
            errors: Vec::new(),
            cut: BTreeSet::new(),
        })
    }

    /// Writes the plan's configuration under `dir` and opens every node.
    pub fn from_plan(plan: &DeploymentPlan, dir: &Path, seed: Option<u64>, scheduler: Scheduler) -> Result<Self, NodeError> {
        plan.write(dir, seed)?;
        let configs = (1..=plan.addresses.len() as u32)
            .map(|i| plan.node_config(i, dir, seed.map(|s| s + i as u64)))
            .collect();
        Self::new(configs, scheduler)
    }

    pub fn indices(&self) -> Vec<u32> {
        self.nodes.keys().copied().collect()
    }

    pub fn node(&self, i: u32) -> Option<&Node> {
        self.nodes.get(&i).and_then(Option::as_ref)
    }

    pub fn node_mut(&mut self, i: u32) -> Option<&mut Node> {
        self.nodes.get_mut(&i).and_then(Option::as_mut)
    }

    pub fn config(&self, i: u32) -> &NodeConfig {
        &self.configs[&i]
    }

    pub fn is_up(&self, i: u32) -> bool {
        self.node(i).is_some()
    }

    /// Stops node `i`. With `wipe` its data directory and registry are lost.
    pub fn crash(&mut self, i: u32, wipe: bool) -> Result<(), NodeError> {
        if let Some(slot) = self.nodes.get_mut(&i) {
            *slot = None;
        }
        self.conns.retain(|_, n| *n != i);
        if wipe {
            let cfg = &self.configs[&i];
            if cfg.data_dir.exists() {
                std::fs::remove_dir_all(&cfg.data_dir)?;
            }
            if cfg.user_registry_path.exists() {
                std::fs::remove_file(&cfg.user_registry_path)?;
            }
        }
        Ok(())
    }

    pub fn restart(&mut self, i: u32) -> Result<(), NodeError> {
        let inc = self.incarnations.entry(i).or_default();
        *inc += 1;
        let node = Node::open(self.configs[&i].clone(), *inc)?;
        self.nodes.insert(i, Some(node));
        Ok(())
    }

    /// Drops all traffic from `from` to `to` until [`SimNetwork::heal`].
    pub fn cut_link(&mut self, from: u32, to: u32) {
        self.cut.insert((from, to));
    }

    pub fn heal(&mut self) {
        self.cut.clear();
    }

    pub fn transcript(&self) -> &[Delivery] {
        &self.transcript
    }

    /// Every frame that crossed the network, client and peer, as sent.
    pub fn wire_log(&self) -> &[Vec<u8>] {
        &self.wire_log
    }

    /// Errors raised by nodes while handling peer frames.
    pub fn errors(&self) -> &[(u32, u32, NodeError)] {
        &self.errors
    }

    /// SHA-256 over the canonical encoding of every delivered envelope.
    pub fn transcript_hash(&self) -> String {
        let mut all = Vec::new();
        for d in &self.transcript {
            all.extend(d.envelope.encode());
            all.push(b'\n');
        }
        crypto::sha256_hex(&all)
    }

    /// SHA-256 over every frame in the wire log, length-prefixed, in send order.
    pub fn wire_hash(&self) -> String {
        let mut all = Vec::new();
        for f in &self.wire_log {
            all.extend((f.len() as u64).to_be_bytes());
            all.extend(f);
        }
        crypto::sha256_hex(&all)
    }

    fn dispatch(&mut self, from: u32, outputs: Vec<Output>) {
        for o in outputs {
            match o {
                Output::Client { conn, frame } => {
                    self.wire_log.push(frame.clone());
                    if self.conns.contains_key(&conn) {
                        self.inbox.entry(conn).or_default().push_back(frame);
                    }
                }
                Output::Peer { to, envelope, frame } => {
                    self.wire_log.push(frame.clone());
                    self.order += 1;
                    self.links.entry((from, to)).or_default().push_back(InFlight {
                        order: self.order,
                        envelope,
                        frame,
                    });
                }
            }
        }
    }

    pub fn pending(&self) -> usize {
        self.links.values().map(VecDeque::len).sum()
    }

    fn pick_link(&mut self) -> Option<(u32, u32)> {
        let ready: Vec<(u32, u32)> = self
            .links
            .iter()
            .filter(|(_, q)| !q.is_empty())
            .map(|(k, _)| *k)
            .collect();
        if ready.is_empty() {
            return None;
        }
        Some(match &mut self.picker {
            None => *ready
                .iter()
                .min_by_key(|k| self.links[k].front().map(|m| m.order))
                .expect("non-empty"),
            Some(rng) => ready[rng.gen_range(0..ready.len())],
        })
    }

    /// Delivers one pending peer message. Returns false when none is pending.
    pub fn step(&mut self) -> bool {
        let Some((from, to)) = self.pick_link() else {
            return false;
        };
        let msg = self
            .links
            .get_mut(&(from, to))
            .and_then(VecDeque::pop_front)
            .expect("picked a non-empty link");
        let delivered = self.is_up(to) && !self.cut.contains(&(from, to));
        self.transcript.push(Delivery {
            from,
            to,
            envelope: msg.envelope.clone(),
            delivered,
        });
        if !delivered {
            if let Some(sender) = self.node_mut(from) {
                let out = sender.peer_unreachable(to, &msg.envelope);
                self.dispatch(from, out);
            }
            return true;
        }
        let node = self.node_mut(to).expect("checked up");
        match node.handle_peer(from, &msg.frame) {
            Ok(out) => self.dispatch(to, out),
            Err(e) => {
                log::debug!("node {to} rejected a frame from {from}: {e}");
                self.errors.push((from, to, e));
            }
        }
        true
    }

    pub fn run_until_idle(&mut self) -> usize {
        let mut n = 0;
        while self.step() {
            n += 1;
        }
        n
    }

    /// Hands an arbitrary frame to node `to` as if it came from peer `from`.
    pub fn inject_peer_frame(&mut self, from: u32, to: u32, frame: &[u8]) -> Result<(), NodeError> {
        let node = self
            .node_mut(to)
            .ok_or_else(|| NodeError::NotFound(format!("node {to}")))?;
        let out = node.handle_peer(from, frame)?;
        self.dispatch(to, out);
        Ok(())
    }

    pub fn connect(&mut self, node: u32) -> Result<ConnId, TransportError> {
        if !self.is_up(node) {
            return Err(TransportError::Unreachable(node));
        }
        let id = self.next_conn;
        self.next_conn += 1;
        self.conns.insert(id, node);
        Ok(id)
    }

    pub fn disconnect(&mut self, conn: ConnId) {
        if let Some(n) = self.conns.remove(&conn) {
            if let Some(node) = self.node_mut(n) {
                node.close_conn(conn);
            }
        }
        self.inbox.remove(&conn);
    }

    pub fn client_send(&mut self, conn: ConnId, frame: &[u8]) -> Result<(), TransportError> {
        let n = *self.conns.get(&conn).ok_or(TransportError::Closed)?;
        self.wire_log.push(frame.to_vec());
        let node = self.node_mut(n).ok_or(TransportError::Unreachable(n))?;
        let out = node.handle_client(conn, frame);
        self.dispatch(n, out);
        Ok(())
    }

    /// Runs the network until a frame for `conn` is available.
    pub fn client_recv(&mut self, conn: ConnId) -> Result<Vec<u8>, TransportError> {
        loop {
            if let Some(f) = self.inbox.get_mut(&conn).and_then(VecDeque::pop_front) {
                return Ok(f);
            }
            match self.conns.get(&conn) {
                None => return Err(TransportError::Closed),
                Some(&n) if !self.is_up(n) => return Err(TransportError::Unreachable(n)),
                Some(_) => {}
            }
            if !self.step() {
                return Err(TransportError::NoReply);
            }
        }
    }
}
