//! The institution server as a deterministic state machine.
//!
//! A [`Node`] consumes client and peer frames one at a time and returns the
//! frames it wants delivered. Transports (in-process queue or TCP) only move
//! bytes, so the same handlers run in simulation and in deployment.

mod protocols;
pub mod services;

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use trustworthy_core::canonical_json;
use trustworthy_core::mpc::Party;
use trustworthy_core::policy::{AccessPolicy, Action, Decision, Governance, Proposal, Vote};
use trustworthy_core::{Field, RandomStream};

use crate::auth::{self, PeerKeys, SessionKeys};
use crate::config::NodeConfig;
use crate::crypto::{self, AgreementKey, Key};
use crate::error::{NodeError, WireError};
use crate::proto::{AuthChallenge, AuthHello, AuthOk, AuthResponse, ErrorReply, PublishedStat, Reply, SurveyDef, UserEntry};
use crate::store::{self, Store};
use crate::wire::{self, Envelope, Kind};

pub use protocols::derive_mask;

pub use crate::transport::ConnId;

/// Sharing threshold of survey answers; BGW multiplication needs `2(k-1) < n`.
pub const SURVEY_SHARING_K: usize = 3;
/// Threshold of mail ciphertext shares.
pub const EMAIL_K: u8 = 3;

/// A frame the node wants delivered.
#[derive(Clone, Debug)]
pub enum Output {
    Client { conn: ConnId, frame: Vec<u8> },
    /// `envelope` is the plaintext of `frame`, kept for transcripts.
    Peer { to: u32, envelope: Envelope, frame: Vec<u8> },
}

struct PendingAuth {
    identity: String,
    public: Key,
    client_nonce: String,
    client_eph: String,
    node_nonce: String,
    node_eph: AgreementKey,
}

struct ClientSession {
    identity: String,
    keys: SessionKeys,
    last_in: u64,
    next_out: u64,
}

enum Conn {
    Pending(PendingAuth),
    Open(ClientSession),
}

/// A client request whose reply is produced later.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Waiter {
    conn: ConnId,
    re: u64,
}

/// Governance events, one canonical JSON line each in `decisions.log`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum GovEvent {
    Propose { proposal: Proposal, policy: AccessPolicy },
    Vote { vote: Vote },
    Decision { decision: Decision },
}

/// Lines of `results.log`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ResultEvent {
    Declare { survey: SurveyDef },
    Publish { stat: PublishedStat },
}

pub struct Node {
    cfg: NodeConfig,
    field: Field,
    peer_keys: BTreeMap<u32, PeerKeys>,
    institution_keys: BTreeMap<u32, Key>,
    store: Store,
    registry: BTreeMap<String, UserEntry>,
    gov: Governance,
    restricted: BTreeSet<String>,
    surveys: BTreeMap<String, SurveyDef>,
    published: Vec<PublishedStat>,
    rng: RandomStream,
    boot: String,
    counter: u64,
    conns: BTreeMap<ConnId, Conn>,
    seen_nonces: BTreeSet<String>,
    peer_in: BTreeMap<(String, u32), u64>,
    peer_out: BTreeMap<(String, u32), u64>,
    mpc: BTreeMap<String, protocols::MpcRun>,
    early: BTreeMap<String, Vec<(u32, Envelope)>>,
    /// Opened client envelopes, kept while tapping is on.
    tap: Option<Vec<Envelope>>,
    finished: BTreeSet<String>,
    reshares: BTreeMap<String, protocols::ReshareRun>,
    recovers: BTreeMap<String, protocols::RecoverRun>,
    replicas: BTreeMap<String, protocols::ReplicaRun>,
}

impl std::fmt::Debug for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Node").field("index", &self.cfg.index).finish_non_exhaustive()
    }
}

impl Node {
    /// Opens the node's stores. `incarnation` distinguishes restarts when the
    /// configuration fixes a seed.
    pub fn open(cfg: NodeConfig, incarnation: u64) -> Result<Self, NodeError> {
        let store = Store::open(&cfg.data_dir)?;
        let mut registry = BTreeMap::new();
        for line in store::read_lines(&cfg.user_registry_path)? {
            let e: UserEntry =
                serde_json::from_str(&line).map_err(|e| NodeError::StorageFailure(format!("registry: {e}")))?;
            registry.insert(e.user.clone(), e);
        }
        let mut rng = match cfg.seed {
            Some(s) => RandomStream::from_u64(s).fork(&format!("incarnation-{incarnation}")),
            None => RandomStream::from_entropy(),
        };
        let mut boot = [0u8; 6];
        rng.fill_bytes(&mut boot);
        let peer_keys = cfg.peers.iter().map(|(j, p)| (*j, PeerKeys::from_psk(&p.psk))).collect();
        let institution_keys = cfg.institution_keys();
        let mut node = Self {
            field: cfg.field_params.field,
            peer_keys,
            institution_keys,
            store,
            registry,
            gov: Governance::new(),
            restricted: BTreeSet::new(),
            surveys: BTreeMap::new(),
            published: Vec::new(),
            rng,
            boot: hex::encode(boot),
            counter: 0,
            conns: BTreeMap::new(),
            seen_nonces: BTreeSet::new(),
            peer_in: BTreeMap::new(),
            peer_out: BTreeMap::new(),
            mpc: BTreeMap::new(),
            early: BTreeMap::new(),
            tap: None,
            finished: BTreeSet::new(),
            reshares: BTreeMap::new(),
            recovers: BTreeMap::new(),
            replicas: BTreeMap::new(),
            cfg,
        };
        node.reload_state()?;
        Ok(node)
    }

    /// Rebuilds governance, surveys and published results from disk.
    fn reload_state(&mut self) -> Result<(), NodeError> {
        self.gov = Governance::new();
        self.restricted.clear();
        for line in self.store.read_log(store::DECISIONS)? {
            let ev: GovEvent =
                serde_json::from_str(&line).map_err(|e| NodeError::StorageFailure(format!("decision log: {e}")))?;
            if let Err(e) = self.replay_gov(ev) {
                log::warn!("node {}: skipping decision log entry: {e}", self.cfg.index);
            }
        }
        self.surveys.clear();
        for rec in self.store.records() {
            if let Some(id) = rec.record_id.strip_prefix("survey:") {
                if rec.kind == store::RecordKind::Blob {
                    let def: SurveyDef = serde_json::from_slice(&self.store.blob(&rec.record_id)?)
                        .map_err(|e| NodeError::StorageFailure(format!("survey {id}: {e}")))?;
                    self.surveys.insert(def.survey_id.clone(), def);
                }
            }
        }
        self.published.clear();
        for line in self.store.read_log(store::RESULTS)? {
            if let Ok(ResultEvent::Publish { stat }) = serde_json::from_str(&line) {
                self.published.push(stat);
            }
        }
        Ok(())
    }

    fn replay_gov(&mut self, ev: GovEvent) -> Result<(), NodeError> {
        match ev {
            GovEvent::Propose { proposal, policy } => {
                self.gov.propose(proposal, Some(&policy))?;
            }
            GovEvent::Vote { vote } => {
                let keys = self.institution_keys.clone();
                self.gov.cast(vote, &|v| verify_vote(&keys, v))?;
            }
            GovEvent::Decision { decision } => self.apply_decision(&decision)?,
        }
        Ok(())
    }

    pub fn index(&self) -> u32 {
        self.cfg.index
    }

    pub fn config(&self) -> &NodeConfig {
        &self.cfg
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn governance(&self) -> &Governance {
        &self.gov
    }

    pub fn registry(&self) -> &BTreeMap<String, UserEntry> {
        &self.registry
    }

    pub fn published(&self) -> &[PublishedStat] {
        &self.published
    }

    pub fn surveys(&self) -> &BTreeMap<String, SurveyDef> {
        &self.surveys
    }

    /// Starts or stops recording every opened client envelope.
    pub fn set_tap(&mut self, on: bool) {
        self.tap = on.then(Vec::new);
    }

    pub fn take_tap(&mut self) -> Vec<Envelope> {
        self.tap.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Open MPC sessions plus sessions with buffered early messages.
    pub fn session_count(&self) -> usize {
        self.mpc.len() + self.early.keys().filter(|k| !self.mpc.contains_key(*k)).count()
    }

    pub fn mpc_party(&self, session: &str) -> Option<&Party> {
        self.mpc.get(session).map(|r| &r.party)
    }

    fn me(&self) -> String {
        auth::node_address(self.cfg.index)
    }

    fn next_session(&mut self, prefix: &str) -> String {
        self.counter += 1;
        format!("{prefix}:{}:{}:{}", self.cfg.index, self.boot, self.counter)
    }

    pub fn close_conn(&mut self, conn: ConnId) {
        self.conns.remove(&conn);
    }

    // ---- client side -------------------------------------------------

    /// Handles one frame from a client connection.
    pub fn handle_client(&mut self, conn: ConnId, frame: &[u8]) -> Vec<Output> {
        let (tag, body) = match wire::split_frame(frame) {
            Ok(x) => x,
            Err(e) => return self.plain_error(conn, 0, e.into()),
        };
        if tag == wire::FRAME_PLAIN {
            let env = match Envelope::decode(body) {
                Ok(e) => e,
                Err(e) => return self.plain_error(conn, 0, e.into()),
            };
            let seq = env.seq;
            let res = match env.kind {
                Kind::AuthHello => self.auth_hello(conn, &env),
                Kind::AuthResponse => self.auth_response(conn, &env),
                k => Err(NodeError::NotAuthorized(format!("{} before authentication", k.name()))),
            };
            return match res {
                Ok(out) => out,
                Err(e) => {
                    if !matches!(e, NodeError::ReplayedNonce) {
                        self.conns.remove(&conn);
                    }
                    self.plain_error(conn, seq, e)
                }
            };
        }
        let Some(Conn::Open(sess)) = self.conns.get(&conn) else {
            return self.plain_error(conn, 0, NodeError::NotAuthorized("no session".into()));
        };
        let keys = sess.keys.clone();
        let opened = crypto::open(&keys.client_to_node, keys.session.as_bytes(), body)
            .map_err(NodeError::from)
            .and_then(|pt| Ok(Envelope::decode(&pt)?))
            .and_then(|env| {
                env.check_mac(&keys.mac)?;
                Ok(env)
            });
        let env = match opened {
            Ok(env) => env,
            Err(e) => return self.plain_error(conn, 0, e),
        };
        if let Some(t) = &mut self.tap {
            t.push(env.clone());
        }
        let Some(Conn::Open(sess)) = self.conns.get_mut(&conn) else {
            unreachable!("checked above")
        };
        if env.session != keys.session || env.from != sess.identity || env.to != auth::node_address(self.cfg.index) {
            let seq = env.seq;
            return self.reply(conn, seq, Err(NodeError::NotAuthorized("envelope addressing".into())));
        }
        if env.seq <= sess.last_in {
            let e = NodeError::BadSeq {
                session: env.session.clone(),
                from: env.from.clone(),
                seq: env.seq,
            };
            return self.reply(conn, env.seq, Err(e));
        }
        sess.last_in = env.seq;
        let identity = sess.identity.clone();
        let waiter = Waiter { conn, re: env.seq };
        let mut out = Vec::new();
        match self.dispatch_client(&identity, waiter, &env, &mut out) {
            Ok(Some(v)) => out.extend(self.reply(conn, env.seq, Ok(v))),
            Ok(None) => {}
            Err(e) => out.extend(self.reply(conn, env.seq, Err(e))),
        }
        out
    }

    fn auth_hello(&mut self, conn: ConnId, env: &Envelope) -> Result<Vec<Output>, NodeError> {
        let hello: AuthHello = env.body_as()?;
        let public = self.identity_key(&hello.identity)?;
        if !self.seen_nonces.insert(hello.nonce.clone()) {
            return Err(NodeError::ReplayedNonce);
        }
        crypto::parse_key(&hello.eph)?;
        let node_eph = AgreementKey::generate(&mut self.rng);
        let mut nonce = [0u8; 32];
        self.rng.fill_bytes(&mut nonce);
        let node_nonce = hex::encode(nonce);
        let t = auth::transcript(
            &hello.identity,
            self.cfg.index,
            &hello.nonce,
            &node_nonce,
            &hello.eph,
            &hex::encode(node_eph.public()),
        );
        let sig = self.cfg.institution.sign(&auth::node_signing_bytes(&t));
        let challenge = AuthChallenge {
            node: self.cfg.index,
            nonce: node_nonce.clone(),
            eph: hex::encode(node_eph.public()),
            signature: hex::encode(sig),
        };
        self.conns.insert(
            conn,
            Conn::Pending(PendingAuth {
                identity: hello.identity.clone(),
                public,
                client_nonce: hello.nonce,
                client_eph: hello.eph,
                node_nonce,
                node_eph,
            }),
        );
        let reply = Envelope::new("", env.seq, self.me(), hello.identity, Kind::AuthChallenge, wire::to_body(&challenge));
        Ok(vec![Output::Client {
            conn,
            frame: wire::plain_frame(&reply),
        }])
    }

    fn auth_response(&mut self, conn: ConnId, env: &Envelope) -> Result<Vec<Output>, NodeError> {
        let resp: AuthResponse = env.body_as()?;
        let Some(Conn::Pending(p)) = self.conns.remove(&conn) else {
            // the challenge for this connection was already consumed
            return Err(NodeError::ReplayedNonce);
        };
        let node_eph_pub = hex::encode(p.node_eph.public());
        let t = auth::transcript(&p.identity, self.cfg.index, &p.client_nonce, &p.node_nonce, &p.client_eph, &node_eph_pub);
        let sig = hex::decode(&resp.signature).map_err(|_| NodeError::BadChallengeResponse)?;
        if !crypto::verify(&p.public, &auth::client_signing_bytes(&t), &sig) {
            return Err(NodeError::BadChallengeResponse);
        }
        let shared = p.node_eph.agree(&crypto::parse_key(&p.client_eph)?);
        let keys = auth::derive_session(&shared, &t);
        let ok = AuthOk {
            session: keys.session.clone(),
        };
        let reply = Envelope::new(keys.session.clone(), env.seq, self.me(), p.identity.clone(), Kind::AuthOk, wire::to_body(&ok));
        self.conns.insert(
            conn,
            Conn::Open(ClientSession {
                identity: p.identity,
                keys,
                last_in: 0,
                next_out: 1,
            }),
        );
        Ok(vec![Output::Client {
            conn,
            frame: wire::plain_frame(&reply),
        }])
    }

    fn identity_key(&self, identity: &str) -> Result<Key, NodeError> {
        if let Some(i) = auth::institution_of(identity) {
            return self
                .institution_keys
                .get(&i)
                .copied()
                .ok_or_else(|| NodeError::UnknownIdentity(identity.to_owned()));
        }
        let user = identity
            .strip_prefix("user:")
            .ok_or_else(|| NodeError::UnknownIdentity(identity.to_owned()))?;
        let entry = self
            .registry
            .get(user)
            .ok_or_else(|| NodeError::UnknownIdentity(identity.to_owned()))?;
        Ok(crypto::parse_key(&entry.sign_pk)?)
    }

    fn plain_error(&self, conn: ConnId, re: u64, e: NodeError) -> Vec<Output> {
        let body = ErrorReply {
            re,
            error: e.name(),
            detail: e.to_string(),
        };
        let env = Envelope::new("", re, self.me(), "", Kind::Error, wire::to_body(&body));
        vec![Output::Client {
            conn,
            frame: wire::plain_frame(&env),
        }]
    }

    fn reply(&mut self, conn: ConnId, re: u64, result: Result<Value, NodeError>) -> Vec<Output> {
        let me = self.me();
        let Some(Conn::Open(sess)) = self.conns.get_mut(&conn) else {
            return Vec::new();
        };
        let (kind, body) = match result {
            Ok(value) => (Kind::Result, wire::to_body(&Reply { re, value })),
            Err(e) => {
                log::debug!("node {me}: request {re} failed: {e}");
                (
                    Kind::Error,
                    wire::to_body(&ErrorReply {
                        re,
                        error: e.name(),
                        detail: e.to_string(),
                    }),
                )
            }
        };
        let seq = sess.next_out;
        sess.next_out += 1;
        let env = Envelope::new(sess.keys.session.clone(), seq, me, sess.identity.clone(), kind, body).authenticate(&sess.keys.mac);
        let sealed = crypto::seal(&sess.keys.node_to_client, sess.keys.session.as_bytes(), &env.encode(), &mut self.rng);
        vec![Output::Client {
            conn,
            frame: wire::sealed_frame(sealed),
        }]
    }

    fn finish(&mut self, w: Option<Waiter>, result: Result<Value, NodeError>, out: &mut Vec<Output>) {
        if let Some(w) = w {
            out.extend(self.reply(w.conn, w.re, result));
        }
    }

    // ---- peer side ---------------------------------------------------

    fn peer_send(&mut self, to: u32, session: &str, kind: Kind, body: Value) -> Output {
        let seq = self.peer_out.entry((session.to_owned(), to)).or_insert(0);
        *seq += 1;
        let keys = &self.peer_keys[&to];
        let env = Envelope::new(session, *seq, self.me(), auth::node_address(to), kind, body).authenticate(&keys.mac);
        let sealed = crypto::seal(&keys.frame, &auth::peer_aad(self.cfg.index, to), &env.encode(), &mut self.rng);
        Output::Peer {
            to,
            envelope: env,
            frame: wire::sealed_frame(sealed),
        }
    }

    /// Authenticates and routes one frame from peer `from`.
    pub fn handle_peer(&mut self, from: u32, frame: &[u8]) -> Result<Vec<Output>, NodeError> {
        let env = self.open_peer_frame(from, frame)?;
        let key = (env.session.clone(), from);
        if self.peer_in.get(&key).is_some_and(|&last| env.seq <= last) {
            return Err(NodeError::BadSeq {
                session: env.session,
                from: env.from,
                seq: env.seq,
            });
        }
        let mut out = Vec::new();
        self.route_peer(from, &env, &mut out)?;
        self.peer_in.insert(key, env.seq);
        Ok(out)
    }

    /// Decrypts, parses and authenticates a peer frame without routing it.
    pub fn open_peer_frame(&self, from: u32, frame: &[u8]) -> Result<Envelope, NodeError> {
        let keys = self
            .peer_keys
            .get(&from)
            .ok_or_else(|| NodeError::UnknownIdentity(auth::node_address(from)))?;
        let (tag, body) = wire::split_frame(frame)?;
        if tag != wire::FRAME_SEALED {
            return Err(WireError::BadFrame("peer frames must be sealed".into()).into());
        }
        let pt = crypto::open(&keys.frame, &auth::peer_aad(from, self.cfg.index), body)?;
        let env = Envelope::decode(&pt)?;
        env.check_mac(&keys.mac)?;
        if env.from != auth::node_address(from) || env.to != self.me() {
            return Err(NodeError::NotAuthorized("peer envelope addressing".into()));
        }
        if !env.kind.is_peer() {
            return Err(NodeError::UnknownKind(env.kind.name().into()));
        }
        Ok(env)
    }

    // ---- governance helpers -----------------------------------------

    fn log_gov(&mut self, ev: &GovEvent) -> Result<(), NodeError> {
        self.store.append_log(store::DECISIONS, &canonical_json(ev))
    }

    fn apply_decision(&mut self, d: &Decision) -> Result<(), NodeError> {
        if !d.approved {
            return Ok(());
        }
        match d.action {
            Action::Restrict => {
                self.restricted.insert(d.target.clone());
            }
            Action::Unrestrict => {
                self.restricted.remove(&d.target);
            }
            Action::Discard => {
                self.erase_target(&d.target)?;
            }
            _ => {}
        }
        Ok(())
    }
}

pub fn verify_vote(keys: &BTreeMap<u32, Key>, v: &Vote) -> bool {
    let Some(pk) = keys.get(&(v.institution as u32)) else {
        return false;
    };
    let Ok(sig) = hex::decode(&v.signature) else {
        return false;
    };
    crypto::verify(pk, &v.body_bytes(), &sig)
}
