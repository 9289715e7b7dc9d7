//! User-facing services of the deployment: encrypted notes, key escrow,
//! threshold-shared email, privacy-preserving surveys and governance.
//!
//! Every operation runs against all five nodes through a [`Client`], which
//! holds one authenticated session per reachable node.

pub mod chunks;
pub mod email;
pub mod error;
pub mod governance;
pub mod keys;
pub mod notes;
pub mod survey;

use std::collections::BTreeMap;

use rand::RngCore;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use trustworthy_core::{Field, RandomStream, INSTITUTIONS};
use trustworthy_node::client::{self, ClientError, Credentials, Session};
use trustworthy_node::config::{DeploymentPlan, KeyValues};
use trustworthy_node::crypto::{self, AgreementKey, Identity, Key};
use trustworthy_node::transport::Transport;
use trustworthy_node::wire::Kind;
use trustworthy_node::NodeError;

pub use error::ServiceError;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

/// Majority of the five institutions.
pub const MAJORITY: usize = 3;

/// Public facts a client needs: the field and each node's signing key.
#[derive(Clone, Debug)]
pub struct Deployment {
    pub field: Field,
    pub node_keys: BTreeMap<u32, Key>,
}

impl Deployment {
    pub fn from_plan(plan: &DeploymentPlan) -> Self {
        Self {
            field: plan.field_params.field,
            node_keys: plan.institution_keys(),
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = u32> + '_ {
        self.node_keys.keys().copied()
    }
}

/// A user's long-term keys.
#[derive(Clone, Debug)]
pub struct UserKeys {
    pub name: String,
    pub signer: Identity,
    pub enc: AgreementKey,
}

impl UserKeys {
    pub fn generate<R: RngCore + rand::CryptoRng>(name: &str, rng: &mut R) -> Self {
        Self {
            name: name.to_owned(),
            signer: Identity::generate(rng),
            enc: AgreementKey::generate(rng),
        }
    }

    /// The public registry entry for these keys.
    pub fn entry(&self) -> trustworthy_node::proto::UserEntry {
        trustworthy_node::proto::UserEntry {
            user: self.name.clone(),
            sign_pk: hex::encode(self.signer.public()),
            enc_pk: hex::encode(self.enc.public()),
        }
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("user", &self.name);
        kv.set("sign_secret", hex::encode(self.signer.secret()));
        kv.set("enc_secret", hex::encode(self.enc.secret()));
        kv
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self, NodeError> {
        Ok(Self {
            name: kv.require("user")?.to_owned(),
            signer: Identity::from_secret(&kv.key("sign_secret")?),
            enc: AgreementKey::from_secret(&kv.key("enc_secret")?),
        })
    }

    pub fn credentials(&self) -> Credentials {
        Credentials::user(&self.name, self.signer.clone())
    }
}

/// Authenticated sessions with the nodes of one deployment.
pub struct Client<'t> {
    transport: &'t mut dyn Transport,
    deployment: Deployment,
    creds: Credentials,
    sessions: BTreeMap<u32, Session>,
    down: BTreeMap<u32, ClientError>,
    rng: RandomStream,
    clock: u64,
}

impl std::fmt::Debug for Client<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Client")
            .field("identity", &self.creds.identity)
            .field("sessions", &self.sessions.keys().collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

impl<'t> Client<'t> {
    pub fn new(transport: &'t mut dyn Transport, deployment: Deployment, creds: Credentials, rng: RandomStream) -> Self {
        Self {
            transport,
            deployment,
            creds,
            sessions: BTreeMap::new(),
            down: BTreeMap::new(),
            rng,
            clock: 0,
        }
    }

    pub fn identity(&self) -> &str {
        &self.creds.identity
    }

    pub fn field(&self) -> Field {
        self.deployment.field
    }

    pub(crate) fn rng(&mut self) -> &mut RandomStream {
        &mut self.rng
    }

    pub(crate) fn signer(&self) -> &Identity {
        &self.creds.signer
    }

    pub(crate) fn next_timestamp(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    pub(crate) fn random_id(&mut self) -> String {
        let mut b = [0u8; 16];
        self.rng.fill_bytes(&mut b);
        hex::encode(b)
    }

    /// Nodes that could not be reached on the last attempt.
    pub fn unreachable(&self) -> Vec<u32> {
        self.down.keys().copied().collect()
    }

    /// Opens sessions with every node that has none yet.
    pub fn connect(&mut self) {
        let nodes: Vec<(u32, Key)> = self.deployment.node_keys.iter().map(|(&i, k)| (i, *k)).collect();
        for (i, key) in nodes {
            if self.sessions.contains_key(&i) {
                continue;
            }
            match client::handshake(&mut *self.transport, i, &key, &self.creds, &mut self.rng) {
                Ok(s) => {
                    self.down.remove(&i);
                    self.sessions.insert(i, s);
                }
                Err(e) => {
                    self.down.insert(i, e);
                }
            }
        }
    }

    /// Closes every session.
    pub fn disconnect(&mut self) {
        for (_, s) in std::mem::take(&mut self.sessions) {
            self.transport.close(s.conn);
        }
    }

    /// Sends `kind` to every node and returns each node's answer. Nodes that
    /// cannot be reached appear with their transport error.
    pub fn broadcast<T: Serialize>(&mut self, kind: Kind, body: impl FnMut(u32) -> T) -> BTreeMap<u32, Result<Value, ClientError>> {
        self.connect();
        let mut out = client::broadcast(&mut *self.transport, &mut self.sessions, kind, body, &mut self.rng);
        for (&i, r) in &out {
            if matches!(r, Err(ClientError::Transport(_))) {
                if let Some(s) = self.sessions.remove(&i) {
                    self.transport.close(s.conn);
                }
            }
        }
        for (i, e) in &self.down {
            out.entry(*i).or_insert_with(|| Err(e.clone()));
        }
        out
    }

    /// Sends `kind` to one node.
    pub fn call<T: Serialize>(&mut self, node: u32, kind: Kind, body: &T) -> Result<Value> {
        self.connect();
        let s = match self.sessions.get_mut(&node) {
            Some(s) => s,
            None => {
                let e = self.down.get(&node).cloned().unwrap_or(ClientError::Protocol(format!("no node {node}")));
                return Err(ServiceError::from_node(node, e));
            }
        };
        let r = s.call(&mut *self.transport, kind, body, &mut self.rng);
        if matches!(r, Err(ClientError::Transport(_))) {
            if let Some(s) = self.sessions.remove(&node) {
                self.transport.close(s.conn);
            }
        }
        r.map_err(|e| ServiceError::from_node(node, e))
    }
}

/// Requires every node to succeed; returns the parsed replies.
pub(crate) fn all_ok<T: DeserializeOwned>(replies: BTreeMap<u32, Result<Value, ClientError>>) -> Result<BTreeMap<u32, T>> {
    let (ok, failed) = split(replies)?;
    if let Some(e) = dominant_error(failed) {
        return Err(e);
    }
    Ok(ok)
}

/// Keeps the successful replies; fails only if fewer than `need` succeeded.
pub(crate) fn at_least<T: DeserializeOwned>(replies: BTreeMap<u32, Result<Value, ClientError>>, need: usize) -> Result<BTreeMap<u32, T>> {
    let (ok, failed) = split(replies)?;
    if ok.len() < need {
        let have = ok.len();
        return Err(dominant_error(failed).unwrap_or(ServiceError::NotEnoughShares { have, need }));
    }
    Ok(ok)
}

type Split<T> = (BTreeMap<u32, T>, Vec<(u32, ClientError)>);

fn split<T: DeserializeOwned>(replies: BTreeMap<u32, Result<Value, ClientError>>) -> Result<Split<T>> {
    let mut ok = BTreeMap::new();
    let mut failed = Vec::new();
    for (i, r) in replies {
        match r {
            Ok(v) => {
                let parsed = serde_json::from_value(v).map_err(|e| ServiceError::Client {
                    node: i,
                    source: ClientError::Protocol(e.to_string()),
                })?;
                ok.insert(i, parsed);
            }
            Err(e) => failed.push((i, e)),
        }
    }
    Ok((ok, failed))
}

/// The most common remote error among `failed`, else the first failure.
fn dominant_error(failed: Vec<(u32, ClientError)>) -> Option<ServiceError> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for (_, e) in &failed {
        if let Some(n) = e.remote_name() {
            *counts.entry(n.to_owned()).or_default() += 1;
        }
    }
    let top = counts.iter().max_by_key(|(_, c)| **c).map(|(n, _)| n.clone());
    let pick = match top {
        Some(name) => failed.into_iter().find(|(_, e)| e.remote_name() == Some(name.as_str())),
        None => failed.into_iter().next(),
    };
    pick.map(|(i, e)| ServiceError::from_node(i, e))
}

/// The value reported by at least `MAJORITY` nodes.
pub(crate) fn majority<T: PartialEq + Clone>(values: impl IntoIterator<Item = T>) -> Option<T> {
    let values: Vec<T> = values.into_iter().collect();
    values
        .iter()
        .find(|v| values.iter().filter(|w| w == v).count() >= MAJORITY)
        .cloned()
}

pub(crate) fn sha256_hex(data: &[u8]) -> String {
    crypto::sha256_hex(data)
}

/// Number of parties in every sharing.
pub(crate) const N: usize = INSTITUTIONS;
