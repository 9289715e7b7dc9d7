//! Client end of the node protocol: mutual authentication and sealed
//! request/reply envelopes over any [`Transport`].

use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::auth::{self, SessionKeys};
use crate::crypto::{self, AgreementKey, Identity, Key};
use crate::error::{CryptoError, WireError};
use crate::proto::{AuthChallenge, AuthHello, AuthOk, AuthResponse, ErrorReply, Reply};
use crate::transport::{ConnId, Transport, TransportError};
use crate::wire::{self, Envelope, Kind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    /// The node answered with an `ERROR` envelope.
    #[error("{error}: {detail}")]
    Remote { error: String, detail: String },
    #[error("node signature did not verify")]
    BadServerSignature,
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

impl ClientError {
    /// Error name reported by the node, if this is a remote error.
    pub fn remote_name(&self) -> Option<&str> {
        match self {
            ClientError::Remote { error, .. } => Some(error),
            _ => None,
        }
    }
}

/// Who the client is: an identity string and its signing key.
#[derive(Clone, Debug)]
pub struct Credentials {
    pub identity: String,
    pub signer: Identity,
}

impl Credentials {
    pub fn user(name: &str, signer: Identity) -> Self {
        Self {
            identity: auth::user_identity(name),
            signer,
        }
    }

    pub fn institution(index: u32, signer: Identity) -> Self {
        Self {
            identity: auth::institution_identity(index),
            signer,
        }
    }
}

/// An authenticated session with one node.
#[derive(Debug)]
pub struct Session {
    pub node: u32,
    pub conn: ConnId,
    identity: String,
    keys: SessionKeys,
    next_seq: u64,
    last_in: u64,
}

fn remote(env: &Envelope) -> ClientError {
    match env.body_as::<ErrorReply>() {
        Ok(e) => ClientError::Remote {
            error: e.error,
            detail: e.detail,
        },
        Err(e) => e.into(),
    }
}

fn plain(frame: &[u8]) -> Result<Envelope, ClientError> {
    let (tag, body) = wire::split_frame(frame)?;
    if tag != wire::FRAME_PLAIN {
        return Err(ClientError::Protocol("expected a plain frame".into()));
    }
    let env = Envelope::decode(body)?;
    if env.kind == Kind::Error {
        return Err(remote(&env));
    }
    Ok(env)
}

/// Runs the challenge-response handshake with node `node`, whose institution
/// signing key is `node_key`.
pub fn handshake<R: RngCore + CryptoRng>(
    t: &mut dyn Transport,
    node: u32,
    node_key: &Key,
    creds: &Credentials,
    rng: &mut R,
) -> Result<Session, ClientError> {
    let conn = t.connect(node)?;
    let mut nonce = [0u8; 32];
    rng.fill_bytes(&mut nonce);
    let eph = AgreementKey::generate(rng);
    let hello = AuthHello {
        identity: creds.identity.clone(),
        nonce: hex::encode(nonce),
        eph: hex::encode(eph.public()),
    };
    let me = auth::node_address(node);
    let env = Envelope::new("", 1, &creds.identity, &me, Kind::AuthHello, wire::to_body(&hello));
    t.send(conn, wire::plain_frame(&env))?;
    let reply = plain(&t.recv(conn)?)?;
    if reply.kind != Kind::AuthChallenge {
        return Err(ClientError::Protocol(format!("expected AUTH_CHALLENGE, got {}", reply.kind.name())));
    }
    let ch: AuthChallenge = reply.body_as()?;
    if ch.node != node {
        return Err(ClientError::Protocol(format!("node {} answered for node {node}", ch.node)));
    }
    let t_bytes = auth::transcript(&creds.identity, node, &hello.nonce, &ch.nonce, &hello.eph, &ch.eph);
    let sig = hex::decode(&ch.signature).map_err(|_| ClientError::BadServerSignature)?;
    if !crypto::verify(node_key, &auth::node_signing_bytes(&t_bytes), &sig) {
        return Err(ClientError::BadServerSignature);
    }
    let resp = AuthResponse {
        signature: hex::encode(creds.signer.sign(&auth::client_signing_bytes(&t_bytes))),
    };
    let env = Envelope::new("", 2, &creds.identity, &me, Kind::AuthResponse, wire::to_body(&resp));
    t.send(conn, wire::plain_frame(&env))?;
    let ok = plain(&t.recv(conn)?)?;
    let ok: AuthOk = ok.body_as()?;
    let shared = eph.agree(&crypto::parse_key(&ch.eph)?);
    let keys = auth::derive_session(&shared, &t_bytes);
    if ok.session != keys.session {
        return Err(ClientError::Protocol("session id mismatch".into()));
    }
    Ok(Session {
        node,
        conn,
        identity: creds.identity.clone(),
        keys,
        next_seq: 1,
        last_in: 0,
    })
}

impl Session {
    pub fn id(&self) -> &str {
        &self.keys.session
    }

    /// Seals a request; returns its sequence number and frame.
    pub fn request_frame<T: Serialize, R: RngCore + CryptoRng>(&mut self, kind: Kind, body: &T, rng: &mut R) -> (u64, Vec<u8>) {
        let seq = self.next_seq;
        self.next_seq += 1;
        let env = Envelope::new(
            self.keys.session.clone(),
            seq,
            &self.identity,
            auth::node_address(self.node),
            kind,
            wire::to_body(body),
        )
        .authenticate(&self.keys.mac);
        let sealed = crypto::seal(&self.keys.client_to_node, self.keys.session.as_bytes(), &env.encode(), rng);
        (seq, wire::sealed_frame(sealed))
    }

    /// Opens a reply to request `seq`.
    pub fn read_reply(&mut self, frame: &[u8], seq: u64) -> Result<Value, ClientError> {
        let (tag, body) = wire::split_frame(frame)?;
        if tag == wire::FRAME_PLAIN {
            return Err(remote(&Envelope::decode(body)?));
        }
        let pt = crypto::open(&self.keys.node_to_client, self.keys.session.as_bytes(), body)?;
        let env = Envelope::decode(&pt)?;
        env.check_mac(&self.keys.mac)?;
        if env.session != self.keys.session || env.seq <= self.last_in {
            return Err(ClientError::Protocol("stale or foreign reply".into()));
        }
        self.last_in = env.seq;
        let re = match env.kind {
            Kind::Result => {
                let r: Reply = env.body_as()?;
                if r.re == seq {
                    return Ok(r.value);
                }
                r.re
            }
            Kind::Error => {
                let e: ErrorReply = env.body_as()?;
                if e.re == seq {
                    return Err(ClientError::Remote {
                        error: e.error,
                        detail: e.detail,
                    });
                }
                e.re
            }
            k => return Err(ClientError::Protocol(format!("unexpected {}", k.name()))),
        };
        Err(ClientError::Protocol(format!("reply to {re} while waiting for {seq}")))
    }

    pub fn call<T: Serialize, R: RngCore + CryptoRng>(
        &mut self,
        t: &mut dyn Transport,
        kind: Kind,
        body: &T,
        rng: &mut R,
    ) -> Result<Value, ClientError> {
        let (seq, frame) = self.request_frame(kind, body, rng);
        t.send(self.conn, frame)?;
        let reply = t.recv(self.conn)?;
        self.read_reply(&reply, seq)
    }
}

/// Sends one request per session, then collects every reply. Bodies are
/// produced per node so each receives only its own shares.
pub fn broadcast<T: Serialize, R: RngCore + CryptoRng>(
    t: &mut dyn Transport,
    sessions: &mut BTreeMap<u32, Session>,
    kind: Kind,
    mut body: impl FnMut(u32) -> T,
    rng: &mut R,
) -> BTreeMap<u32, Result<Value, ClientError>> {
    let mut sent = BTreeMap::new();
    let mut results = BTreeMap::new();
    for (&i, s) in sessions.iter_mut() {
        let (seq, frame) = s.request_frame(kind, &body(i), rng);
        match t.send(s.conn, frame) {
            Ok(()) => {
                sent.insert(i, seq);
            }
            Err(e) => {
                results.insert(i, Err(e.into()));
            }
        }
    }
    for (i, seq) in sent {
        let s = sessions.get_mut(&i).expect("sent above");
        let r = t.recv(s.conn).map_err(ClientError::from).and_then(|f| s.read_reply(&f, seq));
        results.insert(i, r);
    }
    results
}
