//! Mutual challenge-response authentication and session key derivation.
//!
//! The client sends its identity, a fresh nonce and an ephemeral X25519 key.
//! The node answers with its own nonce and ephemeral key and signs the whole
//! transcript with its institution key; the client checks that signature and
//! signs the transcript in turn. Session keys come from the ephemeral
//! agreement bound to the transcript hash.

use serde::Serialize;
use trustworthy_core::canonical_json;

use crate::crypto::{hkdf, sha256, Key};

#[derive(Serialize)]
struct Transcript<'a> {
    identity: &'a str,
    node: u32,
    client_nonce: &'a str,
    node_nonce: &'a str,
    client_eph: &'a str,
    node_eph: &'a str,
}

pub fn transcript(identity: &str, node: u32, client_nonce: &str, node_nonce: &str, client_eph: &str, node_eph: &str) -> Vec<u8> {
    canonical_json(&Transcript {
        identity,
        node,
        client_nonce,
        node_nonce,
        client_eph,
        node_eph,
    })
    .into_bytes()
}

pub fn node_signing_bytes(transcript: &[u8]) -> Vec<u8> {
    [b"auth/node/".as_slice(), transcript].concat()
}

pub fn client_signing_bytes(transcript: &[u8]) -> Vec<u8> {
    [b"auth/client/".as_slice(), transcript].concat()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionKeys {
    pub session: String,
    pub client_to_node: Key,
    pub node_to_client: Key,
    pub mac: Key,
}

pub fn derive_session(shared: &Key, transcript: &[u8]) -> SessionKeys {
    let th = sha256(transcript);
    SessionKeys {
        session: hex::encode(&th[..12]),
        client_to_node: hkdf(shared, &th, "client-to-node"),
        node_to_client: hkdf(shared, &th, "node-to-client"),
        mac: hkdf(shared, &th, "envelope-mac"),
    }
}

/// Symmetric keys for one pair of institutions, derived from their
/// pre-shared key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeerKeys {
    pub frame: Key,
    pub mac: Key,
}

impl PeerKeys {
    pub fn from_psk(psk: &Key) -> Self {
        Self {
            frame: hkdf(psk, b"peer", "frame"),
            mac: hkdf(psk, b"peer", "envelope-mac"),
        }
    }
}

pub fn peer_aad(from: u32, to: u32) -> Vec<u8> {
    format!("node:{from}->node:{to}").into_bytes()
}

pub fn user_identity(name: &str) -> String {
    format!("user:{name}")
}

pub fn institution_identity(index: u32) -> String {
    format!("inst:{index}")
}

pub fn node_address(index: u32) -> String {
    format!("node:{index}")
}

/// Institution index of an `inst:<i>` identity.
pub fn institution_of(identity: &str) -> Option<u32> {
    identity.strip_prefix("inst:")?.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_differ_per_direction_and_transcript() {
        let t1 = transcript("user:a", 1, "n1", "n2", "e1", "e2");
        let t2 = transcript("user:a", 2, "n1", "n2", "e1", "e2");
        let k1 = derive_session(&[1; 32], &t1);
        let k2 = derive_session(&[1; 32], &t2);
        assert_ne!(k1.client_to_node, k1.node_to_client);
        assert_ne!(k1.session, k2.session);
        assert_ne!(node_signing_bytes(&t1), client_signing_bytes(&t1));
    }

    #[test]
    fn identities() {
        assert_eq!(institution_of(&institution_identity(3)), Some(3));
        assert_eq!(institution_of("user:3"), None);
    }
}
