//! Mathematical and protocol core of a five-institution virtual trusted third
//! party: prime-field Shamir sharing with coefficient commitments, resharing
//! and share recovery, a passive honest-majority MPC engine with bitwise
//! comparison circuits, and the threshold governance rules that decide who may
//! reveal, compute on, restrict or discard a protected item.
//!
//! Nothing in this crate performs I/O; the node service drives these state
//! machines over authenticated channels.

pub mod error;
pub mod feldman;
pub mod field;
pub mod mpc;
pub mod policy;
pub mod reshare;
pub mod rng;
pub mod shamir;

pub use error::{MathError, MpcError, PolicyError};
pub use feldman::{CommitmentGroup, ShareCommitment};
pub use field::{Fe, Field, FieldParams, MERSENNE_61};
pub use rng::RandomStream;
pub use shamir::{Share, Sharing, WireShare};

/// Number of institutions in a deployment.
pub const INSTITUTIONS: usize = 5;

/// Canonical JSON: keys sorted, no whitespace.
pub fn canonical_json<T: serde::Serialize>(value: &T) -> String {
    // serde_json's default map is ordered, so a Value round-trip sorts keys
    serde_json::to_value(value)
        .map(|v| v.to_string())
        .expect("serializable value")
}
