//! Honest-majority secure computation on Shamir-shared values.
//!
//! Security is passive: with `t = k − 1` corrupted parties and `2t < n`, the
//! pooled views of the corrupted parties are independent of the inputs, and
//! only the values explicitly opened are learned.

pub mod circuit;
pub mod cluster;
pub mod party;
pub mod survey;
mod value;

pub use circuit::{Circuit, CircuitBuilder, CircuitStats, Direction, Gate, InputRef, MulKind, Wire, WireId};
pub use cluster::LocalCluster;
pub use party::{
    check_honest_majority, degree_reduce, reshare_product, MpcMessage, MsgKind, Party, PartyConfig, WireMpcMessage,
};
pub use value::{Authorization, BoolOp, NodeShares, Operand, Repr, SharedValue, ValueId};
