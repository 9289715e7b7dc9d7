//! Institution server: authenticated sessions, share and blob persistence
//! with erasure, envelope routing between institutions, replica checks and
//! hosting of MPC sessions.
//!
//! [`node::Node`] is a pure state machine over frames. [`sim::SimNetwork`]
//! drives five of them in process with a deterministic scheduler and
//! [`tcp`] runs one over real sockets.

pub mod auth;
pub mod client;
pub mod config;
pub mod crypto;
pub mod error;
pub mod node;
pub mod proto;
pub mod sim;
pub mod store;
pub mod tcp;
pub mod transport;
pub mod wire;

pub use config::{DeploymentPlan, NodeConfig};
pub use error::NodeError;
pub use node::{Node, Output};
pub use wire::{Envelope, Kind};
