//! Client-side view of a deployment: framed request/reply streams to nodes.

use std::cell::RefCell;
use std::rc::Rc;

use thiserror::Error;

use crate::sim::SimNetwork;

pub type ConnId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("node {0} unreachable")]
    Unreachable(u32),
    #[error("connection closed")]
    Closed,
    #[error("no reply")]
    NoReply,
    #[error("i/o: {0}")]
    Io(String),
}

/// A reliable ordered frame stream per connection.
pub trait Transport {
    fn connect(&mut self, node: u32) -> Result<ConnId, TransportError>;
    fn send(&mut self, conn: ConnId, frame: Vec<u8>) -> Result<(), TransportError>;
    /// Blocks (or, in simulation, runs the network) until a frame arrives.
    fn recv(&mut self, conn: ConnId) -> Result<Vec<u8>, TransportError>;
    fn close(&mut self, conn: ConnId);
    fn nodes(&self) -> Vec<u32>;
}

/// Shared handle to a simulated network, usable as a client transport while
/// the harness keeps access to the nodes.
#[derive(Clone, Debug)]
pub struct SimHandle(pub Rc<RefCell<SimNetwork>>);

impl SimHandle {
    pub fn new(net: SimNetwork) -> Self {
        Self(Rc::new(RefCell::new(net)))
    }
}

impl Transport for SimHandle {
    fn connect(&mut self, node: u32) -> Result<ConnId, TransportError> {
        self.0.borrow_mut().connect(node)
    }

    fn send(&mut self, conn: ConnId, frame: Vec<u8>) -> Result<(), TransportError> {
        self.0.borrow_mut().client_send(conn, &frame)
    }

    fn recv(&mut self, conn: ConnId) -> Result<Vec<u8>, TransportError> {
        self.0.borrow_mut().client_recv(conn)
    }

    fn close(&mut self, conn: ConnId) {
        self.0.borrow_mut().disconnect(conn);
    }

    fn nodes(&self) -> Vec<u32> {
        self.0.borrow().indices()
    }
}
