//! TCP binding: one event-loop thread owns the [`Node`]; reader threads feed
//! it frames and per-peer writer threads carry its outputs.
//!
//! A connection starts with one plain frame naming the caller: `client` or
//! `peer:<index>`. Everything after that is length-prefixed frames.

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::config::NodeConfig;
use crate::error::NodeError;
use crate::node::{ConnId, Node, Output};
use crate::transport::{Transport, TransportError};
use crate::wire::{self, Envelope};

const CONNECT_ATTEMPTS: u32 = 5;
const RETRY_DELAY: Duration = Duration::from_millis(200);

enum Event {
    ClientOpen(ConnId, TcpStream),
    ClientFrame(ConnId, Vec<u8>),
    ClientClosed(ConnId),
    PeerFrame(u32, Vec<u8>),
    PeerUnreachable(u32, Envelope),
    Stop,
}

/// A running node. Dropping the handle does not stop it; call [`NodeServer::stop`].
pub struct NodeServer {
    pub local_addr: std::net::SocketAddr,
    events: Sender<Event>,
    stopping: Arc<AtomicBool>,
    event_loop: Option<JoinHandle<()>>,
}

impl std::fmt::Debug for NodeServer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NodeServer").field("local_addr", &self.local_addr).finish_non_exhaustive()
    }
}

impl NodeServer {
    pub fn stop(mut self) {
        self.stopping.store(true, Ordering::SeqCst);
        let _ = self.events.send(Event::Stop);
        // unblock the accept loop
        let _ = TcpStream::connect(self.local_addr);
        if let Some(h) = self.event_loop.take() {
            let _ = h.join();
        }
    }

    /// Blocks until the event loop exits.
    pub fn wait(mut self) {
        if let Some(h) = self.event_loop.take() {
            let _ = h.join();
        }
    }
}

/// Binds the listen address and starts serving.
pub fn serve(cfg: NodeConfig) -> Result<NodeServer, NodeError> {
    let listener = TcpListener::bind(&cfg.listen_address)?;
    let local_addr = listener.local_addr()?;
    let node = Node::open(cfg.clone(), 0)?;
    let (tx, rx) = mpsc::channel();
    let stopping = Arc::new(AtomicBool::new(false));

    let mut peers = BTreeMap::new();
    for (&j, p) in &cfg.peers {
        let (ptx, prx) = mpsc::channel::<(Envelope, Vec<u8>)>();
        let events = tx.clone();
        let addr = p.address.clone();
        let me = cfg.index;
        thread::spawn(move || peer_writer(me, j, addr, prx, events));
        peers.insert(j, ptx);
    }

    {
        let tx = tx.clone();
        let stopping = stopping.clone();
        thread::spawn(move || accept_loop(listener, tx, stopping));
    }
    let event_loop = thread::spawn(move || run_loop(node, rx, peers));
    Ok(NodeServer {
        local_addr,
        events: tx,
        stopping,
        event_loop: Some(event_loop),
    })
}

fn accept_loop(listener: TcpListener, tx: Sender<Event>, stopping: Arc<AtomicBool>) {
    static NEXT_CONN: AtomicU64 = AtomicU64::new(1);
    for stream in listener.incoming() {
        if stopping.load(Ordering::SeqCst) {
            return;
        }
        let Ok(stream) = stream else { continue };
        let tx = tx.clone();
        let conn = NEXT_CONN.fetch_add(1, Ordering::SeqCst);
        thread::spawn(move || {
            if let Err(e) = read_connection(conn, stream, &tx) {
                log::debug!("connection {conn} ended: {e}");
            }
        });
    }
}

fn read_connection(conn: ConnId, stream: TcpStream, tx: &Sender<Event>) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let hello = wire::read_frame(&mut reader)?;
    let hello = String::from_utf8_lossy(&hello).into_owned();
    if hello == "client" {
        let _ = tx.send(Event::ClientOpen(conn, stream));
        loop {
            match wire::read_frame(&mut reader) {
                Ok(f) => {
                    if tx.send(Event::ClientFrame(conn, f)).is_err() {
                        return Ok(());
                    }
                }
                Err(e) => {
                    let _ = tx.send(Event::ClientClosed(conn));
                    return Err(e);
                }
            }
        }
    }
    let Some(from) = hello.strip_prefix("peer:").and_then(|s| s.parse::<u32>().ok()) else {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "bad preamble"));
    };
    loop {
        let f = wire::read_frame(&mut reader)?;
        if tx.send(Event::PeerFrame(from, f)).is_err() {
            return Ok(());
        }
    }
}

fn connect_with_retry(addr: &str) -> std::io::Result<TcpStream> {
    let mut last = None;
    for _ in 0..CONNECT_ATTEMPTS {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) => {
                last = Some(e);
                thread::sleep(RETRY_DELAY);
            }
        }
    }
    Err(last.expect("at least one attempt"))
}

fn peer_writer(me: u32, to: u32, addr: String, rx: Receiver<(Envelope, Vec<u8>)>, events: Sender<Event>) {
    let mut stream: Option<BufWriter<TcpStream>> = None;
    for (env, frame) in rx {
        let mut sent = false;
        for _ in 0..2 {
            if stream.is_none() {
                stream = connect_with_retry(&addr)
                    .and_then(|s| {
                        s.set_nodelay(true)?;
                        let mut w = BufWriter::new(s);
                        wire::write_frame(&mut w, format!("peer:{me}").as_bytes())?;
                        Ok(w)
                    })
                    .ok();
            }
            let Some(w) = stream.as_mut() else { break };
            if wire::write_frame(w, &frame).and_then(|()| w.flush()).is_ok() {
                sent = true;
                break;
            }
            stream = None;
        }
        if !sent && events.send(Event::PeerUnreachable(to, env)).is_err() {
            return;
        }
    }
}

fn run_loop(mut node: Node, rx: Receiver<Event>, peers: BTreeMap<u32, Sender<(Envelope, Vec<u8>)>>) {
    let mut clients: BTreeMap<ConnId, BufWriter<TcpStream>> = BTreeMap::new();
    for ev in rx {
        let outputs = match ev {
            Event::Stop => break,
            Event::ClientOpen(conn, s) => {
                clients.insert(conn, BufWriter::new(s));
                continue;
            }
            Event::ClientClosed(conn) => {
                clients.remove(&conn);
                node.close_conn(conn);
                continue;
            }
            Event::ClientFrame(conn, f) => node.handle_client(conn, &f),
            Event::PeerFrame(from, f) => match node.handle_peer(from, &f) {
                Ok(out) => out,
                Err(e) => {
                    log::warn!("node {}: rejected frame from node {from}: {e}", node.index());
                    continue;
                }
            },
            Event::PeerUnreachable(to, env) => node.peer_unreachable(to, &env),
        };
        for o in outputs {
            match o {
                Output::Client { conn, frame } => {
                    if let Some(w) = clients.get_mut(&conn) {
                        if wire::write_frame(w, &frame).and_then(|()| w.flush()).is_err() {
                            clients.remove(&conn);
                        }
                    }
                }
                Output::Peer { to, envelope, frame } => {
                    if let Some(p) = peers.get(&to) {
                        let _ = p.send((envelope, frame));
                    }
                }
            }
        }
    }
    for (_, w) in clients {
        let _ = w.get_ref().shutdown(Shutdown::Both);
    }
}

/// Client transport over TCP; `addresses[i]` is node `i + 1`.
#[derive(Debug)]
pub struct TcpTransport {
    addresses: BTreeMap<u32, String>,
    conns: BTreeMap<u64, (BufReader<TcpStream>, BufWriter<TcpStream>)>,
    next: u64,
    timeout: Duration,
}

impl TcpTransport {
    pub fn new(addresses: BTreeMap<u32, String>, timeout: Duration) -> Self {
        Self {
            addresses,
            conns: BTreeMap::new(),
            next: 1,
            timeout,
        }
    }
}

fn io_err(e: std::io::Error) -> TransportError {
    TransportError::Io(e.to_string())
}

impl Transport for TcpTransport {
    fn connect(&mut self, node: u32) -> Result<u64, TransportError> {
        let addr = self.addresses.get(&node).ok_or(TransportError::Unreachable(node))?;
        let sock = addr
            .to_socket_addrs()
            .map_err(io_err)?
            .next()
            .ok_or(TransportError::Unreachable(node))?;
        let s = TcpStream::connect_timeout(&sock, self.timeout).map_err(|_| TransportError::Unreachable(node))?;
        s.set_read_timeout(Some(self.timeout)).map_err(io_err)?;
        s.set_nodelay(true).map_err(io_err)?;
        let mut w = BufWriter::new(s.try_clone().map_err(io_err)?);
        wire::write_frame(&mut w, b"client").and_then(|()| w.flush()).map_err(io_err)?;
        let id = self.next;
        self.next += 1;
        self.conns.insert(id, (BufReader::new(s), w));
        Ok(id)
    }

    fn send(&mut self, conn: u64, frame: Vec<u8>) -> Result<(), TransportError> {
        let (_, w) = self.conns.get_mut(&conn).ok_or(TransportError::Closed)?;
        wire::write_frame(w, &frame).and_then(|()| w.flush()).map_err(io_err)
    }

    fn recv(&mut self, conn: u64) -> Result<Vec<u8>, TransportError> {
        let (r, _) = self.conns.get_mut(&conn).ok_or(TransportError::Closed)?;
        wire::read_frame(r).map_err(|e| match e.kind() {
            std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => TransportError::NoReply,
            std::io::ErrorKind::UnexpectedEof => TransportError::Closed,
            _ => io_err(e),
        })
    }

    fn close(&mut self, conn: u64) {
        if let Some((r, _)) = self.conns.remove(&conn) {
            let _ = r.get_ref().shutdown(Shutdown::Both);
        }
    }

    fn nodes(&self) -> Vec<u32> {
        self.addresses.keys().copied().collect()
    }
}
