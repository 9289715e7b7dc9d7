//! Byte scans for plaintext leaking into the network or onto disk.

use std::path::PathBuf;

use trustworthy_node::store;

use crate::{HarnessError, SimDeployment};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Location {
    /// A frame as it crossed the network.
    Wire(usize),
    /// A decrypted inter-node envelope.
    PeerEnvelope(usize),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Finding {
    pub needle: usize,
    pub location: Location,
}

/// Searches raw frames, opened peer envelopes and every node's files for
/// each needle.
pub fn plaintext_scan(dep: &SimDeployment, needles: &[&[u8]]) -> Result<Vec<Finding>, HarnessError> {
    let mut found = Vec::new();
    let net = dep.network();
    for (n, needle) in needles.iter().enumerate() {
        for (i, f) in net.wire_log().iter().enumerate() {
            if store::contains_bytes(f, needle) {
                found.push(Finding {
                    needle: n,
                    location: Location::Wire(i),
                });
            }
        }
        for (i, d) in net.transcript().iter().enumerate() {
            if store::contains_bytes(&d.envelope.encode(), needle) {
                found.push(Finding {
                    needle: n,
                    location: Location::PeerEnvelope(i),
                });
            }
        }
    }
    for i in net.indices() {
        let dir = net.config(i).data_dir.clone();
        if !dir.exists() {
            continue;
        }
        for (path, bytes) in store::scan_bytes(&dir)? {
            for (n, needle) in needles.iter().enumerate() {
                if store::contains_bytes(&bytes, needle) {
                    found.push(Finding {
                        needle: n,
                        location: Location::File(path.clone()),
                    });
                }
            }
        }
    }
    Ok(found)
}
