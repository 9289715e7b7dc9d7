//! What a set of corrupted nodes has seen: every envelope they opened and
//! every byte they persisted.

use std::collections::BTreeSet;
use std::path::PathBuf;

use trustworthy_node::store::{self, StoredRecord};
use trustworthy_node::wire::Envelope;

use crate::{HarnessError, SimDeployment};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewEnvelope {
    /// Corrupted node that received it.
    pub node: u32,
    pub envelope: Envelope,
}

#[derive(Clone, Debug)]
pub struct AdversaryView {
    pub corrupted: BTreeSet<u32>,
    /// Client requests and peer messages received, in delivery order per source.
    pub envelopes: Vec<ViewEnvelope>,
    /// Every file under the corrupted nodes' data directories.
    pub files: Vec<(u32, PathBuf, Vec<u8>)>,
    /// Stored records of the corrupted nodes that were up at capture time.
    pub records: Vec<(u32, StoredRecord)>,
}

impl AdversaryView {
    pub fn capture(dep: &mut SimDeployment, corrupted: &[u32]) -> Result<Self, HarnessError> {
        let set: BTreeSet<u32> = corrupted.iter().copied().collect();
        let mut envelopes: Vec<ViewEnvelope> = dep
            .drain_taps()
            .iter()
            .filter(|(n, _)| set.contains(n))
            .map(|(n, e)| ViewEnvelope {
                node: *n,
                envelope: e.clone(),
            })
            .collect();
        let mut files = Vec::new();
        let mut records = Vec::new();
        {
            let net = dep.network();
            envelopes.extend(
                net.transcript()
                    .iter()
                    .filter(|d| d.delivered && set.contains(&d.to))
                    .map(|d| ViewEnvelope {
                        node: d.to,
                        envelope: d.envelope.clone(),
                    }),
            );
            for &i in &set {
                if let Some(n) = net.node(i) {
                    records.extend(n.store().records().map(|r| (i, r.clone())));
                }
            }
        }
        for &i in &set {
            let dir = dep.data_dir(i);
            if dir.exists() {
                files.extend(store::scan_bytes(&dir)?.into_iter().map(|(p, b)| (i, p, b)));
            }
        }
        Ok(Self {
            corrupted: set,
            envelopes,
            files,
            records,
        })
    }

    /// True if `needle` occurs in any envelope encoding or persisted file.
    pub fn contains(&self, needle: &[u8]) -> bool {
        self.envelopes.iter().any(|v| store::contains_bytes(&v.envelope.encode(), needle))
            || self.files.iter().any(|(_, _, b)| store::contains_bytes(b, needle))
    }

    /// The corrupted nodes' records named `record_id`.
    pub fn shares_of(&self, record_id: &str) -> Vec<&(u32, StoredRecord)> {
        self.records.iter().filter(|(_, r)| r.record_id == record_id).collect()
    }
}
