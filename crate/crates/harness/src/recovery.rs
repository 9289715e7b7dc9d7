//! Node-loss checks: rebuild a crashed node's shares from its peers.

use serde::Serialize;
use trustworthy_core::reshare::{recover_share, PairwiseMasks};
use trustworthy_core::shamir::share_with_coeffs;
use trustworthy_core::{Field, RandomStream};
use trustworthy_node::store::StoredRecord;

use crate::{HarnessError, SimDeployment};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RecoveryOutcome {
    pub node: u32,
    pub record_id: String,
    pub original: Vec<String>,
    pub recovered: Vec<String>,
}

impl RecoveryOutcome {
    pub fn restored(&self) -> bool {
        !self.original.is_empty() && self.original == self.recovered
    }
}

/// Share 4 of `7 + 2x + x²` over Z_31, rebuilt from holders 1, 2 and 3 with
/// random pairwise masks. Returns (original, recovered).
pub fn example_polynomial_recovery(seed: u64) -> Result<(u64, u64), HarnessError> {
    let field = Field::new(31)?;
    let shares = share_with_coeffs(field.elem(7), &[field.elem(2), field.elem(1)], 5)?;
    let helpers = &shares[..3];
    let ids: Vec<u32> = helpers.iter().map(|s| s.index).collect();
    let masks = PairwiseMasks::random(field, &ids, &mut RandomStream::from_u64(seed));
    let got = recover_share(4, helpers, 3, &masks)?;
    Ok((shares[3].value.value(), got.value.value()))
}

/// Wipes `node`, restarts it and asks it to rebuild from `helpers`; reports
/// the stored values of `record_id` before and after.
pub fn verify_recovery(dep: &mut SimDeployment, node: u32, record_id: &str, helpers: Vec<u32>) -> Result<RecoveryOutcome, HarnessError> {
    let original = dep
        .record(node, record_id)
        .map(|r: StoredRecord| r.values)
        .ok_or_else(|| HarnessError::Script(format!("node {node} holds no {record_id}")))?;
    dep.crash(node, true)?;
    dep.restart(node)?;
    if dep.record(node, record_id).is_some() {
        return Err(HarnessError::Script(format!("node {node} kept {record_id} across a wipe")));
    }
    dep.client(dep.institution(node), |c| c.recover(node, helpers))?;
    let recovered = dep.record(node, record_id).map(|r| r.values).unwrap_or_default();
    Ok(RecoveryOutcome {
        node,
        record_id: record_id.to_owned(),
        original,
        recovered,
    })
}
