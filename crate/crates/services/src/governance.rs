//! Proposals, signed institution votes, erasure and administration.

use std::collections::BTreeMap;

use trustworthy_core::policy::{Action, Choice, Proposal, Vote};
use trustworthy_node::auth;
use trustworthy_node::proto::{
    AdminRecover, AdminReshare, EraseReq, Erased, GovPropose, GovStatus, GovStatusReq, GovVote, RecoverReport, ReplicaCheckReq,
    ReplicaReport, ReshareDone, UserEntry,
};
use trustworthy_node::wire::Kind;

use crate::{all_ok, at_least, majority, Client, Result, ServiceError, MAJORITY};

fn pick_status(replies: BTreeMap<u32, GovStatus>) -> Result<GovStatus> {
    let fallback = replies.values().next().cloned();
    majority(replies.into_values()).or(fallback).ok_or(ServiceError::Disagreement)
}

impl Client<'_> {
    /// Files a proposal in the caller's name; returns its status.
    pub fn propose(&mut self, action: Action, target: &str, new_threshold: Option<u8>) -> Result<GovStatus> {
        let proposal = Proposal {
            proposal_id: self.random_id(),
            action,
            target: target.to_owned(),
            requested_by: self.identity().to_owned(),
            created_at: self.next_timestamp(),
            new_threshold,
        };
        let req = GovPropose { proposal };
        pick_status(at_least(self.broadcast(Kind::GovPropose, |_| req.clone()), MAJORITY)?)
    }

    /// Casts this institution's signed vote.
    pub fn vote(&mut self, proposal_id: &str, choice: Choice) -> Result<GovStatus> {
        let inst = auth::institution_of(self.identity())
            .ok_or_else(|| ServiceError::NotAuthorized("only institutions vote".into()))?;
        let institution = inst as u8;
        let signature = hex::encode(self.signer().sign(&Vote::signing_bytes(proposal_id, institution, choice)));
        let req = GovVote {
            vote: Vote {
                proposal_id: proposal_id.to_owned(),
                institution,
                choice,
                signature,
            },
        };
        pick_status(at_least(self.broadcast(Kind::GovVote, |_| req.clone()), MAJORITY)?)
    }

    pub fn proposal_status(&mut self, proposal_id: &str) -> Result<GovStatus> {
        let req = GovStatusReq {
            proposal_id: proposal_id.to_owned(),
        };
        pick_status(at_least(self.broadcast(Kind::GovStatus, |_| req.clone()), MAJORITY)?)
    }

    /// Erases an item the caller owns, or one an approved DISCARD names.
    pub fn erase(&mut self, id: &str, proposal: Option<&str>) -> Result<Vec<String>> {
        let req = EraseReq {
            id: id.to_owned(),
            proposal: proposal.map(str::to_owned),
        };
        let replies: BTreeMap<u32, Erased> = at_least(self.broadcast(Kind::Erase, |_| req.clone()), MAJORITY)?;
        let mut erased: Vec<String> = replies.into_values().flat_map(|e| e.erased).collect();
        erased.sort();
        erased.dedup();
        Ok(erased)
    }

    /// Adds a user to every reachable node's registry.
    pub fn register(&mut self, entry: &UserEntry) -> Result<()> {
        at_least::<UserEntry>(self.broadcast(Kind::Register, |_| entry.clone()), MAJORITY)?;
        Ok(())
    }

    pub fn replica_check(&mut self, node: u32, record_id: &str) -> Result<ReplicaReport> {
        let v = self.call(
            node,
            Kind::ReplicaCheck,
            &ReplicaCheckReq {
                record_id: record_id.to_owned(),
            },
        )?;
        serde_json::from_value(v).map_err(|e| bad_reply(node, e))
    }

    /// Asks `node` to rebuild its state from `helpers`.
    pub fn recover(&mut self, node: u32, helpers: Vec<u32>) -> Result<RecoverReport> {
        let v = self.call(node, Kind::AdminRecover, &AdminRecover { helpers })?;
        serde_json::from_value(v).map_err(|e| bad_reply(node, e))
    }

    /// Executes an approved RETHRESHOLD on every node.
    pub fn reshare(&mut self, proposal: &str, quorum: Option<Vec<u32>>) -> Result<BTreeMap<u32, ReshareDone>> {
        let req = AdminReshare {
            proposal: proposal.to_owned(),
            quorum,
        };
        all_ok(self.broadcast(Kind::AdminReshare, |_| req.clone()))
    }
}

fn bad_reply(node: u32, e: serde_json::Error) -> ServiceError {
    ServiceError::Client {
        node,
        source: trustworthy_node::client::ClientError::Protocol(e.to_string()),
    }
}
