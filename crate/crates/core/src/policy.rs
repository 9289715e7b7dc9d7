//! Access structures and institution governance.
//!
//! Revealing or computing on an item needs the item's own threshold of
//! approving institutions. Restricting, discarding or rethresholding it only
//! needs a simple majority, so a majority can always lock data down but can
//! never open data locked under unanimity.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::PolicyError;
use crate::INSTITUTIONS;

pub const MAJORITY: u8 = 3;
pub const UNANIMITY: u8 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    UserItem,
    Survey,
    Registry,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessPolicy {
    pub policy_id: String,
    pub reveal_threshold: u8,
    pub owner: String,
    pub kind: PolicyKind,
}

impl AccessPolicy {
    pub fn new(policy_id: impl Into<String>, reveal_threshold: u8, owner: impl Into<String>, kind: PolicyKind) -> Result<Self, PolicyError> {
        check_threshold(reveal_threshold)?;
        Ok(Self {
            policy_id: policy_id.into(),
            reveal_threshold,
            owner: owner.into(),
            kind,
        })
    }
}

pub fn check_threshold(k: u8) -> Result<(), PolicyError> {
    if k == 0 || k as usize > INSTITUTIONS {
        return Err(PolicyError::BadThreshold(k));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Reveal,
    Compute,
    Restrict,
    Unrestrict,
    Discard,
    Rethreshold,
}

impl Action {
    pub fn reveals(self) -> bool {
        matches!(self, Action::Reveal | Action::Compute)
    }
}

pub fn required_votes(policy: &AccessPolicy, action: Action) -> u8 {
    if action.reveals() {
        policy.reveal_threshold
    } else {
        MAJORITY
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub proposal_id: String,
    pub action: Action,
    pub target: String,
    pub requested_by: String,
    /// Lamport timestamp at the proposing node.
    pub created_at: u64,
    /// New reveal threshold for `RETHRESHOLD`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_threshold: Option<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    Approve,
    Reject,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub proposal_id: String,
    pub institution: u8,
    pub choice: Choice,
    /// Hex signature over [`Vote::signing_bytes`].
    pub signature: String,
}

#[derive(Serialize)]
struct VoteBody<'a> {
    proposal_id: &'a str,
    institution: u8,
    choice: Choice,
}

impl Vote {
    /// Canonical JSON of everything but the signature.
    pub fn signing_bytes(proposal_id: &str, institution: u8, choice: Choice) -> Vec<u8> {
        crate::canonical_json(&VoteBody {
            proposal_id,
            institution,
            choice,
        })
        .into_bytes()
    }

    pub fn body_bytes(&self) -> Vec<u8> {
        Self::signing_bytes(&self.proposal_id, self.institution, self.choice)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub proposal_id: String,
    pub action: Action,
    pub target: String,
    pub approved: bool,
    /// Sorted, distinct.
    pub approving_set: Vec<u8>,
}

impl Decision {
    #[cfg(test)]
    pub(crate) fn approved_for_test(action: Action, target: &str) -> Self {
        Self {
            proposal_id: "test".into(),
            action,
            target: target.into(),
            approved: true,
            approving_set: vec![1, 2, 3, 4, 5],
        }
    }
}

fn check_votes(proposal: &Proposal, votes: &[Vote], verify: &dyn Fn(&Vote) -> bool) -> Result<BTreeMap<u8, Choice>, PolicyError> {
    let mut seen: BTreeMap<u8, Choice> = BTreeMap::new();
    for v in votes {
        if v.proposal_id != proposal.proposal_id {
            return Err(PolicyError::ForeignVote);
        }
        if v.institution == 0 || v.institution as usize > INSTITUTIONS {
            return Err(PolicyError::UnknownInstitution(v.institution));
        }
        if !verify(v) {
            return Err(PolicyError::BadSignature);
        }
        match seen.get(&v.institution) {
            Some(c) if *c != v.choice => return Err(PolicyError::DuplicateVote(v.institution)),
            _ => {
                seen.insert(v.institution, v.choice);
            }
        }
    }
    Ok(seen)
}

/// Approved iff the number of distinct approving institutions reaches
/// [`required_votes`]. Identical re-submitted votes count once.
pub fn tally(
    proposal: &Proposal,
    policy: &AccessPolicy,
    votes: &[Vote],
    verify: &dyn Fn(&Vote) -> bool,
) -> Result<Decision, PolicyError> {
    let seen = check_votes(proposal, votes, verify)?;
    let approving_set: Vec<u8> = seen
        .iter()
        .filter(|(_, c)| **c == Choice::Approve)
        .map(|(i, _)| *i)
        .collect();
    Ok(Decision {
        proposal_id: proposal.proposal_id.clone(),
        action: proposal.action,
        target: proposal.target.clone(),
        approved: approving_set.len() >= required_votes(policy, proposal.action) as usize,
        approving_set,
    })
}

/// Per-record state relevant to access decisions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessState {
    pub restricted: bool,
}

/// Permission for the owner to collect `shares` shares without a proposal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grant {
    pub policy_id: String,
    pub shares: u8,
}

pub fn owner_access(policy: &AccessPolicy, state: AccessState, user: &str) -> Result<Grant, PolicyError> {
    if policy.owner != user {
        return Err(PolicyError::NotOwner);
    }
    if state.restricted {
        return Err(PolicyError::Restricted);
    }
    Ok(Grant {
        policy_id: policy.policy_id.clone(),
        shares: policy.reveal_threshold,
    })
}

/// A proposal together with its votes so far.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalState {
    pub proposal: Proposal,
    pub required: u8,
    pub votes: BTreeMap<u8, Vote>,
    pub decision: Option<Decision>,
}

/// What a governance step produced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VoteOutcome {
    /// Identical vote already recorded; nothing changed.
    Unchanged,
    Pending,
    Decided(Decision),
}

/// One node's governance ledger. Decisions depend only on the set of votes,
/// never on arrival order, so every honest node reaches the same records.
#[derive(Clone, Debug, Default)]
pub struct Governance {
    clock: u64,
    proposals: BTreeMap<String, ProposalState>,
}

impl Governance {
    pub fn new() -> Self {
        Self::default()
    }

    /// Lamport tick for a local event.
    pub fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    /// Lamport merge for a remote timestamp.
    pub fn observe(&mut self, remote: u64) {
        self.clock = self.clock.max(remote) + 1;
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn get(&self, proposal_id: &str) -> Option<&ProposalState> {
        self.proposals.get(proposal_id)
    }

    pub fn proposals(&self) -> impl Iterator<Item = &ProposalState> {
        self.proposals.values()
    }

    /// Registers a proposal. `policy` is `None` when the target does not exist.
    pub fn propose(&mut self, proposal: Proposal, policy: Option<&AccessPolicy>) -> Result<&ProposalState, PolicyError> {
        let policy = policy.ok_or_else(|| PolicyError::UnknownTarget(proposal.target.clone()))?;
        if proposal.action == Action::Rethreshold {
            check_threshold(proposal.new_threshold.ok_or(PolicyError::MissingThreshold)?)?;
        }
        if let Some(existing) = self.proposals.get(&proposal.proposal_id) {
            if existing.proposal == proposal {
                return Ok(&self.proposals[&proposal.proposal_id]);
            }
            return Err(PolicyError::DuplicateProposal);
        }
        let open_same = self.proposals.values().any(|s| {
            s.decision.is_none() && s.proposal.action == proposal.action && s.proposal.target == proposal.target
        });
        if open_same {
            return Err(PolicyError::DuplicateProposal);
        }
        self.observe(proposal.created_at);
        let id = proposal.proposal_id.clone();
        self.proposals.insert(
            id.clone(),
            ProposalState {
                required: required_votes(policy, proposal.action),
                proposal,
                votes: BTreeMap::new(),
                decision: None,
            },
        );
        Ok(&self.proposals[&id])
    }

    /// Records a vote. A decision is issued once approvals reach the
    /// requirement, or once enough rejections make that impossible.
    pub fn cast(&mut self, vote: Vote, verify: &dyn Fn(&Vote) -> bool) -> Result<VoteOutcome, PolicyError> {
        let state = self
            .proposals
            .get_mut(&vote.proposal_id)
            .ok_or_else(|| PolicyError::UnknownProposal(vote.proposal_id.clone()))?;
        check_votes(&state.proposal, std::slice::from_ref(&vote), verify)?;
        if let Some(prev) = state.votes.get(&vote.institution) {
            if prev.choice == vote.choice {
                return Ok(VoteOutcome::Unchanged);
            }
            return Err(PolicyError::DuplicateVote(vote.institution));
        }
        if state.decision.is_some() {
            return Err(PolicyError::AlreadyDecided);
        }
        state.votes.insert(vote.institution, vote);
        let approvals = state.votes.values().filter(|v| v.choice == Choice::Approve).count();
        let rejections = state.votes.len() - approvals;
        let required = state.required as usize;
        if approvals >= required || rejections > INSTITUTIONS - required {
            let approving_set = state
                .votes
                .values()
                .filter(|v| v.choice == Choice::Approve)
                .map(|v| v.institution)
                .collect();
            let d = Decision {
                proposal_id: state.proposal.proposal_id.clone(),
                action: state.proposal.action,
                target: state.proposal.target.clone(),
                approved: approvals >= required,
                approving_set,
            };
            state.decision = Some(d.clone());
            return Ok(VoteOutcome::Decided(d));
        }
        Ok(VoteOutcome::Pending)
    }

    /// Latest approved decision for `(action, target)`, if any.
    pub fn approved(&self, action: Action, target: &str) -> Option<&Decision> {
        self.proposals
            .values()
            .filter_map(|s| s.decision.as_ref())
            .filter(|d| d.approved && d.action == action && d.target == target)
            .last()
    }
}
