//! Bodies of service and peer envelopes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use trustworthy_core::mpc::survey::{StatQuery, SurveySchema};
use trustworthy_core::policy::{Decision, Proposal, ProposalState, Vote};

use crate::store::StoredRecord;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthHello {
    /// `user:<name>` or `inst:<index>`.
    pub identity: String,
    pub nonce: String,
    pub eph: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthChallenge {
    pub node: u32,
    pub nonce: String,
    pub eph: String,
    pub signature: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthResponse {
    pub signature: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthOk {
    pub session: String,
}

/// Reply to a request with sequence number `re`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub re: u64,
    pub value: Value,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub re: u64,
    pub error: String,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UserEntry {
    pub user: String,
    pub sign_pk: String,
    pub enc_pk: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryGet {
    pub user: String,
}

/// One node's shares of a vector of field elements, as decimal strings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareVec {
    pub index: u32,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotePut {
    pub note_id: String,
    /// Base64 AEAD ciphertext of the compressed text.
    pub ciphertext: String,
    pub key_share: ShareVec,
    pub threshold: u8,
    /// Overwrite an existing note of the same owner.
    #[serde(default)]
    pub replace: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemGet {
    pub id: String,
    /// Approved REVEAL proposal, when the caller is not the owner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteData {
    pub ciphertext: String,
    /// Hash of the ciphertext as read from disk.
    pub hash: String,
    pub key_share: ShareVec,
    pub threshold: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEscrow {
    pub key_id: String,
    pub share: ShareVec,
    pub threshold: u8,
    pub file_hint: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyData {
    pub share: ShareVec,
    pub threshold: u8,
    pub file_hint: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmailPut {
    pub email_id: String,
    pub recipient: String,
    /// This node's share of every ciphertext chunk.
    pub share: ShareVec,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EmailMeta {
    pub email_id: String,
    pub sender: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmailData {
    pub sender: String,
    pub share: ShareVec,
}

/// A survey as fixed at creation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyDef {
    pub survey_id: String,
    pub schema: SurveySchema,
    pub threshold: u8,
    pub min_respondents: usize,
    pub queries: Vec<StatQuery>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyCreate {
    pub survey: SurveyDef,
    pub proposal: String,
}

/// One node's shares of one answer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerShares {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub int: Option<String>,
    pub bits: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyRespond {
    pub survey_id: String,
    /// Same on every node; names the consistency-check session.
    pub submission: String,
    pub answers: Vec<AnswerShares>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyCompute {
    pub survey_id: String,
    pub query_id: String,
    pub proposal: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyRef {
    pub survey_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishedStat {
    pub survey_id: String,
    pub query_id: String,
    pub proposal: String,
    pub respondents: usize,
    pub numerator: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub denominator: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub percentage: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyInfo {
    pub survey: SurveyDef,
    pub respondents: usize,
    pub published: Vec<PublishedStat>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GovPropose {
    pub proposal: Proposal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GovVote {
    pub vote: Vote,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GovStatusReq {
    pub proposal_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GovStatus {
    pub proposal: Proposal,
    pub required: u8,
    pub approvals: Vec<u8>,
    pub rejections: Vec<u8>,
    pub decision: Option<Decision>,
}

impl From<&ProposalState> for GovStatus {
    fn from(s: &ProposalState) -> Self {
        let (approvals, rejections) = s
            .votes
            .values()
            .partition::<Vec<_>, _>(|v| v.choice == trustworthy_core::policy::Choice::Approve);
        Self {
            proposal: s.proposal.clone(),
            required: s.required,
            approvals: approvals.iter().map(|v| v.institution).collect(),
            rejections: rejections.iter().map(|v| v.institution).collect(),
            decision: s.decision.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EraseReq {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Erased {
    pub erased: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaCheckReq {
    pub record_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaReport {
    pub record_id: String,
    pub consistent: bool,
    /// Reachable nodes whose hash differs from the majority.
    pub flagged: Vec<u32>,
    pub hashes: BTreeMap<u32, Option<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdminRecover {
    pub helpers: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoverReport {
    pub recovered: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdminReshare {
    pub proposal: String,
    /// Old holders taking part; defaults to the lowest indices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quorum: Option<Vec<u32>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReshareDone {
    pub record_id: String,
    pub threshold: u8,
}

// Peer bodies.

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReshareSub {
    pub proposal: String,
    pub record_id: String,
    pub quorum: Vec<u32>,
    pub new_threshold: u8,
    /// Sub-share for the receiver, one per stored value.
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoverReq {
    pub helpers: Vec<u32>,
}

/// A helper's contribution for one share record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveredShare {
    /// The helper's record with its values replaced by contributions.
    pub record: StoredRecord,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveredBlob {
    pub record: StoredRecord,
    pub data: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoverContrib {
    pub shares: Vec<RecoveredShare>,
    pub blobs: Vec<RecoveredBlob>,
    pub registry: Vec<UserEntry>,
    pub governance: Vec<String>,
    pub results: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaQuery {
    pub record_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaHash {
    pub record_id: String,
    pub hash: Option<String>,
}
