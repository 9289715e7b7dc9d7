use serde::{Deserialize, Serialize};
use thiserror::Error;
use trustworthy_core::{MathError, MpcError, PolicyError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("authenticated decryption failed")]
    Decrypt,
    #[error("malformed key material")]
    BadKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("malformed frame: {0}")]
    BadFrame(String),
    #[error("unknown envelope kind {0:?}")]
    UnknownKind(String),
    #[error("unsupported protocol version {0}")]
    BadVersion(u32),
    #[error("envelope authentication failed")]
    BadMac,
    #[error("frame of {0} bytes exceeds the limit")]
    FrameTooLarge(usize),
}

/// Errors a node reports to its callers. The variant name travels on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NodeError {
    #[error("unknown identity {0}")]
    UnknownIdentity(String),
    #[error("challenge response did not verify")]
    BadChallengeResponse,
    #[error("nonce already used")]
    ReplayedNonce,
    #[error("no record {0}")]
    NotFound(String),
    #[error("not authorized: {0}")]
    NotAuthorized(String),
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("sequence number {seq} from {from} in session {session} is not fresh")]
    BadSeq { session: String, from: String, seq: u64 },
    #[error("unknown kind {0}")]
    UnknownKind(String),
    #[error("too many concurrent sessions")]
    SessionLimit,
    #[error("not enough nodes reachable")]
    QuorumUnreachable,
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("{0} already exists")]
    AlreadyExists(String),
    #[error("respondent already answered this survey")]
    AlreadyResponded,
    #[error("submission failed the consistency check")]
    ConsistencyFailure,
    #[error("{have} respondents, at least {need} required")]
    TooFewRespondents { have: usize, need: usize },
    #[error("query {0} was not declared")]
    UndeclaredQuery(String),
    #[error("answers do not match the schema: {0}")]
    SchemaMismatch(String),
    #[error("another computation is running on survey {0}")]
    Busy(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Math(#[from] MathError),
}

/// Variant name of an error enum, taken from its `Debug` rendering.
pub fn variant_name<E: std::fmt::Debug>(e: &E) -> String {
    let s = format!("{e:?}");
    s.split(|c: char| !c.is_alphanumeric() && c != '_')
        .next()
        .unwrap_or_default()
        .to_owned()
}

impl NodeError {
    /// Stable name sent in `ERROR` envelopes; wrapped errors report the inner
    /// variant so clients see e.g. `NotOwner` rather than `Policy`.
    pub fn name(&self) -> String {
        match self {
            NodeError::Wire(WireError::UnknownKind(_)) => "UnknownKind".into(),
            NodeError::Wire(WireError::BadMac) => "BadMac".into(),
            NodeError::Wire(e) => variant_name(e),
            NodeError::Crypto(e) => variant_name(e),
            NodeError::Policy(e) => variant_name(e),
            NodeError::Mpc(MpcError::Math(e)) | NodeError::Math(e) => variant_name(e),
            NodeError::Mpc(e) => variant_name(e),
            e => variant_name(e),
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            error: self.name(),
            detail: self.to_string(),
        }
    }
}

impl From<std::io::Error> for NodeError {
    fn from(e: std::io::Error) -> Self {
        NodeError::StorageFailure(e.to_string())
    }
}

/// Body of an `ERROR` envelope.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_unwrap_inner_variants() {
        assert_eq!(NodeError::Policy(PolicyError::NotOwner).name(), "NotOwner");
        assert_eq!(
            NodeError::TooFewRespondents { have: 4, need: 5 }.name(),
            "TooFewRespondents"
        );
        assert_eq!(NodeError::NotFound("x".into()).name(), "NotFound");
        assert_eq!(NodeError::Wire(WireError::UnknownKind("X".into())).name(), "UnknownKind");
        assert_eq!(NodeError::Math(MathError::InconsistentShares).name(), "InconsistentShares");
    }
}
