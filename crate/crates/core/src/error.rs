use thiserror::Error;

/// Failures of the pure field / sharing layer.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MathError {
    #[error("modulus {0} is not a usable prime")]
    BadModulus(u64),
    #[error("commitment group rejected: {0}")]
    BadCommitmentGroup(&'static str),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("bad threshold: k={k}, n={n}")]
    BadThreshold { k: usize, n: usize },
    #[error("share index {0} appears more than once")]
    DuplicateIndex(u32),
    #[error("share index {0} is not a nonzero field element")]
    InvalidIndex(u32),
    #[error("need {needed} shares, got {got}")]
    NotEnoughShares { needed: usize, got: usize },
    #[error("shares do not lie on a single polynomial of the stated degree")]
    InconsistentShares,
    #[error("no commitment group configured for this field")]
    NoCommitmentGroup,
    #[error("quorum of {got} is smaller than the threshold {needed}")]
    QuorumTooSmall { needed: usize, got: usize },
    #[error("lost index {0} is also a helper")]
    IndexCollision(u32),
    #[error("missing pairwise mask between {0} and {1}")]
    MissingMask(u32, u32),
    #[error("cannot parse field element {0:?}")]
    Parse(String),
}

/// Failures of secure computation over shared values.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MpcError {
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("value needs more than {width} bits or 2^{width} >= p")]
    WidthOverflow { width: u8 },
    #[error("node {0} is unreachable")]
    NodeUnreachable(u32),
    #[error("operands have incompatible representations")]
    ReprMismatch,
    #[error("corruption bound t={t} is not below n/2 for n={n}")]
    ThresholdTooHigh { t: usize, n: usize },
    #[error("message for round {got} arrived while in round {expected}")]
    RoundDesync { expected: u32, got: u32 },
    #[error("shared bit opened to a non-boolean value")]
    NotABit,
    #[error("comparison bound {bound} does not fit in {width} bits")]
    WidthMismatch { bound: u64, width: u8 },
    #[error("opening requires an approved decision covering the value's policy")]
    NotAuthorized,
    #[error("opening failed: shares are inconsistent or missing")]
    OpenFailed,
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("attribute {0:?} used with the wrong type")]
    TypeMismatch(String),
    #[error("bad survey schema: {0}")]
    BadSchema(String),
    #[error("missing input {0}")]
    MissingInput(String),
    #[error("duplicate message from {from} for gate {gate}")]
    DuplicateMessage { from: u32, gate: u32 },
}

/// Governance and access-structure failures.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("reveal threshold {0} outside 1..=5")]
    BadThreshold(u8),
    #[error("institution {0} already voted differently on this proposal")]
    DuplicateVote(u8),
    #[error("vote signature rejected")]
    BadSignature,
    #[error("vote references another proposal")]
    ForeignVote,
    #[error("institution {0} is not part of the deployment")]
    UnknownInstitution(u8),
    #[error("an open proposal for this action and target already exists")]
    DuplicateProposal,
    #[error("proposal target {0:?} does not exist")]
    UnknownTarget(String),
    #[error("no proposal {0:?}")]
    UnknownProposal(String),
    #[error("proposal already decided")]
    AlreadyDecided,
    #[error("requester is not the record owner")]
    NotOwner,
    #[error("record access is restricted")]
    Restricted,
    #[error("RETHRESHOLD proposals need a new threshold")]
    MissingThreshold,
}
