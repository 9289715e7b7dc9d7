use thiserror::Error;
use trustworthy_core::{MathError, MpcError};
use trustworthy_node::client::ClientError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServiceError {
    #[error("note text exceeds {limit} bytes")]
    NoteTooLarge { limit: usize },
    #[error("email body exceeds {limit} bytes")]
    EmailTooLarge { limit: usize },
    #[error("replicas of {0} disagree")]
    ReplicaMismatch(String),
    #[error("decryption failed")]
    DecryptFailure,
    #[error("key must be 32 bytes, got {0}")]
    BadKeyLength(usize),
    #[error("caller does not own the item")]
    NotOwner,
    #[error("unknown recipient {0}")]
    UnknownRecipient(String),
    #[error("registry copies disagree on {0}")]
    RegistryInconsistent(String),
    #[error("{have} shares collected, {need} needed")]
    NotEnoughShares { have: usize, need: usize },
    #[error("answers do not match the schema: {0}")]
    SchemaMismatch(String),
    #[error("already responded")]
    AlreadyResponded,
    #[error("submission failed the consistency check")]
    ConsistencyFailure,
    #[error("too few respondents: {0}")]
    TooFewRespondents(String),
    #[error("query {0} was not declared")]
    UndeclaredQuery(String),
    #[error("not authorized: {0}")]
    NotAuthorized(String),
    #[error("bad schema: {0}")]
    BadSchema(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("nodes returned different results")]
    Disagreement,
    #[error("the field is too small to carry byte chunks")]
    FieldTooSmall,
    #[error("node {node}: {error}: {detail}")]
    Remote { node: u32, error: String, detail: String },
    #[error("node {node}: {source}")]
    Client { node: u32, source: ClientError },
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
}

impl ServiceError {
    /// Maps a node's answer to the service-level error it stands for.
    pub fn from_node(node: u32, e: ClientError) -> Self {
        let ClientError::Remote { error, detail } = &e else {
            return ServiceError::Client { node, source: e };
        };
        match error.as_str() {
            "NotOwner" => ServiceError::NotOwner,
            "AlreadyResponded" => ServiceError::AlreadyResponded,
            "ConsistencyFailure" => ServiceError::ConsistencyFailure,
            "TooFewRespondents" => ServiceError::TooFewRespondents(detail.clone()),
            "UndeclaredQuery" => ServiceError::UndeclaredQuery(detail.clone()),
            "NotAuthorized" | "Restricted" => ServiceError::NotAuthorized(detail.clone()),
            "SchemaMismatch" | "TypeMismatch" => ServiceError::SchemaMismatch(detail.clone()),
            "BadSchema" | "WidthOverflow" => ServiceError::BadSchema(detail.clone()),
            "NotFound" => ServiceError::NotFound(detail.clone()),
            _ => ServiceError::Remote {
                node,
                error: error.clone(),
                detail: detail.clone(),
            },
        }
    }

    /// Stable name for scripts and the CLI's JSON output.
    pub fn name(&self) -> String {
        match self {
            ServiceError::Remote { error, .. } => error.clone(),
            ServiceError::Math(e) => format!("{e:?}").split(['(', ' ', '{']).next().unwrap_or_default().to_owned(),
            e => format!("{e:?}").split(['(', ' ', '{']).next().unwrap_or_default().to_owned(),
        }
    }
}
