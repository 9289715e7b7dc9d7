use thiserror::Error;
use trustworthy_core::{MathError, MpcError};
use trustworthy_node::NodeError;
use trustworthy_services::ServiceError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("script error: {0}")]
    Script(String),
    #[error("exhaustive checks refuse p = {0} (limit 7)")]
    FieldTooLarge(u64),
    #[error("p = {0} is not a prime of at least 3")]
    BadField(u64),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
