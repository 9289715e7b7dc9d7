use thiserror::Error;
use trustworthy_harness::HarnessError;
use trustworthy_node::NodeError;
use trustworthy_services::ServiceError;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("scenario failed at steps {0:?}")]
    ScenarioFailed(Vec<usize>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            _ => EXIT_FAILED,
        }
    }

    /// Stable name printed on failure; node errors keep the node's name.
    pub fn name(&self) -> String {
        match self {
            CliError::Usage(_) => "Usage".into(),
            CliError::Config(_) => "Config".into(),
            CliError::Service(e) => e.name(),
            CliError::Node(e) => format!("{e:?}").split(['(', ' ', '{']).next().unwrap_or_default().to_owned(),
            CliError::Harness(_) => "Harness".into(),
            CliError::Io(_) => "Io".into(),
            CliError::ScenarioFailed(_) => "ScenarioFailed".into(),
        }
    }
}
