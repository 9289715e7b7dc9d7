//! Deterministic in-process deployments of five nodes with scripted clients,
//! fault injection, adversary-view capture and exhaustive small-field privacy
//! checks.

pub mod adversary;
pub mod deployment;
pub mod error;
pub mod hygiene;
pub mod privacy;
pub mod recovery;
pub mod scenario;

pub use adversary::AdversaryView;
pub use deployment::SimDeployment;
pub use error::HarnessError;
pub use privacy::{privacy_check_exhaustive, Gate, PrivacyVerdict, Variant};
pub use scenario::{run, RunReport, Scenario};
