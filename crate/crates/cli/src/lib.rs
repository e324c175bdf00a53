//! Client side of dualpass: device profiles, a line-protocol client and a
//! scenario runner that scripts several devices against one server.

pub mod builtins;
pub mod client;
pub mod profile;
pub mod scenario;

pub use builtins::{builtin, builtin_names};
pub use client::WireClient;
pub use profile::DeviceProfile;
pub use scenario::{run_scenario, Scenario, ScenarioReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("device profile: {0}")]
    Profile(String),
    #[error("connection: {0}")]
    Connection(String),
    #[error("scenario: {0}")]
    Scenario(String),
}

/// Resolves `builtin:NAME` or a path to a scenario file.
pub fn load_scenario(spec: &str) -> Result<Scenario, CliError> {
    match spec.strip_prefix("builtin:") {
        Some(name) => builtin(name).ok_or_else(|| {
            CliError::Scenario(format!(
                "no builtin scenario {name:?}; try one of {}",
                builtin_names().join(", ")
            ))
        }),
        None => Scenario::load(std::path::Path::new(spec)),
    }
}
