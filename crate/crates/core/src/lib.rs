//! Dual-password login authentication.
//!
//! Users type a short login password made of lowercase letters and digits.
//! The server converts it, through a per-account quasi-matrix converter, into
//! a long authentication password that is never typed and never leaves the
//! server. Login is only processed from the smartphone the account was
//! registered on, and only after the entered password matches the account's
//! process identifier.
//!
//! Module map:
//! - [`convcore`]: conversion units, shuffling labels, converter generation
//! - [`policy`]: password policies and password-field screening
//! - [`identity`]: process identifiers
//! - [`credstore`]: durable account storage
//! - [`authserver`]: the routines and the wire protocol

pub mod authserver;
pub mod clock;
pub mod convcore;
pub mod credstore;
pub mod identity;
pub mod policy;

#[cfg(test)]
pub(crate) mod testutil;

pub use authserver::{AuthError, AuthServer, Connection, FieldState, PasswordOutcome, ServerConfig};
pub use clock::{Clock, MockClock, SystemClock};
pub use convcore::{ConverterSpec, GeneratorConfig, Label};
pub use credstore::{CredStore, DeviceDescriptor, DeviceKind};
pub use identity::{IdentifierStrategy, ProcessIdentifier};
pub use policy::PolicyConfig;
