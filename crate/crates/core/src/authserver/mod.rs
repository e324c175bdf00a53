//! System routines: username gating, password gating with isolated
//! authentication, registration, modification and cross-device link tokens.
//!
//! Sessions are created per client connection with the device descriptor the
//! client declares. The server alone decides what a session may do next; a
//! session whose field was disabled can never submit a password, whatever the
//! client does.

mod net;
mod protocol;

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use log::{info, warn};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use zeroize::Zeroizing;

use crate::clock::{Clock, SystemClock};
use crate::convcore::{generate_auth_password, generate_converter, ConvError, ConverterSpec, GeneratorConfig};
use crate::credstore::{
    AccountRecord, AttemptOutcome, AuthVerifier, CredStore, DeviceDescriptor, LockState, LockoutPolicy, StoreError,
};
use crate::identity::{
    derive_identifier, rerecord_identifier, verify_identifier, IdentifierMatch, IdentifierStrategy, IdentityError,
    ProcessIdentifier,
};
use crate::policy::{classify_field_input, validate_login_password, FieldClass, PolicyConfig, Violation};

pub use crate::credstore::LinkToken;
pub use net::{serve, spawn_server};
pub use protocol::Connection;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub policy: PolicyConfig,
    pub generator: GeneratorConfig,
    pub identifier_strategy: IdentifierStrategy,
    pub lockout: LockoutPolicy,
    pub link_ttl_secs: u64,
    /// Required by `admin_unlock`; without one, remote unlock is refused.
    pub admin_token: Option<String>,
    /// Offer the bound username back to a registered smartphone on hello.
    pub username_hint: bool,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            policy: PolicyConfig::default(),
            generator: GeneratorConfig::default(),
            identifier_strategy: IdentifierStrategy::default(),
            lockout: LockoutPolicy::default(),
            link_ttl_secs: 120,
            admin_token: None,
            username_hint: false,
        }
    }
}

impl ServerConfig {
    pub fn check(&self) -> Result<(), String> {
        self.policy.check()?;
        if self.generator.target_length != self.policy.auth_length {
            return Err(format!(
                "generator target_length {} differs from policy auth_length {}",
                self.generator.target_length, self.policy.auth_length
            ));
        }
        if self.generator.target_length < self.policy.login_max {
            return Err(format!(
                "target_length {} is shorter than the longest login password ({})",
                self.generator.target_length, self.policy.login_max
            ));
        }
        let needed = self.generator.target_length.div_ceil(self.policy.login_min.max(1));
        if self.generator.max_digit < needed {
            return Err(format!(
                "max_digit {} cannot stretch {} characters to {}",
                self.generator.max_digit, self.policy.login_min, self.generator.target_length
            ));
        }
        if self.generator.min_classes < self.policy.auth_min_classes
            || self.generator.first_window != self.policy.first_window
        {
            return Err("generator complexity rules are weaker than the policy".into());
        }
        if self.lockout.max_attempts == 0 {
            return Err("lockout.max_attempts must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum AuthError {
    #[error("password policy violated")]
    PolicyViolation(Vec<Violation>),
    #[error("username {0:?} is already registered")]
    DuplicateUsername(String),
    #[error("this smartphone is already bound to another account")]
    DeviceAlreadyBound,
    #[error("registration requires a smartphone")]
    NotASmartphone,
    #[error("link tokens are issued to non-smartphone devices only")]
    SmartphoneCannotIssue,
    #[error("session is not authenticated on the registered smartphone")]
    NotAuthenticated,
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error("link token expired")]
    TokenExpired,
    #[error("link token already used")]
    TokenUsed,
    #[error("unknown link token")]
    TokenUnknown,
    #[error("a phone can only log devices into its own account")]
    AccountMismatch,
    #[error("no account named {0:?}")]
    UnknownAccount(String),
    #[error("admin operation refused")]
    Unauthorized,
    #[error("invalid device descriptor: {0}")]
    InvalidDevice(String),
    #[error(transparent)]
    Store(StoreError),
    #[error("converter generation failed: {0}")]
    Generation(#[from] ConvError),
    #[error("process identifier failure: {0}")]
    Identity(#[from] IdentityError),
}

impl From<StoreError> for AuthError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::DuplicateUsername(u) => AuthError::DuplicateUsername(u),
            StoreError::DeviceAlreadyBound => AuthError::DeviceAlreadyBound,
            StoreError::UnknownAccount(u) => AuthError::UnknownAccount(u),
            StoreError::UnknownToken(_) => AuthError::TokenUnknown,
            other => AuthError::Store(other),
        }
    }
}

impl AuthError {
    /// Stable machine-readable code used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            AuthError::PolicyViolation(_) => "policy_violation",
            AuthError::DuplicateUsername(_) => "duplicate_username",
            AuthError::DeviceAlreadyBound => "device_already_bound",
            AuthError::NotASmartphone => "not_a_smartphone",
            AuthError::SmartphoneCannotIssue => "smartphone_cannot_issue",
            AuthError::NotAuthenticated => "not_authenticated",
            AuthError::ProtocolError(_) => "protocol_error",
            AuthError::TokenExpired => "token_expired",
            AuthError::TokenUsed => "token_used",
            AuthError::TokenUnknown => "token_unknown",
            AuthError::AccountMismatch => "account_mismatch",
            AuthError::UnknownAccount(_) => "unknown_account",
            AuthError::Unauthorized => "unauthorized",
            AuthError::InvalidDevice(_) => "invalid_device",
            AuthError::Store(_) => "store_error",
            AuthError::Generation(_) => "generation_failed",
            AuthError::Identity(_) => "identifier_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Phase {
    Fresh,
    UsernameAccepted(String),
    /// Absorbing: nothing typed into this session is processed again.
    FieldDisabled,
    Authenticated(String),
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub device: DeviceDescriptor,
    pub phase: Phase,
    pub session_token: Option<String>,
    pub issued_token: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldState {
    Enabled,
    Disabled,
}

impl FieldState {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldState::Enabled => "enabled",
            FieldState::Disabled => "disabled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PasswordOutcome {
    Granted { session_token: String },
    Denied,
    LockedOut,
    Disabled,
}

impl PasswordOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            PasswordOutcome::Granted { .. } => "granted",
            PasswordOutcome::Denied => "denied",
            PasswordOutcome::LockedOut => "locked_out",
            PasswordOutcome::Disabled => "disabled",
        }
    }
}

/// What registration reveals to the client: nothing about the converter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistrationInfo {
    pub target_length: usize,
    pub strategy: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IssuedLink {
    pub token: String,
    pub expires_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LinkStatus {
    Pending,
    Granted { username: String, session_token: String },
    Expired,
}

/// The authentication server. All methods take `&self`; account mutations are
/// serialized through the store lock, which is always taken after the session
/// lock when both are needed.
pub struct AuthServer {
    config: ServerConfig,
    store: Mutex<CredStore>,
    sessions: Mutex<HashMap<String, Session>>,
    rng: Mutex<ChaCha20Rng>,
    clock: Arc<dyn Clock>,
    initiations: AtomicU64,
}

impl std::fmt::Debug for AuthServer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AuthServer")
            .field("config", &self.config)
            .field("initiations", &self.initiations)
            .finish_non_exhaustive()
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl AuthServer {
    /// `seed` pins every random choice (test mode); otherwise the generator is
    /// seeded from OS entropy.
    pub fn new(
        config: ServerConfig,
        store: CredStore,
        clock: Arc<dyn Clock>,
        seed: Option<u64>,
    ) -> Result<Self, AuthError> {
        config.check().map_err(AuthError::ProtocolError)?;
        let rng = match seed.or(config.generator.rng_seed) {
            Some(seed) => ChaCha20Rng::seed_from_u64(seed),
            None => ChaCha20Rng::from_entropy(),
        };
        Ok(AuthServer {
            config,
            store: Mutex::new(store),
            sessions: Mutex::new(HashMap::new()),
            rng: Mutex::new(rng),
            clock,
            initiations: AtomicU64::new(0),
        })
    }

    pub fn with_defaults(store: CredStore) -> Result<Self, AuthError> {
        Self::new(ServerConfig::default(), store, Arc::new(SystemClock), None)
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    /// How many times the isolated authentication step has run.
    pub fn authentication_initiations(&self) -> u64 {
        self.initiations.load(Ordering::SeqCst)
    }

    pub fn with_store<T>(&self, f: impl FnOnce(&CredStore) -> T) -> T {
        f(&lock(&self.store))
    }

    fn random_hex(&self, bytes: usize) -> String {
        let mut buf = vec![0u8; bytes];
        lock(&self.rng).fill_bytes(&mut buf);
        hex::encode(buf)
    }

    pub fn open_session(&self, device: DeviceDescriptor) -> Result<String, AuthError> {
        device.check().map_err(AuthError::InvalidDevice)?;
        let id = self.random_hex(8);
        let session = Session {
            id: id.clone(),
            device,
            phase: Phase::Fresh,
            session_token: None,
            issued_token: None,
        };
        lock(&self.sessions).insert(id.clone(), session);
        Ok(id)
    }

    pub fn close_session(&self, id: &str) {
        lock(&self.sessions).remove(id);
    }

    pub fn session(&self, id: &str) -> Option<Session> {
        lock(&self.sessions).get(id).cloned()
    }

    /// Username bound to this device, if hints are enabled.
    pub fn username_hint(&self, device: &DeviceDescriptor) -> Option<String> {
        if !self.config.username_hint {
            return None;
        }
        lock(&self.store).find_by_device(device).map(|a| a.username.clone())
    }

    pub fn handle_username_entry(&self, session_id: &str, username: &str) -> Result<FieldState, AuthError> {
        let mut sessions = lock(&self.sessions);
        let session = sessions
            .get_mut(session_id)
            .ok_or_else(|| AuthError::ProtocolError("unknown session".into()))?;
        if session.phase != Phase::Fresh {
            return Err(AuthError::ProtocolError(
                "username entry is only accepted on a fresh session".into(),
            ));
        }
        let bound = lock(&self.store)
            .find_by_username(username)
            .is_some_and(|a| a.device == session.device);
        if bound {
            session.phase = Phase::UsernameAccepted(username.to_owned());
            Ok(FieldState::Enabled)
        } else {
            info!("session {session_id}: no registered smartphone for entered username, field disabled");
            session.phase = Phase::FieldDisabled;
            Ok(FieldState::Disabled)
        }
    }

    pub fn handle_password_entry(&self, session_id: &str, input: &str) -> Result<PasswordOutcome, AuthError> {
        let mut sessions = lock(&self.sessions);
        let session = sessions
            .get_mut(session_id)
            .ok_or_else(|| AuthError::ProtocolError("unknown session".into()))?;

        let Phase::UsernameAccepted(username) = session.phase.clone() else {
            return Ok(PasswordOutcome::Disabled);
        };

        if classify_field_input(input, &self.config.policy) == FieldClass::StrengthViolation {
            info!("session {session_id}: strength violation in password field, locked out");
            session.phase = Phase::FieldDisabled;
            return Ok(PasswordOutcome::LockedOut);
        }

        let mut store = lock(&self.store);
        let now = self.clock.now();
        let Some(account) = store.find_by_username(&username).cloned() else {
            session.phase = Phase::FieldDisabled;
            return Ok(PasswordOutcome::Disabled);
        };

        if let LockState::Locked { .. } = account.lock_state_at(now, &self.config.lockout) {
            return Ok(PasswordOutcome::LockedOut);
        }

        // no identifier is bound to any other device
        if account.device != session.device {
            warn!("session {session_id}: identifier lookup for unbound device");
            session.phase = Phase::FieldDisabled;
            return Ok(PasswordOutcome::Disabled);
        }

        let identified = input.chars().count() == account.converter.len()
            && verify_identifier(&account.converter, input, &account.process_identifier)? == IdentifierMatch::Match;
        if !identified {
            let state = store.record_attempt(&username, AttemptOutcome::Failure, now, &self.config.lockout)?;
            info!("session {session_id}: process identifier mismatch for {username} ({state:?})");
            return Ok(PasswordOutcome::Denied);
        }

        self.initiations.fetch_add(1, Ordering::SeqCst);
        let authenticated = {
            let regenerated = Zeroizing::new(generate_auth_password(&account.converter, input)?);
            account.auth_verifier.verify(&regenerated)
        };

        if authenticated {
            store.record_attempt(&username, AttemptOutcome::Success, now, &self.config.lockout)?;
            let token = self.random_hex(16);
            session.phase = Phase::Authenticated(username.clone());
            session.session_token = Some(token.clone());
            info!("session {session_id}: {username} authenticated");
            Ok(PasswordOutcome::Granted { session_token: token })
        } else {
            let state = store.record_attempt(&username, AttemptOutcome::Failure, now, &self.config.lockout)?;
            info!("session {session_id}: authentication failed for {username} ({state:?})");
            Ok(PasswordOutcome::Denied)
        }
    }

    /// Builds converter, identifier and verifier for `login_password`.
    fn build_credentials(
        &self,
        login_password: &str,
    ) -> Result<(ConverterSpec, ProcessIdentifier, AuthVerifier), AuthError> {
        let mut rng = lock(&self.rng);
        let converter = generate_converter(login_password, &self.config.generator, &mut *rng)?;
        let identifier = derive_identifier(&converter, login_password, self.config.identifier_strategy, &mut *rng)?;
        let registered = Zeroizing::new(generate_auth_password(&converter, login_password)?);
        let verifier = AuthVerifier::new(&registered, &mut *rng);
        Ok((converter, identifier, verifier))
    }

    pub fn register(
        &self,
        session_id: &str,
        username: &str,
        personal_info: BTreeMap<String, String>,
        login_password: &str,
    ) -> Result<RegistrationInfo, AuthError> {
        let device = self
            .session(session_id)
            .ok_or_else(|| AuthError::ProtocolError("unknown session".into()))?
            .device;
        if !device.is_smartphone() {
            return Err(AuthError::NotASmartphone);
        }
        if username.trim().is_empty() || username.chars().any(char::is_control) {
            return Err(AuthError::ProtocolError(
                "username must be non-empty printable text".into(),
            ));
        }
        validate_login_password(login_password, &self.config.policy).map_err(AuthError::PolicyViolation)?;

        let mut store = lock(&self.store);
        if store.find_by_username(username).is_some() {
            return Err(AuthError::DuplicateUsername(username.to_owned()));
        }
        let (converter, process_identifier, auth_verifier) = self.build_credentials(login_password)?;
        let record = AccountRecord {
            username: username.to_owned(),
            user_identifier: device.phone_number.clone(),
            personal_info,
            device,
            converter,
            auth_verifier,
            process_identifier,
            failed_attempts: 0,
            lock_state: LockState::Unlocked,
            version: 1,
        };
        store.create_account(record)?;
        info!("registered account {username}");
        Ok(RegistrationInfo {
            target_length: self.config.generator.target_length,
            strategy: self.config.identifier_strategy.kind_name(),
        })
    }

    /// Account name of a session authenticated on the account's own smartphone.
    fn authenticated_owner(&self, session_id: &str) -> Result<(String, DeviceDescriptor), AuthError> {
        let session = self.session(session_id).ok_or(AuthError::NotAuthenticated)?;
        let Phase::Authenticated(username) = session.phase else {
            return Err(AuthError::NotAuthenticated);
        };
        let bound = lock(&self.store)
            .find_by_username(&username)
            .is_some_and(|a| a.device == session.device);
        if !bound {
            return Err(AuthError::NotAuthenticated);
        }
        Ok((username, session.device))
    }

    pub fn modify_login_password(&self, session_id: &str, new_login_password: &str) -> Result<(), AuthError> {
        let (username, _) = self.authenticated_owner(session_id)?;
        validate_login_password(new_login_password, &self.config.policy).map_err(AuthError::PolicyViolation)?;
        let mut store = lock(&self.store);
        let account = store
            .find_by_username(&username)
            .ok_or_else(|| AuthError::UnknownAccount(username.clone()))?
            .clone();

        let (converter, identifier, verifier) = if new_login_password.chars().count() == account.converter.len() {
            let mut converter = account.converter.clone();
            for (unit, c) in converter.units.iter_mut().zip(new_login_password.chars()) {
                unit.rekey(c)?;
            }
            let identifier = rerecord_identifier(
                &converter,
                new_login_password,
                &account.process_identifier,
                &mut *lock(&self.rng),
            )?;
            (converter, identifier, account.auth_verifier.clone())
        } else {
            self.build_credentials(new_login_password)?
        };
        store.update_account(&username, |a| {
            a.converter = converter;
            a.process_identifier = identifier;
            a.auth_verifier = verifier;
            a.version += 1;
        })?;
        info!("login password modified for {username}");
        Ok(())
    }

    /// Returns whether the modification was applied.
    pub fn modify_auth_password(&self, session_id: &str, accept: bool) -> Result<bool, AuthError> {
        let (username, _) = self.authenticated_owner(session_id)?;
        if !accept {
            info!("authentication password change declined by {username}");
            return Ok(false);
        }
        let mut store = lock(&self.store);
        let login = store
            .find_by_username(&username)
            .ok_or_else(|| AuthError::UnknownAccount(username.clone()))?
            .converter
            .registered_login();
        let login = Zeroizing::new(login);
        let (converter, identifier, verifier) = self.build_credentials(&login)?;
        store.update_account(&username, |a| {
            a.converter = converter;
            a.process_identifier = identifier;
            a.auth_verifier = verifier;
            a.version += 1;
        })?;
        info!("authentication password regenerated for {username}");
        Ok(true)
    }

    pub fn issue_link_token(&self, session_id: &str) -> Result<IssuedLink, AuthError> {
        let mut sessions = lock(&self.sessions);
        let session = sessions
            .get_mut(session_id)
            .ok_or_else(|| AuthError::ProtocolError("unknown session".into()))?;
        if session.device.is_smartphone() {
            return Err(AuthError::SmartphoneCannotIssue);
        }
        if session.phase != Phase::Fresh {
            return Err(AuthError::ProtocolError(
                "link tokens are issued to fresh sessions only".into(),
            ));
        }
        let now = self.clock.now();
        let token = self.random_hex(16);
        let link = LinkToken {
            token: token.clone(),
            desktop_session: session_id.to_owned(),
            issued_at: now,
            expires_at: now + self.config.link_ttl_secs,
            used: false,
            redeemed_for: None,
        };
        let mut store = lock(&self.store);
        store.prune_link_tokens(now)?;
        store.insert_link_token(link)?;
        session.issued_token = Some(token.clone());
        Ok(IssuedLink {
            token,
            expires_at: now + self.config.link_ttl_secs,
        })
    }

    /// Logs the token's desktop session into the redeeming phone's account and
    /// returns the desktop's new session token.
    pub fn redeem_link_token(
        &self,
        session_id: &str,
        token: &str,
        username: Option<&str>,
    ) -> Result<String, AuthError> {
        let (owner, device) = self.authenticated_owner(session_id)?;
        if !device.is_smartphone() {
            return Err(AuthError::NotAuthenticated);
        }
        if username.is_some_and(|u| u != owner) {
            warn!("session {session_id}: attempt to redeem a link token into another account");
            return Err(AuthError::AccountMismatch);
        }
        let mut sessions = lock(&self.sessions);
        let mut store = lock(&self.store);
        let now = self.clock.now();
        let link = store.link_token(token).ok_or(AuthError::TokenUnknown)?.clone();
        if link.used {
            return Err(AuthError::TokenUsed);
        }
        if link.is_expired(now) {
            return Err(AuthError::TokenExpired);
        }
        let desktop = sessions
            .get_mut(&link.desktop_session)
            .filter(|s| s.phase == Phase::Fresh)
            .ok_or(AuthError::TokenUnknown)?;
        let desktop_token = self.random_hex(16);
        store.update_link_token(token, |t| {
            t.used = true;
            t.redeemed_for = Some(owner.clone());
        })?;
        desktop.phase = Phase::Authenticated(owner.clone());
        desktop.session_token = Some(desktop_token.clone());
        info!(
            "link token redeemed: desktop session {} logged into {owner}",
            link.desktop_session
        );
        Ok(desktop_token)
    }

    pub fn link_status(&self, session_id: &str) -> Result<LinkStatus, AuthError> {
        let session = self
            .session(session_id)
            .ok_or_else(|| AuthError::ProtocolError("unknown session".into()))?;
        if let (Phase::Authenticated(username), Some(token)) = (&session.phase, &session.session_token) {
            return Ok(LinkStatus::Granted {
                username: username.clone(),
                session_token: token.clone(),
            });
        }
        let token = session.issued_token.ok_or(AuthError::TokenUnknown)?;
        let store = lock(&self.store);
        match store.link_token(&token) {
            Some(t) if !t.used && !t.is_expired(self.clock.now()) => Ok(LinkStatus::Pending),
            _ => Ok(LinkStatus::Expired),
        }
    }

    pub fn admin_unlock(&self, username: &str, admin_token: &str) -> Result<(), AuthError> {
        match &self.config.admin_token {
            Some(expected) if !expected.is_empty() && expected == admin_token => {}
            _ => return Err(AuthError::Unauthorized),
        }
        lock(&self.store).unlock(username)?;
        info!("account {username} unlocked by admin");
        Ok(())
    }

    /// Regenerates an account's registered authentication password. Exists so
    /// attack scenarios can model a stolen authentication password; the
    /// server never calls it.
    #[doc(hidden)]
    pub fn reveal_auth_password_for_testing(&self, username: &str) -> Option<String> {
        let store = lock(&self.store);
        let converter = &store.find_by_username(username)?.converter;
        generate_auth_password(converter, &converter.registered_login()).ok()
    }

    /// Pre-draws from the server RNG, for tests that need values independent
    /// of the server's own draws.
    #[doc(hidden)]
    pub fn random_u64(&self) -> u64 {
        lock(&self.rng).gen()
    }
}

#[cfg(test)]
mod tests;
