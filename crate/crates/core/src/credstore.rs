//! Durable credential store.
//!
//! The whole store is one JSON document followed by a checksum line:
//!
//! ```text
//! { ...canonical JSON... }
//! sha256:<hex of the JSON bytes>
//! ```
//!
//! Saves go to a sibling temp file which is synced and then renamed over the
//! store, so a crash leaves either the old or the new store on disk. Serialized
//! maps are `BTreeMap`s and struct fields serialize in declaration order, which
//! makes the encoding canonical: save/load/save is byte-identical.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::convcore::ConverterSpec;
use crate::identity::ProcessIdentifier;

pub const STORE_FORMAT_VERSION: u32 = 1;
pub const STORE_ENV: &str = "DUALPASS_STORE";
const CHECKSUM_PREFIX: &str = "sha256:";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("username {0:?} is already registered")]
    DuplicateUsername(String),
    #[error("this smartphone is already bound to another account")]
    DeviceAlreadyBound,
    #[error("no account named {0:?}")]
    UnknownAccount(String),
    #[error("no link token {0:?}")]
    UnknownToken(String),
    #[error("store is corrupt: {0}")]
    StoreCorrupt(String),
    #[error("store I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("simulated crash at {0:?}")]
    SimulatedCrash(CrashPoint),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    Smartphone,
    Desktop,
    Laptop,
    Tablet,
}

/// Self-declared identity of a client device. Two descriptors denote the
/// same device only if every field is equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeviceDescriptor {
    #[serde(default)]
    pub phone_number: String,
    #[serde(default)]
    pub imei: String,
    #[serde(default)]
    pub sim_id: String,
    pub device_kind: DeviceKind,
}

impl DeviceDescriptor {
    pub fn is_smartphone(&self) -> bool {
        self.device_kind == DeviceKind::Smartphone
    }

    pub fn check(&self) -> Result<(), String> {
        if self.is_smartphone() && self.phone_number.trim().is_empty() {
            return Err("a smartphone descriptor needs a phone number".into());
        }
        Ok(())
    }
}

/// Salted SHA-256 of the authentication password.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthVerifier {
    pub salt: String,
    pub hash: String,
}

impl AuthVerifier {
    pub fn new<R: Rng + ?Sized>(auth_password: &str, rng: &mut R) -> Self {
        let salt: [u8; 16] = rng.gen();
        AuthVerifier {
            salt: hex::encode(salt),
            hash: Self::digest(&salt, auth_password),
        }
    }

    fn digest(salt: &[u8], auth_password: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(salt);
        hasher.update(auth_password.as_bytes());
        hex::encode(hasher.finalize())
    }

    pub fn verify(&self, auth_password: &str) -> bool {
        let Ok(salt) = hex::decode(&self.salt) else {
            return false;
        };
        let candidate = Self::digest(&salt, auth_password);
        // constant-time compare over equal-length hex
        candidate.len() == self.hash.len()
            && candidate
                .bytes()
                .zip(self.hash.bytes())
                .fold(0u8, |acc, (a, b)| acc | (a ^ b))
                == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum LockState {
    Unlocked,
    Locked { since: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptOutcome {
    Success,
    Failure,
}

/// Consecutive-failure lockout settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LockoutPolicy {
    pub max_attempts: u32,
    /// `None` means locked accounts stay locked until an admin unlocks them.
    pub lock_expiry_secs: Option<u64>,
}

impl Default for LockoutPolicy {
    fn default() -> Self {
        LockoutPolicy {
            max_attempts: 3,
            lock_expiry_secs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountRecord {
    pub username: String,
    /// The phone number of the registered smartphone.
    pub user_identifier: String,
    #[serde(default)]
    pub personal_info: BTreeMap<String, String>,
    pub device: DeviceDescriptor,
    pub converter: ConverterSpec,
    pub auth_verifier: AuthVerifier,
    pub process_identifier: ProcessIdentifier,
    pub failed_attempts: u32,
    pub lock_state: LockState,
    pub version: u64,
}

impl AccountRecord {
    /// Lock state as of `now`, with expiry applied.
    pub fn lock_state_at(&self, now: u64, policy: &LockoutPolicy) -> LockState {
        match (self.lock_state, policy.lock_expiry_secs) {
            (LockState::Locked { since }, Some(ttl)) if now >= since.saturating_add(ttl) => LockState::Unlocked,
            (state, _) => state,
        }
    }

    /// Applies one attempt outcome to the failure counter and lock state.
    pub fn apply_attempt(&mut self, outcome: AttemptOutcome, now: u64, policy: &LockoutPolicy) -> LockState {
        if self.lock_state != LockState::Unlocked && self.lock_state_at(now, policy) == LockState::Unlocked {
            self.lock_state = LockState::Unlocked;
            self.failed_attempts = 0;
        }
        if let LockState::Locked { .. } = self.lock_state {
            return self.lock_state;
        }
        match outcome {
            AttemptOutcome::Success => self.failed_attempts = 0,
            AttemptOutcome::Failure => {
                self.failed_attempts = (self.failed_attempts + 1).min(policy.max_attempts);
                if self.failed_attempts >= policy.max_attempts {
                    self.lock_state = LockState::Locked { since: now };
                }
            }
        }
        self.lock_state
    }
}

/// A cross-device login token shown by a desktop and redeemed by a phone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkToken {
    pub token: String,
    pub desktop_session: String,
    pub issued_at: u64,
    pub expires_at: u64,
    pub used: bool,
    /// Account the desktop was logged into, once redeemed.
    #[serde(default)]
    pub redeemed_for: Option<String>,
}

impl LinkToken {
    pub fn is_expired(&self, now: u64) -> bool {
        now >= self.expires_at
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreFile {
    pub format_version: u32,
    pub accounts: BTreeMap<String, AccountRecord>,
    pub link_tokens: BTreeMap<String, LinkToken>,
}

impl Default for StoreFile {
    fn default() -> Self {
        StoreFile {
            format_version: STORE_FORMAT_VERSION,
            accounts: BTreeMap::new(),
            link_tokens: BTreeMap::new(),
        }
    }
}

impl StoreFile {
    pub fn encode(&self) -> String {
        let body = serde_json::to_string_pretty(self).expect("store serializes");
        let sum = hex::encode(Sha256::digest(body.as_bytes()));
        format!("{body}\n{CHECKSUM_PREFIX}{sum}\n")
    }

    pub fn decode(text: &str) -> Result<Self, StoreError> {
        let corrupt = |why: String| StoreError::StoreCorrupt(why);
        let trimmed = text
            .strip_suffix('\n')
            .ok_or_else(|| corrupt("missing trailing newline".into()))?;
        let (body, sum_line) = trimmed
            .rsplit_once('\n')
            .ok_or_else(|| corrupt("missing checksum line".into()))?;
        let sum = sum_line
            .strip_prefix(CHECKSUM_PREFIX)
            .ok_or_else(|| corrupt("malformed checksum line".into()))?;
        if hex::encode(Sha256::digest(body.as_bytes())) != sum {
            return Err(corrupt("checksum mismatch".into()));
        }
        let file: StoreFile = serde_json::from_str(body).map_err(|e| corrupt(format!("bad JSON: {e}")))?;
        if file.format_version != STORE_FORMAT_VERSION {
            return Err(corrupt(format!("unsupported format_version {}", file.format_version)));
        }
        Ok(file)
    }
}

/// Points inside [`CredStore`]'s save path where a crash can be simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrashPoint {
    /// Half of the new contents reached the temp file.
    PartialTempWrite,
    /// The temp file is complete and synced but was never renamed.
    BeforeRename,
}

/// Single-writer store. Mutations apply to a copy which replaces the live
/// state only after it is durable.
#[derive(Debug)]
pub struct CredStore {
    path: Option<PathBuf>,
    file: StoreFile,
}

impl CredStore {
    pub fn in_memory() -> Self {
        CredStore {
            path: None,
            file: StoreFile::default(),
        }
    }

    /// Opens the store at `path`, creating an empty one if absent. Leftover
    /// temp files from an interrupted save are ignored.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let file = match fs::read_to_string(&path) {
            Ok(text) => StoreFile::decode(&text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => StoreFile::default(),
            Err(e) => return Err(e.into()),
        };
        Ok(CredStore { path: Some(path), file })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn snapshot(&self) -> &StoreFile {
        &self.file
    }

    pub fn find_by_username(&self, username: &str) -> Option<&AccountRecord> {
        self.file.accounts.get(username)
    }

    pub fn find_by_device(&self, device: &DeviceDescriptor) -> Option<&AccountRecord> {
        self.file.accounts.values().find(|a| &a.device == device)
    }

    pub fn link_token(&self, token: &str) -> Option<&LinkToken> {
        self.file.link_tokens.get(token)
    }

    pub fn create_account(&mut self, record: AccountRecord) -> Result<(), StoreError> {
        if self.file.accounts.contains_key(&record.username) {
            return Err(StoreError::DuplicateUsername(record.username));
        }
        if record.device.is_smartphone()
            && self.file.accounts.values().any(|a| {
                a.device.is_smartphone()
                    && (a.device == record.device || a.device.phone_number == record.device.phone_number)
            })
        {
            return Err(StoreError::DeviceAlreadyBound);
        }
        self.transact(|file| {
            file.accounts.insert(record.username.clone(), record);
            Ok(())
        })
    }

    /// Applies `f` to one account and persists the result.
    pub fn update_account<T>(
        &mut self,
        username: &str,
        f: impl FnOnce(&mut AccountRecord) -> T,
    ) -> Result<T, StoreError> {
        self.transact(|file| {
            let account = file
                .accounts
                .get_mut(username)
                .ok_or_else(|| StoreError::UnknownAccount(username.to_owned()))?;
            Ok(f(account))
        })
    }

    pub fn record_attempt(
        &mut self,
        username: &str,
        outcome: AttemptOutcome,
        now: u64,
        policy: &LockoutPolicy,
    ) -> Result<LockState, StoreError> {
        self.update_account(username, |a| a.apply_attempt(outcome, now, policy))
    }

    pub fn unlock(&mut self, username: &str) -> Result<(), StoreError> {
        self.update_account(username, |a| {
            a.lock_state = LockState::Unlocked;
            a.failed_attempts = 0;
        })
    }

    pub fn insert_link_token(&mut self, token: LinkToken) -> Result<(), StoreError> {
        self.transact(|file| {
            file.link_tokens.insert(token.token.clone(), token);
            Ok(())
        })
    }

    pub fn update_link_token<T>(&mut self, token: &str, f: impl FnOnce(&mut LinkToken) -> T) -> Result<T, StoreError> {
        self.transact(|file| {
            let entry = file
                .link_tokens
                .get_mut(token)
                .ok_or_else(|| StoreError::UnknownToken(token.to_owned()))?;
            Ok(f(entry))
        })
    }

    /// Drops link tokens that expired before `now`.
    pub fn prune_link_tokens(&mut self, now: u64) -> Result<usize, StoreError> {
        let stale = self.file.link_tokens.values().filter(|t| t.is_expired(now)).count();
        if stale == 0 {
            return Ok(0);
        }
        self.transact(|file| {
            file.link_tokens.retain(|_, t| !t.is_expired(now));
            Ok(stale)
        })
    }

    fn transact<T>(&mut self, f: impl FnOnce(&mut StoreFile) -> Result<T, StoreError>) -> Result<T, StoreError> {
        let mut next = self.file.clone();
        let out = f(&mut next)?;
        if let Some(path) = &self.path {
            write_atomic(path, &next.encode(), None)?;
        }
        self.file = next;
        Ok(out)
    }

    /// Re-writes the current state, stopping at `crash` as a killed process
    /// would. Used by recovery tests.
    #[doc(hidden)]
    pub fn save_with_crash(&self, next: &StoreFile, crash: CrashPoint) -> Result<(), StoreError> {
        match &self.path {
            Some(path) => write_atomic(path, &next.encode(), Some(crash)),
            None => Err(StoreError::SimulatedCrash(crash)),
        }
    }

    pub fn save(&self) -> Result<(), StoreError> {
        match &self.path {
            Some(path) => write_atomic(path, &self.file.encode(), None),
            None => Ok(()),
        }
    }
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

fn write_atomic(path: &Path, contents: &str, crash: Option<CrashPoint>) -> Result<(), StoreError> {
    let tmp = temp_path(path);
    let mut f = OpenOptions::new().write(true).create(true).truncate(true).open(&tmp)?;
    if crash == Some(CrashPoint::PartialTempWrite) {
        f.write_all(&contents.as_bytes()[..contents.len() / 2])?;
        return Err(StoreError::SimulatedCrash(CrashPoint::PartialTempWrite));
    }
    f.write_all(contents.as_bytes())?;
    f.sync_all()?;
    drop(f);
    if crash == Some(CrashPoint::BeforeRename) {
        return Err(StoreError::SimulatedCrash(CrashPoint::BeforeRename));
    }
    fs::rename(&tmp, path)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        // directory fsync is best effort; not every platform allows it
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}
