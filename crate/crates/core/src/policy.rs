//! Length and complexity policies for the two passwords, and classification of
//! whatever arrives in the password field.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Character class of a single character.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CharClass {
    Upper,
    Lower,
    Digit,
    Symbol,
}

impl CharClass {
    /// Symbols are printable ASCII other than letters, digits and space.
    /// Anything else (space, control, non-ASCII) has no class.
    pub fn of(c: char) -> Option<CharClass> {
        match c {
            'A'..='Z' => Some(CharClass::Upper),
            'a'..='z' => Some(CharClass::Lower),
            '0'..='9' => Some(CharClass::Digit),
            '!'..='~' => Some(CharClass::Symbol),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub login_min: usize,
    pub login_max: usize,
    pub login_classes: BTreeSet<CharClass>,
    pub auth_min_classes: usize,
    pub auth_length: usize,
    pub first_window: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            login_min: 5,
            login_max: 15,
            login_classes: [CharClass::Lower, CharClass::Digit].into_iter().collect(),
            auth_min_classes: 4,
            auth_length: 20,
            first_window: 4,
        }
    }
}

impl PolicyConfig {
    pub fn check(&self) -> Result<(), String> {
        if self.login_min > self.login_max {
            return Err(format!(
                "login_min {} exceeds login_max {}",
                self.login_min, self.login_max
            ));
        }
        if self.auth_min_classes > 4 {
            return Err(format!(
                "auth_min_classes {} exceeds the four available classes",
                self.auth_min_classes
            ));
        }
        if self.login_classes.is_empty() {
            return Err("login_classes is empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    TooShort,
    TooLong,
    /// 1-based position of the offending character.
    InvalidCharacter {
        position: usize,
    },
    MissingClasses,
    FirstWindowRule,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    #[serde(flatten)]
    pub kind: ViolationKind,
    pub detail: String,
}

impl Violation {
    fn new(kind: ViolationKind, detail: impl Into<String>) -> Self {
        Violation {
            kind,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.detail)
    }
}

/// Outcome of screening a password-field input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldClass {
    LocalCandidate,
    StrengthViolation,
}

pub fn char_classes(s: &str) -> BTreeSet<CharClass> {
    s.chars().filter_map(CharClass::of).collect()
}

/// Reports every violation, not just the first.
pub fn validate_login_password(s: &str, cfg: &PolicyConfig) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    let len = s.chars().count();
    if len < cfg.login_min {
        violations.push(Violation::new(
            ViolationKind::TooShort,
            format!("login password has {len} characters, minimum is {}", cfg.login_min),
        ));
    }
    if len > cfg.login_max {
        violations.push(Violation::new(
            ViolationKind::TooLong,
            format!("login password has {len} characters, maximum is {}", cfg.login_max),
        ));
    }
    for (i, c) in s.chars().enumerate() {
        let valid = CharClass::of(c).is_some_and(|class| cfg.login_classes.contains(&class));
        if !valid {
            violations.push(Violation::new(
                ViolationKind::InvalidCharacter { position: i + 1 },
                format!("character at position {} is not allowed", i + 1),
            ));
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Class-count and first-window checks shared by validation and generation.
pub(crate) fn complexity_violations(s: &str, min_classes: usize, first_window: usize) -> Vec<Violation> {
    let mut violations = Vec::new();
    let classes = char_classes(s);
    if classes.len() < min_classes {
        violations.push(Violation::new(
            ViolationKind::MissingClasses,
            format!(
                "authentication password has {} character classes, at least {min_classes} required",
                classes.len()
            ),
        ));
    }
    let window_ok = s
        .chars()
        .take(first_window)
        .any(|c| matches!(CharClass::of(c), Some(CharClass::Upper) | Some(CharClass::Symbol)));
    if first_window > 0 && !window_ok {
        violations.push(Violation::new(
            ViolationKind::FirstWindowRule,
            format!("first {first_window} characters contain no uppercase letter or symbol"),
        ));
    }
    violations
}

pub fn validate_auth_password(s: &str, cfg: &PolicyConfig) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    let len = s.chars().count();
    if len < cfg.auth_length {
        violations.push(Violation::new(
            ViolationKind::TooShort,
            format!(
                "authentication password has {len} characters, expected {}",
                cfg.auth_length
            ),
        ));
    } else if len > cfg.auth_length {
        violations.push(Violation::new(
            ViolationKind::TooLong,
            format!(
                "authentication password has {len} characters, expected {}",
                cfg.auth_length
            ),
        ));
    }
    violations.extend(complexity_violations(s, cfg.auth_min_classes, cfg.first_window));
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Only inputs that could be a login password are local candidates; anything
/// else (including every authentication password) is refused by the field.
pub fn classify_field_input(s: &str, cfg: &PolicyConfig) -> FieldClass {
    match validate_login_password(s, cfg) {
        Ok(()) => FieldClass::LocalCandidate,
        Err(_) => FieldClass::StrengthViolation,
    }
}
