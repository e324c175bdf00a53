use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{shuffle_strings, ConvError, Label};

/// Current version of the converter's persisted form.
pub const CONVERTER_FORMAT_VERSION: u32 = 1;

/// One row of the converter: the login character expected at this position,
/// its character digit, and a substitution table taking every login-alphabet
/// character to a distinct string of exactly `digit` characters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionUnit {
    pub position: usize,
    pub expected_char: char,
    pub digit: usize,
    pub table: BTreeMap<char, String>,
}

impl ConversionUnit {
    /// The string registered for this row, i.e. the image of `expected_char`.
    pub fn registered_string(&self) -> &str {
        self.table
            .get(&self.expected_char)
            .map(String::as_str)
            .unwrap_or_default()
    }

    pub fn convert(&self, c: char) -> Option<&str> {
        self.table.get(&c).map(String::as_str)
    }

    /// Re-keys the row to a new expected character without changing what the
    /// row produces for its expected character: the new character takes over
    /// the registered string and the old holder gets the new character's
    /// previous string.
    pub fn rekey(&mut self, new_char: char) -> Result<(), ConvError> {
        if !self.table.contains_key(&new_char) {
            return Err(ConvError::AlphabetViolation {
                position: self.position,
                ch: new_char,
            });
        }
        if new_char != self.expected_char {
            let registered = self.table[&self.expected_char].clone();
            let displaced = self.table.insert(new_char, registered).unwrap_or_default();
            self.table.insert(self.expected_char, displaced);
            self.expected_char = new_char;
        }
        Ok(())
    }

    fn check(&self) -> Result<(), ConvError> {
        let invalid = |why: String| ConvError::InvalidSpec(format!("unit {}: {why}", self.position));
        if self.digit == 0 {
            return Err(invalid("character digit is 0".into()));
        }
        if !self.table.contains_key(&self.expected_char) {
            return Err(invalid(format!(
                "expected character {:?} missing from table",
                self.expected_char
            )));
        }
        let mut seen = HashSet::with_capacity(self.table.len());
        for (c, s) in &self.table {
            if s.chars().count() != self.digit {
                return Err(invalid(format!(
                    "entry for {c:?} has length {}, digit is {}",
                    s.chars().count(),
                    self.digit
                )));
            }
            if !seen.insert(s.as_str()) {
                return Err(invalid(format!("entry for {c:?} duplicates another entry")));
            }
        }
        Ok(())
    }
}

/// The quasi-matrix converter of one account: ordered units plus the labels
/// that shuffle units 2..L into the running string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConverterSpec {
    pub version: u32,
    pub target_length: usize,
    pub units: Vec<ConversionUnit>,
    pub labels: Vec<Label>,
}

impl ConverterSpec {
    pub fn new(units: Vec<ConversionUnit>, labels: Vec<Label>) -> Result<Self, ConvError> {
        let target_length = units.iter().map(|u| u.digit).sum();
        let spec = ConverterSpec {
            version: CONVERTER_FORMAT_VERSION,
            target_length,
            units,
            labels,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Number of units, i.e. the login-password length this converter takes.
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// The login password the converter was registered with.
    pub fn registered_login(&self) -> String {
        self.units.iter().map(|u| u.expected_char).collect()
    }

    pub fn validate(&self) -> Result<(), ConvError> {
        if self.version != CONVERTER_FORMAT_VERSION {
            return Err(ConvError::InvalidSpec(format!(
                "unsupported converter version {}",
                self.version
            )));
        }
        if self.units.is_empty() {
            return Err(ConvError::InvalidSpec("converter has no units".into()));
        }
        for (i, unit) in self.units.iter().enumerate() {
            if unit.position != i + 1 {
                return Err(ConvError::InvalidSpec(format!(
                    "unit at index {i} has position {}",
                    unit.position
                )));
            }
            unit.check()?;
        }
        if self.labels.len() + 1 != self.units.len() {
            return Err(ConvError::ArityMismatch {
                strings: self.units.len(),
                labels: self.labels.len(),
            });
        }
        let total: usize = self.units.iter().map(|u| u.digit).sum();
        if total != self.target_length {
            return Err(ConvError::InvalidSpec(format!(
                "digits sum to {total}, target length is {}",
                self.target_length
            )));
        }
        Ok(())
    }
}

/// Converts each entered character through its unit's table.
pub fn convert_chars<'a>(spec: &'a ConverterSpec, entered: &str) -> Result<Vec<&'a str>, ConvError> {
    let got = entered.chars().count();
    if got != spec.len() {
        return Err(ConvError::LengthMismatch {
            expected: spec.len(),
            got,
        });
    }
    spec.units
        .iter()
        .zip(entered.chars())
        .map(|(unit, c)| {
            unit.convert(c).ok_or(ConvError::AlphabetViolation {
                position: unit.position,
                ch: c,
            })
        })
        .collect()
}

pub fn generate_auth_password(spec: &ConverterSpec, entered: &str) -> Result<String, ConvError> {
    let strings = convert_chars(spec, entered)?;
    shuffle_strings(&strings, &spec.labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convcore::{fixtures, parse_label, LOGIN_ALPHABET};

    #[test]
    fn worked_conversion() {
        let spec = fixtures::worked_example();
        assert_eq!(
            convert_chars(&spec, "b@0N8m").unwrap(),
            vec!["3Mo&(E", "vX#", "z%9CP", "?G", "d$L", "Q"]
        );
        assert_eq!(generate_auth_password(&spec, "b@0N8m").unwrap(), "3MovQX#&(EPC9L$d?G%z");
        assert_eq!(spec.target_length, 20);
        assert_eq!(spec.registered_login(), "b@0N8m");
    }

    #[test]
    fn deterministic() {
        let spec = fixtures::worked_example();
        let a = generate_auth_password(&spec, "b@0N8m").unwrap();
        let b = generate_auth_password(&spec, "b@0N8m").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_perturbations_change_exactly_one_position() {
        let spec = fixtures::worked_example();
        let registered = convert_chars(&spec, "b@0N8m").unwrap();
        let chars: Vec<char> = "b@0N8m".chars().collect();
        for pos in 0..chars.len() {
            for c in LOGIN_ALPHABET.chars().filter(|&c| c != chars[pos]) {
                let mut entered = chars.clone();
                entered[pos] = c;
                let entered: String = entered.into_iter().collect();
                let got = convert_chars(&spec, &entered).unwrap();
                let differing: Vec<usize> = (0..got.len()).filter(|&i| got[i] != registered[i]).collect();
                assert_eq!(differing, vec![pos], "entered {entered:?}");
            }
        }
    }

    #[test]
    fn conversion_errors() {
        let spec = fixtures::worked_example();
        assert!(matches!(
            convert_chars(&spec, "b@0N8"),
            Err(ConvError::LengthMismatch { expected: 6, got: 5 })
        ));
        assert!(matches!(
            convert_chars(&spec, "b@0N8~"),
            Err(ConvError::AlphabetViolation { position: 6, ch: '~' })
        ));
    }

    #[test]
    fn rekey_keeps_registered_strings() {
        let mut spec = fixtures::worked_example();
        let before = generate_auth_password(&spec, "b@0N8m").unwrap();
        for (unit, c) in spec.units.iter_mut().zip("abc123".chars()) {
            unit.rekey(c).unwrap();
        }
        spec.validate().unwrap();
        assert_eq!(generate_auth_password(&spec, "abc123").unwrap(), before);
        assert_ne!(generate_auth_password(&spec, "b@0N8m").unwrap(), before);
        assert_eq!(spec.registered_login(), "abc123");
    }

    #[test]
    fn validate_catches_broken_specs() {
        let good = fixtures::worked_example();

        let mut dup = good.clone();
        let first = dup.units[0].table.values().next().unwrap().clone();
        let key = *dup.units[0].table.keys().nth(1).unwrap();
        dup.units[0].table.insert(key, first);
        assert!(matches!(dup.validate(), Err(ConvError::InvalidSpec(_))));

        let mut short = good.clone();
        short.units[2].table.insert('a', "xy".into());
        assert!(short.validate().is_err());

        let mut gap = good.clone();
        gap.units[3].position = 9;
        assert!(gap.validate().is_err());

        let mut sum = good.clone();
        sum.target_length = 21;
        assert!(sum.validate().is_err());

        let mut labels = good;
        labels.labels.push(parse_label("1F").unwrap());
        assert!(matches!(labels.validate(), Err(ConvError::ArityMismatch { .. })));
    }

    #[test]
    fn json_round_trip() {
        let spec = fixtures::worked_example();
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.starts_with("{\"version\":1,\"target_length\":20,\"units\":["));
        let back: ConverterSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }
}
