//! The quasi-matrix password converter.
//!
//! A login password of length L is converted position by position: unit `i`
//! maps the entered character to a string of `digit_i` characters. The L
//! strings are then shuffled into a single string by L - 1 labels, each of
//! which inserts the next string (forward or reversed) at an insertion point
//! of the running temporary string. The result is the authentication password.
//!
//! Everything here is a pure function of its inputs; the only mutable input
//! is the RNG handed to [`generate_converter`].

mod converter;
mod generate;
mod label;
mod shuffle;

pub mod fixtures;

use thiserror::Error;

pub use converter::{convert_chars, generate_auth_password, ConversionUnit, ConverterSpec, CONVERTER_FORMAT_VERSION};
pub use generate::{default_string_alphabet, generate_converter, sample_digits, GeneratorConfig, LOGIN_ALPHABET};
pub use label::{parse_label, Label, Order};
pub use shuffle::{insert_string, shuffle_strings};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConvError {
    #[error("malformed shuffling label {0}")]
    MalformedLabel(String),
    #[error("{strings} strings need {} labels, got {labels}", strings.saturating_sub(1))]
    ArityMismatch { strings: usize, labels: usize },
    #[error("strings to shuffle must be non-empty")]
    EmptyString,
    #[error("entered {got} characters, converter expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("character {ch:?} at position {position} is outside the login alphabet")]
    AlphabetViolation { position: usize, ch: char },
    #[error("no converter met the complexity rules within {attempts} attempts")]
    GenerationExhausted { attempts: usize },
    #[error("{units} digits in 1..={max_digit} cannot sum to {target_length}")]
    InfeasibleBudget {
        units: usize,
        target_length: usize,
        max_digit: usize,
    },
    #[error("invalid converter: {0}")]
    InvalidSpec(String),
}
