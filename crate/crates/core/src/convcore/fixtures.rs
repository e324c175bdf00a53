//! The six-row worked example converter, for tests and demos.
//!
//! Its rows expect `b@0N8m` and register the strings `3Mo&(E`, `vX#`,
//! `z%9CP`, `?G`, `d$L`, `Q` with labels `4F 16R 13F 13R 5F`. The expected
//! characters are not all login-alphabet characters, so each table covers the
//! login alphabet plus the row's own expected character; the remaining
//! entries are filled deterministically.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{default_string_alphabet, parse_label, ConversionUnit, ConverterSpec, LOGIN_ALPHABET};

pub const WORKED_LOGIN: &str = "b@0N8m";
pub const WORKED_STRINGS: [&str; 6] = ["3Mo&(E", "vX#", "z%9CP", "?G", "d$L", "Q"];
pub const WORKED_LABELS: [&str; 5] = ["4F", "16R", "13F", "13R", "5F"];
pub const WORKED_AUTH: &str = "3MovQX#&(EPC9L$d?G%z";

/// Builds a unit whose table sends `expected` to `registered` and every other
/// key to a distinct filler string of the same length.
pub fn pinned_unit(position: usize, expected: char, registered: &str, seed: u64) -> ConversionUnit {
    let alphabet: Vec<char> = default_string_alphabet().chars().collect();
    let digit = registered.chars().count();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut used: HashSet<String> = HashSet::from([registered.to_owned()]);
    let mut table = BTreeMap::from([(expected, registered.to_owned())]);
    for c in LOGIN_ALPHABET.chars().filter(|&c| c != expected) {
        let filler = loop {
            let s: String = (0..digit).map(|_| *alphabet.choose(&mut rng).unwrap()).collect();
            if used.insert(s.clone()) {
                break s;
            }
        };
        table.insert(c, filler);
    }
    ConversionUnit {
        position,
        expected_char: expected,
        digit,
        table,
    }
}

pub fn worked_example() -> ConverterSpec {
    let units = WORKED_LOGIN
        .chars()
        .zip(WORKED_STRINGS)
        .enumerate()
        .map(|(i, (c, s))| pinned_unit(i + 1, c, s, i as u64))
        .collect();
    let labels = WORKED_LABELS
        .iter()
        .map(|l| parse_label(l).expect("valid label"))
        .collect();
    ConverterSpec::new(units, labels).expect("worked example is a valid converter")
}
