use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{generate_auth_password, ConvError, ConversionUnit, ConverterSpec, Label, Order};
use crate::policy::complexity_violations;

/// Characters a login password may contain; every unit's table covers these.
pub const LOGIN_ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz0123456789";

/// Printable ASCII without space.
pub fn default_string_alphabet() -> String {
    ('!'..='~').collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub login_alphabet: String,
    pub string_alphabet: String,
    pub target_length: usize,
    pub max_digit: usize,
    pub max_regeneration_attempts: usize,
    /// Minimum number of character classes in the authentication password.
    pub min_classes: usize,
    /// The first `first_window` characters must hold an uppercase letter or a symbol.
    pub first_window: usize,
    pub rng_seed: Option<u64>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            login_alphabet: LOGIN_ALPHABET.into(),
            string_alphabet: default_string_alphabet(),
            target_length: 20,
            max_digit: 6,
            max_regeneration_attempts: 1000,
            min_classes: 4,
            first_window: 4,
            rng_seed: None,
        }
    }
}

/// Number of ways to write `total` as an ordered sum of `parts` terms, each in
/// `1..=max_digit`. Row `i` of the returned table holds the counts for `i` parts.
fn composition_counts(parts: usize, total: usize, max_digit: usize) -> Vec<Vec<u128>> {
    let mut counts = vec![vec![0u128; total + 1]; parts + 1];
    counts[0][0] = 1;
    for i in 1..=parts {
        for s in 1..=total {
            counts[i][s] = (1..=max_digit.min(s))
                .map(|d| counts[i - 1][s - d])
                .fold(0u128, u128::saturating_add);
        }
    }
    counts
}

/// Draws digits uniformly among all compositions of `total` into `parts`
/// terms bounded by `max_digit`.
pub fn sample_digits<R: Rng + ?Sized>(
    parts: usize,
    total: usize,
    max_digit: usize,
    rng: &mut R,
) -> Result<Vec<usize>, ConvError> {
    let counts = composition_counts(parts, total, max_digit);
    if parts == 0 || max_digit == 0 || counts[parts][total] == 0 {
        return Err(ConvError::InfeasibleBudget {
            units: parts,
            target_length: total,
            max_digit,
        });
    }
    let mut digits = Vec::with_capacity(parts);
    let mut remaining = total;
    for left in (1..=parts).rev() {
        let mut pick = rng.gen_range(0..counts[left][remaining]);
        let mut chosen = 0;
        for d in 1..=max_digit.min(remaining) {
            let ways = counts[left - 1][remaining - d];
            if pick < ways {
                chosen = d;
                break;
            }
            pick -= ways;
        }
        debug_assert!(chosen > 0);
        digits.push(chosen);
        remaining -= chosen;
    }
    Ok(digits)
}

fn random_table<R: Rng + ?Sized>(
    login_alphabet: &[char],
    string_alphabet: &[char],
    digit: usize,
    rng: &mut R,
) -> BTreeMap<char, String> {
    let mut used = HashSet::with_capacity(login_alphabet.len());
    let mut table = BTreeMap::new();
    for &c in login_alphabet {
        loop {
            let s: String = (0..digit)
                .map(|_| *string_alphabet.choose(rng).expect("non-empty alphabet"))
                .collect();
            if used.insert(s.clone()) {
                table.insert(c, s);
                break;
            }
        }
    }
    table
}

fn random_label<R: Rng + ?Sized>(target_length: usize, rng: &mut R) -> Label {
    let point = rng.gen_range(1..=target_length);
    let order = if rng.gen_bool(0.5) {
        Order::Forward
    } else {
        Order::Reverse
    };
    Label::new(point, order).expect("point is at least 1")
}

/// Builds a fresh converter for `login_password`, regenerating until the
/// registered authentication password meets the class and first-window rules.
pub fn generate_converter<R: Rng + ?Sized>(
    login_password: &str,
    config: &GeneratorConfig,
    rng: &mut R,
) -> Result<ConverterSpec, ConvError> {
    let login_alphabet: Vec<char> = config.login_alphabet.chars().collect();
    let string_alphabet: Vec<char> = config.string_alphabet.chars().collect();
    let entered: Vec<char> = login_password.chars().collect();
    let units = entered.len();

    if let Some((i, &c)) = entered.iter().enumerate().find(|(_, c)| !login_alphabet.contains(c)) {
        return Err(ConvError::AlphabetViolation { position: i + 1, ch: c });
    }
    {
        let distinct: HashSet<char> = string_alphabet.iter().copied().collect();
        if distinct.len() != string_alphabet.len() || distinct.is_empty() {
            return Err(ConvError::InvalidSpec(
                "string alphabet must be non-empty with distinct characters".into(),
            ));
        }
        let distinct_login: HashSet<char> = login_alphabet.iter().copied().collect();
        if distinct_login.len() != login_alphabet.len() {
            return Err(ConvError::InvalidSpec("login alphabet has repeated characters".into()));
        }
    }
    if units == 0
        || config.max_digit == 0
        || composition_counts(units, config.target_length, config.max_digit)[units][config.target_length] == 0
    {
        return Err(ConvError::InfeasibleBudget {
            units,
            target_length: config.target_length,
            max_digit: config.max_digit,
        });
    }

    for _ in 0..config.max_regeneration_attempts {
        let digits = sample_digits(units, config.target_length, config.max_digit, rng)?;
        // Too few strings of this length for a table of distinct entries.
        if digits
            .iter()
            .any(|&d| (string_alphabet.len() as f64).powi(d as i32) < login_alphabet.len() as f64)
        {
            continue;
        }
        let conv_units: Vec<ConversionUnit> = digits
            .iter()
            .zip(&entered)
            .enumerate()
            .map(|(i, (&digit, &c))| ConversionUnit {
                position: i + 1,
                expected_char: c,
                digit,
                table: random_table(&login_alphabet, &string_alphabet, digit, rng),
            })
            .collect();
        let labels = (1..units).map(|_| random_label(config.target_length, rng)).collect();
        let spec = ConverterSpec::new(conv_units, labels)?;
        let registered = generate_auth_password(&spec, login_password)?;
        if complexity_violations(&registered, config.min_classes, config.first_window).is_empty() {
            return Ok(spec);
        }
    }
    Err(ConvError::GenerationExhausted {
        attempts: config.max_regeneration_attempts,
    })
}
