//! Login-process identifiers.
//!
//! A process identifier is a system-chosen set of converter cells together
//! with the values they held for the registered login password. Verifying an
//! entered password recomputes those cells with the entered characters, so an
//! identifier holding at least one converted-string cell only matches when the
//! corresponding characters are right.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::convcore::{ConvError, ConverterSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdentityError {
    #[error("invalid identifier strategy: {0}")]
    InvalidStrategy(String),
    #[error("identifier references row {row} ({column:?}) which the converter does not have")]
    RowOutOfRange { row: usize, column: Column },
    #[error(transparent)]
    Conversion(#[from] ConvError),
}

/// Converter column. The derived order is the canonical sort order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    LoginChar,
    Digit,
    String,
    Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellRef {
    pub row: usize,
    pub column: Column,
}

impl CellRef {
    pub fn new(row: usize, column: Column) -> Option<Self> {
        let valid = row >= 1 && !(row == 1 && column == Column::Label);
        valid.then_some(CellRef { row, column })
    }

    /// Every valid cell of a converter with `rows` units.
    pub fn all(rows: usize) -> Vec<CellRef> {
        (1..=rows)
            .flat_map(|row| {
                [Column::LoginChar, Column::Digit, Column::String, Column::Label]
                    .into_iter()
                    .filter_map(move |column| CellRef::new(row, column))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IdentifierStrategy {
    Row { row: usize },
    Column { column: Column },
    Combo { k: usize },
}

impl Default for IdentifierStrategy {
    fn default() -> Self {
        IdentifierStrategy::Combo { k: 4 }
    }
}

impl IdentifierStrategy {
    pub fn kind_name(&self) -> &'static str {
        match self {
            IdentifierStrategy::Row { .. } => "row",
            IdentifierStrategy::Column { .. } => "column",
            IdentifierStrategy::Combo { .. } => "combo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedCell {
    pub cell: CellRef,
    pub value: String,
}

/// Match outcome of [`verify_identifier`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentifierMatch {
    Match,
    Mismatch,
}

/// Only converter cells are recorded here; there is no field for anything
/// personal about the account holder or their device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessIdentifier {
    pub strategy: IdentifierStrategy,
    /// Sorted by (row, column).
    pub cells: Vec<RecordedCell>,
    /// Hex-encoded 16-byte salt.
    pub salt: String,
    /// Hex SHA-256 of salt || canonical cell serialization.
    pub fingerprint: String,
}

impl ProcessIdentifier {
    pub fn cell_refs(&self) -> impl Iterator<Item = CellRef> + '_ {
        self.cells.iter().map(|c| c.cell)
    }

    /// Checks that the stored fingerprint still matches the stored cells.
    pub fn fingerprint_is_consistent(&self) -> bool {
        hex::decode(&self.salt)
            .map(|salt| fingerprint(&salt, &self.cells) == self.fingerprint)
            .unwrap_or(false)
    }
}

/// `[[row, column, value], ...]` sorted by (row, column).
pub fn canonical_cells(cells: &[RecordedCell]) -> String {
    let mut sorted: Vec<&RecordedCell> = cells.iter().collect();
    sorted.sort_by_key(|c| c.cell);
    let triples: Vec<(usize, Column, &str)> = sorted
        .iter()
        .map(|c| (c.cell.row, c.cell.column, c.value.as_str()))
        .collect();
    serde_json::to_string(&triples).expect("cells serialize")
}

fn fingerprint(salt: &[u8], cells: &[RecordedCell]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(salt);
    hasher.update(canonical_cells(cells).as_bytes());
    hex::encode(hasher.finalize())
}

/// Value of `cell` in `spec` when `entered` is typed into it.
fn cell_value(spec: &ConverterSpec, entered: &[char], cell: CellRef) -> Result<String, IdentityError> {
    let out_of_range = IdentityError::RowOutOfRange {
        row: cell.row,
        column: cell.column,
    };
    if cell.row == 0 || cell.row > spec.len() || cell.row > entered.len() {
        return Err(out_of_range);
    }
    let unit = &spec.units[cell.row - 1];
    let c = entered[cell.row - 1];
    Ok(match cell.column {
        Column::LoginChar => c.to_string(),
        Column::Digit => unit.digit.to_string(),
        Column::String => unit
            .convert(c)
            .ok_or(ConvError::AlphabetViolation {
                position: cell.row,
                ch: c,
            })?
            .to_owned(),
        Column::Label => {
            if cell.row == 1 {
                return Err(out_of_range);
            }
            spec.labels[cell.row - 2].to_string()
        }
    })
}

fn select_cells<R: Rng + ?Sized>(
    rows: usize,
    strategy: IdentifierStrategy,
    rng: &mut R,
) -> Result<Vec<CellRef>, IdentityError> {
    let all = CellRef::all(rows);
    let mut cells = match strategy {
        IdentifierStrategy::Row { row } => {
            if row == 0 || row > rows {
                return Err(IdentityError::InvalidStrategy(format!("row {row} outside 1..={rows}")));
            }
            all.into_iter().filter(|c| c.row == row).collect()
        }
        IdentifierStrategy::Column { column } => {
            if column == Column::LoginChar {
                return Err(IdentityError::InvalidStrategy(
                    "the login-character column cannot be an identifier".into(),
                ));
            }
            all.into_iter().filter(|c| c.column == column).collect::<Vec<_>>()
        }
        IdentifierStrategy::Combo { k } => {
            if k == 0 || k > all.len() {
                return Err(IdentityError::InvalidStrategy(format!(
                    "combination of {k} cells from a converter with {} cells",
                    all.len()
                )));
            }
            loop {
                let pick: Vec<CellRef> = all.choose_multiple(rng, k).copied().collect();
                if pick.iter().any(|c| c.column == Column::String) {
                    break pick;
                }
            }
        }
    };
    if cells.is_empty() {
        return Err(IdentityError::InvalidStrategy(format!("{strategy:?} selects no cells")));
    }
    cells.sort();
    Ok(cells)
}

fn record<R: Rng + ?Sized>(
    spec: &ConverterSpec,
    login_password: &str,
    strategy: IdentifierStrategy,
    refs: Vec<CellRef>,
    rng: &mut R,
) -> Result<ProcessIdentifier, IdentityError> {
    let entered: Vec<char> = login_password.chars().collect();
    if entered.len() != spec.len() {
        return Err(ConvError::LengthMismatch {
            expected: spec.len(),
            got: entered.len(),
        }
        .into());
    }
    let cells = refs
        .into_iter()
        .map(|cell| {
            Ok(RecordedCell {
                cell,
                value: cell_value(spec, &entered, cell)?,
            })
        })
        .collect::<Result<Vec<_>, IdentityError>>()?;
    let salt: [u8; 16] = rng.gen();
    Ok(ProcessIdentifier {
        strategy,
        fingerprint: fingerprint(&salt, &cells),
        salt: hex::encode(salt),
        cells,
    })
}

pub fn derive_identifier<R: Rng + ?Sized>(
    spec: &ConverterSpec,
    login_password: &str,
    strategy: IdentifierStrategy,
    rng: &mut R,
) -> Result<ProcessIdentifier, IdentityError> {
    let refs = select_cells(spec.len(), strategy, rng)?;
    record(spec, login_password, strategy, refs, rng)
}

/// Re-records an existing identifier's cells against a (possibly re-keyed)
/// converter, with a fresh salt.
pub fn rerecord_identifier<R: Rng + ?Sized>(
    spec: &ConverterSpec,
    login_password: &str,
    previous: &ProcessIdentifier,
    rng: &mut R,
) -> Result<ProcessIdentifier, IdentityError> {
    let refs = previous.cell_refs().collect();
    record(spec, login_password, previous.strategy, refs, rng)
}

/// Recomputes every stored cell with `entered` in place of the registered
/// password. The entered password must already have the converter's length.
pub fn verify_identifier(
    spec: &ConverterSpec,
    entered: &str,
    stored: &ProcessIdentifier,
) -> Result<IdentifierMatch, IdentityError> {
    let chars: Vec<char> = entered.chars().collect();
    if chars.len() != spec.len() {
        return Err(ConvError::LengthMismatch {
            expected: spec.len(),
            got: chars.len(),
        }
        .into());
    }
    for recorded in &stored.cells {
        if cell_value(spec, &chars, recorded.cell)? != recorded.value {
            return Ok(IdentifierMatch::Mismatch);
        }
    }
    Ok(IdentifierMatch::Match)
}
