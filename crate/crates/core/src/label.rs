//! Spreadsheet-style room labels (`A1`, `C4`, `AA10`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// A grid cell. Columns are 0-based and render as letters, rows are 1-based.
///
/// Ordering is by column first, then row, which is the canonical order used
/// when listing connections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellLabel {
    column: u32,
    row: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("row must be at least 1")]
    ZeroRow,
    #[error("malformed room label {0:?}")]
    Malformed(String),
    #[error("room label {0:?} is out of range")]
    Overflow(String),
}

impl CellLabel {
    pub fn new(column: u32, row: u32) -> Result<Self, LabelError> {
        if row == 0 {
            return Err(LabelError::ZeroRow);
        }
        Ok(Self { column, row })
    }

    pub fn column(self) -> u32 {
        self.column
    }

    pub fn row(self) -> u32 {
        self.row
    }

    /// True when the two cells differ by exactly one step in one coordinate.
    pub fn is_grid_adjacent(self, other: CellLabel) -> bool {
        self.column.abs_diff(other.column) + self.row.abs_diff(other.row) == 1
    }
}

/// Renders a 0-based column index as letters, Excel style.
pub fn render_column(column: u32) -> String {
    let mut n = u64::from(column) + 1;
    let mut letters = Vec::new();
    while n > 0 {
        let rem = ((n - 1) % 26) as u8;
        letters.push(b'A' + rem);
        n = (n - 1) / 26;
    }
    letters.reverse();
    String::from_utf8(letters).expect("ascii")
}

pub fn render_label(column: u32, row: u32) -> Result<String, LabelError> {
    CellLabel::new(column, row).map(|c| c.to_string())
}

pub fn parse_label(text: &str) -> Result<(u32, u32), LabelError> {
    text.parse::<CellLabel>().map(|c| (c.column, c.row))
}

impl fmt::Display for CellLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", render_column(self.column), self.row)
    }
}

impl FromStr for CellLabel {
    type Err = LabelError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let malformed = || LabelError::Malformed(text.to_string());
        let split = text
            .find(|c: char| !c.is_ascii_uppercase())
            .ok_or_else(malformed)?;
        let (letters, digits) = text.split_at(split);
        if letters.is_empty() || digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        if digits.starts_with('0') {
            return Err(if digits.bytes().all(|b| b == b'0') {
                LabelError::ZeroRow
            } else {
                malformed()
            });
        }
        let overflow = || LabelError::Overflow(text.to_string());
        let mut column: u64 = 0;
        for b in letters.bytes() {
            column = column
                .checked_mul(26)
                .and_then(|c| c.checked_add(u64::from(b - b'A' + 1)))
                .ok_or_else(overflow)?;
            if column > u64::from(u32::MAX) + 1 {
                return Err(overflow());
            }
        }
        let row: u32 = digits.parse().map_err(|_| overflow())?;
        Ok(Self {
            column: (column - 1) as u32,
            row,
        })
    }
}

impl Serialize for CellLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CellLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn renders_known_labels() {
        assert_eq!(render_label(0, 1).unwrap(), "A1");
        assert_eq!(render_label(3, 5).unwrap(), "D5");
        assert_eq!(render_label(25, 3).unwrap(), "Z3");
        assert_eq!(render_label(26, 10).unwrap(), "AA10");
        assert_eq!(render_label(49, 50).unwrap(), "AX50");
        assert_eq!(render_label(701, 1).unwrap(), "ZZ1");
        assert_eq!(render_label(702, 1).unwrap(), "AAA1");
    }

    #[test]
    fn rejects_bad_labels() {
        for bad in ["", "A", "5", "a1", "A-1", "1A", "A1B", "A 1", "A01"] {
            assert!(parse_label(bad).is_err(), "{bad:?} parsed");
        }
        assert_eq!(parse_label("A0"), Err(LabelError::ZeroRow));
        assert_eq!(render_label(0, 0), Err(LabelError::ZeroRow));
        assert!(matches!(parse_label("A99999999999"), Err(LabelError::Overflow(_))));
        assert!(matches!(parse_label("ZZZZZZZZ1"), Err(LabelError::Overflow(_))));
    }

    #[test]
    fn ordering_is_column_major() {
        let a2: CellLabel = "A2".parse().unwrap();
        let b1: CellLabel = "B1".parse().unwrap();
        assert!(a2 < b1);
    }

    proptest! {
        #[test]
        fn render_parse_identity(column in 0u32..100_000, row in 1u32..100_000) {
            let text = render_label(column, row).unwrap();
            let split = text.find(|c: char| c.is_ascii_digit()).unwrap();
            prop_assert!(split > 0);
            prop_assert!(text[..split].bytes().all(|b| b.is_ascii_uppercase()));
            prop_assert_eq!(parse_label(&text).unwrap(), (column, row));
        }
    }
}
