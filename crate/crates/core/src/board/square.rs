use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{CELLS, SIDE};

/// A grid square. Rows are labelled `A`..`G` from the top, columns `1`..`7`
/// from the left, and `index = row * 7 + col`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Square(u8);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid square {input:?}: expected a row letter A-G followed by a column digit 1-7 (e.g. \"D4\")")]
pub struct ParseSquareError {
    pub input: String,
}

impl Square {
    pub const fn new(index: usize) -> Option<Square> {
        if index < CELLS {
            Some(Square(index as u8))
        } else {
            None
        }
    }

    pub const fn from_row_col(row: usize, col: usize) -> Option<Square> {
        if row < SIDE && col < SIDE {
            Some(Square((row * SIDE + col) as u8))
        } else {
            None
        }
    }

    #[inline]
    pub const fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub const fn row(self) -> usize {
        self.0 as usize / SIDE
    }

    #[inline]
    pub const fn col(self) -> usize {
        self.0 as usize % SIDE
    }

    #[inline]
    pub(crate) const fn bit(self) -> u64 {
        1u64 << self.0
    }

    /// All 49 squares in ascending index order.
    pub fn all() -> impl Iterator<Item = Square> + Clone {
        (0..CELLS as u8).map(Square)
    }

    pub(crate) fn from_index_unchecked(index: usize) -> Square {
        debug_assert!(index < CELLS);
        Square(index as u8)
    }
}

impl fmt::Display for Square {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row = (b'A' + self.row() as u8) as char;
        let col = (b'1' + self.col() as u8) as char;
        write!(f, "{row}{col}")
    }
}

impl FromStr for Square {
    type Err = ParseSquareError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseSquareError {
            input: s.to_string(),
        };
        let bytes = s.trim().as_bytes();
        if bytes.len() != 2 {
            return Err(err());
        }
        let row = bytes[0].to_ascii_uppercase();
        let col = bytes[1];
        if !(b'A'..=b'G').contains(&row) || !(b'1'..=b'7').contains(&col) {
            return Err(err());
        }
        Ok(
            Square::from_row_col((row - b'A') as usize, (col - b'1') as usize)
                .expect("checked range"),
        )
    }
}

impl Serialize for Square {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Square {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip_for_every_square() {
        for sq in Square::all() {
            let name = sq.to_string();
            assert_eq!(name.parse::<Square>().unwrap(), sq);
            assert_eq!(sq.index(), sq.row() * 7 + sq.col());
        }
    }

    #[test]
    fn center_is_d4() {
        let d4: Square = "D4".parse().unwrap();
        assert_eq!((d4.row(), d4.col(), d4.index()), (3, 3, 24));
        assert_eq!("a1".parse::<Square>().unwrap().index(), 0);
        assert_eq!(Square::new(48).unwrap().to_string(), "G7");
    }

    #[test]
    fn rejects_bad_names() {
        for bad in ["", "Z9", "A0", "A8", "H1", "D44", "4D"] {
            assert!(bad.parse::<Square>().is_err(), "{bad}");
        }
        assert!(Square::new(49).is_none());
    }
}
