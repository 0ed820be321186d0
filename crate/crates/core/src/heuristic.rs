//! Hand-crafted window heuristic used by the minimax agent.
//!
//! Every 4-square window is classified by which positions hold a single
//! player's pieces; the board value is the sum over all 88 windows. O
//! patterns carry 1.5 times the weight of the mirrored X pattern, with O
//! positive. Values are stored as exact decimal literals. Windows holding the brick or both colours score zero.

use std::sync::LazyLock;

use crate::board::{windows, Board, Piece};

/// `(x_value, o_value)` of a single-colour window given which of its four
/// cells are filled (`filled` bit `i` is window position `i`).
fn pattern_values(filled: u8) -> (f64, f64) {
    let ends = filled & 0b1001;
    match filled.count_ones() {
        0 => (0.0, 0.0),
        1 if ends != 0 => (-0.000001, 0.0000015),
        1 => (-0.000002, 0.000003),
        // _XX_ is the only pair with both flanks open
        2 if filled == 0b0110 => (-0.0002, 0.0003),
        2 => (-0.0001, 0.00015),
        3 => (-0.01, 0.015),
        _ => (-1.0, 1.5),
    }
}

/// Value of a 4-cell window read from the lookup table.
pub fn window_value(cells: [Piece; 4]) -> f64 {
    let mut o = 0u8;
    let mut x = 0u8;
    for (i, c) in cells.iter().enumerate() {
        match c {
            Piece::O => o |= 1 << i,
            Piece::X => x |= 1 << i,
            Piece::Brick => return 0.0,
            Piece::Empty => {}
        }
    }
    match (o, x) {
        (0, 0) => 0.0,
        (o, 0) => pattern_values(o).1,
        (0, x) => pattern_values(x).0,
        _ => 0.0,
    }
}

/// Every table entry is an exact integer multiple of 1e-7, so sums taken in
/// these units are exact.
const UNITS_PER_VALUE: f64 = 1e7;

/// `[o_mask * 16 + x_mask]` lookup for brick-free windows, in 1e-7 units.
static PATTERN_UNITS: LazyLock<[i64; 256]> = LazyLock::new(|| {
    let mut table = [0i64; 256];
    for o in 0..16u8 {
        for x in 0..16u8 {
            if o & x != 0 {
                continue;
            }
            let cells = std::array::from_fn(|i| match (o >> i & 1, x >> i & 1) {
                (1, _) => Piece::O,
                (_, 1) => Piece::X,
                _ => Piece::Empty,
            });
            table[(o as usize) << 4 | x as usize] =
                (window_value(cells) * UNITS_PER_VALUE).round() as i64;
        }
    }
    table
});

#[inline]
fn extract(bits: u64, squares: &[crate::board::Square; 4]) -> usize {
    squares.iter().enumerate().fold(0, |acc, (i, s)| {
        acc | ((bits >> s.index()) as usize & 1) << i
    })
}

/// Sum of window values over the whole board; positive favours O.
///
/// Summation is exact, so positions with equal window multisets (for
/// example mirror images) get bit-identical values.
pub fn evaluate(board: &Board) -> f64 {
    evaluate_bits(board.brick().index(), board.o_bits(), board.x_bits())
}

/// Same sum over raw bitboards, without requiring a legal position.
pub(crate) fn evaluate_bits(brick_index: usize, o: u64, x: u64) -> f64 {
    let table = &*PATTERN_UNITS;
    let brick = 1u64 << brick_index;
    let mut total = 0i64;
    for w in windows() {
        if w.mask & brick != 0 || (o | x) & w.mask == 0 {
            continue;
        }
        total += table[extract(o, &w.squares) << 4 | extract(x, &w.squares)];
    }
    total as f64 / UNITS_PER_VALUE
}
