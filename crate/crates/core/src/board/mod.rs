//! Brick Tic-Tac-Toe rules: a 7x7 grid with one brick square, O moves first,
//! four in a row (row, column or diagonal, no wraparound) wins, and a filled
//! board without a line counts as a win for X.

mod record;
mod square;
mod symmetry;

use std::fmt;
use std::sync::LazyLock;

pub use record::{read_records, write_records, GameRecord, RecordError, RecordMeta};
pub use square::{ParseSquareError, Square};
pub use symmetry::Symmetry;

pub const SIDE: usize = 7;
pub const CELLS: usize = SIDE * SIDE;
pub const WIN_LENGTH: usize = 4;
/// Number of binary feature planes produced by [`Board::to_planes`].
pub const PLANES: usize = 3;

const ALL_CELLS: u64 = (1u64 << CELLS) - 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Player {
    O,
    X,
}

impl Player {
    #[inline]
    pub fn opponent(self) -> Player {
        match self {
            Player::O => Player::X,
            Player::X => Player::O,
        }
    }

    pub fn piece(self) -> Piece {
        match self {
            Player::O => Piece::O,
            Player::X => Piece::X,
        }
    }
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Player::O => "O",
            Player::X => "X",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Piece {
    Empty,
    O,
    X,
    Brick,
}

/// Game result. There is no draw: a filled board without a line is an X win.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Ongoing,
    OWin,
    XWin,
}

impl Outcome {
    pub fn winner(self) -> Option<Player> {
        match self {
            Outcome::Ongoing => None,
            Outcome::OWin => Some(Player::O),
            Outcome::XWin => Some(Player::X),
        }
    }

    pub fn is_decided(self) -> bool {
        self != Outcome::Ongoing
    }

    fn win_for(player: Player) -> Outcome {
        match player {
            Player::O => Outcome::OWin,
            Player::X => Outcome::XWin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BoardError {
    #[error("illegal move {square}: {reason}")]
    IllegalMove {
        square: Square,
        reason: &'static str,
    },
    #[error("inconsistent position: {0}")]
    InvalidPosition(&'static str),
}

/// Four contiguous squares along a row, column or diagonal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub squares: [Square; WIN_LENGTH],
    pub mask: u64,
}

struct WindowTables {
    windows: Vec<Window>,
    through: Vec<Vec<u8>>,
}

static TABLES: LazyLock<WindowTables> = LazyLock::new(|| {
    let mut windows = Vec::with_capacity(88);
    // (row step, col step): row, column, down-right diagonal, down-left diagonal
    for (dr, dc) in [(0i32, 1i32), (1, 0), (1, 1), (1, -1)] {
        for row in 0..SIDE as i32 {
            for col in 0..SIDE as i32 {
                let end_r = row + dr * (WIN_LENGTH as i32 - 1);
                let end_c = col + dc * (WIN_LENGTH as i32 - 1);
                if !(0..SIDE as i32).contains(&end_r) || !(0..SIDE as i32).contains(&end_c) {
                    continue;
                }
                let squares: [Square; WIN_LENGTH] = std::array::from_fn(|k| {
                    Square::from_row_col(
                        (row + dr * k as i32) as usize,
                        (col + dc * k as i32) as usize,
                    )
                    .expect("window stays on the grid")
                });
                let mask = squares.iter().fold(0, |m, s| m | s.bit());
                windows.push(Window { squares, mask });
            }
        }
    }
    let mut through = vec![Vec::new(); CELLS];
    for (i, w) in windows.iter().enumerate() {
        for s in w.squares {
            through[s.index()].push(i as u8);
        }
    }
    WindowTables { windows, through }
});

/// Every 4-in-a-row window on the grid: 28 row, 28 column, 16 + 16 diagonal.
pub fn windows() -> &'static [Window] {
    &TABLES.windows
}

/// Indices into [`windows`] of the windows containing `sq`.
pub fn windows_through(sq: Square) -> &'static [u8] {
    &TABLES.through[sq.index()]
}

/// Immutable game state. All information needed to choose a move is held here.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Board {
    o: u64,
    x: u64,
    brick: Square,
    outcome: Outcome,
}

impl Board {
    pub fn new(brick: Square) -> Board {
        Board {
            o: 0,
            x: 0,
            brick,
            outcome: Outcome::Ongoing,
        }
    }

    /// Builds a position from piece bitboards (bit `i` is square index `i`).
    /// The outcome is computed by a full window scan.
    pub fn from_bitboards(brick: Square, o: u64, x: u64) -> Result<Board, BoardError> {
        if (o | x) & !ALL_CELLS != 0 {
            return Err(BoardError::InvalidPosition("piece outside the grid"));
        }
        if o & x != 0 {
            return Err(BoardError::InvalidPosition("square holds both O and X"));
        }
        if (o | x) & brick.bit() != 0 {
            return Err(BoardError::InvalidPosition("piece on the brick square"));
        }
        let diff = o.count_ones() as i32 - x.count_ones() as i32;
        if !(0..=1).contains(&diff) {
            return Err(BoardError::InvalidPosition(
                "O count must equal X count or exceed it by one",
            ));
        }
        let mut board = Board {
            o,
            x,
            brick,
            outcome: Outcome::Ongoing,
        };
        board.outcome = board.scan_outcome();
        Ok(board)
    }

    /// Replays `moves` from the empty board with the given brick.
    pub fn from_moves(brick: Square, moves: &[Square]) -> Result<Board, BoardError> {
        moves
            .iter()
            .try_fold(Board::new(brick), |b, &m| b.apply_move(m))
    }

    pub fn brick(&self) -> Square {
        self.brick
    }

    pub fn o_bits(&self) -> u64 {
        self.o
    }

    pub fn x_bits(&self) -> u64 {
        self.x
    }

    #[inline]
    pub fn outcome(&self) -> Outcome {
        self.outcome
    }

    #[inline]
    pub fn move_count(&self) -> usize {
        (self.o.count_ones() + self.x.count_ones()) as usize
    }

    #[inline]
    pub fn side_to_move(&self) -> Player {
        if self.o.count_ones() == self.x.count_ones() {
            Player::O
        } else {
            Player::X
        }
    }

    pub fn piece_at(&self, sq: Square) -> Piece {
        let bit = sq.bit();
        if sq == self.brick {
            Piece::Brick
        } else if self.o & bit != 0 {
            Piece::O
        } else if self.x & bit != 0 {
            Piece::X
        } else {
            Piece::Empty
        }
    }

    #[inline]
    pub(crate) fn empty_bits(&self) -> u64 {
        ALL_CELLS & !(self.o | self.x | self.brick.bit())
    }

    /// Bitboard of legal destination squares; zero once the game is decided.
    #[inline]
    pub fn legal_bits(&self) -> u64 {
        if self.outcome.is_decided() {
            0
        } else {
            self.empty_bits()
        }
    }

    /// Empty squares in ascending index order, or nothing once the game is decided.
    pub fn legal_moves(&self) -> Vec<Square> {
        BitIter(self.legal_bits())
            .map(Square::from_index_unchecked)
            .collect()
    }

    pub fn is_legal(&self, sq: Square) -> bool {
        self.legal_bits() & sq.bit() != 0
    }

    pub fn apply_move(&self, sq: Square) -> Result<Board, BoardError> {
        if self.outcome.is_decided() {
            return Err(BoardError::IllegalMove {
                square: sq,
                reason: "the game is already decided",
            });
        }
        if sq == self.brick {
            return Err(BoardError::IllegalMove {
                square: sq,
                reason: "square holds the brick",
            });
        }
        if (self.o | self.x) & sq.bit() != 0 {
            return Err(BoardError::IllegalMove {
                square: sq,
                reason: "square is occupied",
            });
        }
        Ok(self.play_unchecked(sq))
    }

    /// Places the side to move's piece without validating legality.
    #[inline]
    pub(crate) fn play_unchecked(&self, sq: Square) -> Board {
        let mover = self.side_to_move();
        let mut next = *self;
        match mover {
            Player::O => next.o |= sq.bit(),
            Player::X => next.x |= sq.bit(),
        }
        next.outcome = if next.check_win_at(sq) {
            Outcome::win_for(mover)
        } else if next.empty_bits() == 0 {
            Outcome::XWin
        } else {
            Outcome::Ongoing
        };
        next
    }

    /// True if some window through `last` is filled with the piece standing on `last`.
    pub fn check_win_at(&self, last: Square) -> bool {
        let own = match self.piece_at(last) {
            Piece::O => self.o,
            Piece::X => self.x,
            _ => return false,
        };
        let all = windows();
        windows_through(last).iter().any(|&w| {
            let mask = all[w as usize].mask;
            own & mask == mask
        })
    }

    /// Outcome recomputed from scratch over all windows.
    pub fn scan_outcome(&self) -> Outcome {
        let all = windows();
        let o_line = all.iter().any(|w| self.o & w.mask == w.mask);
        let x_line = all.iter().any(|w| self.x & w.mask == w.mask);
        match (o_line, x_line) {
            (true, _) => Outcome::OWin,
            (false, true) => Outcome::XWin,
            (false, false) if self.empty_bits() == 0 => Outcome::XWin,
            _ => Outcome::Ongoing,
        }
    }

    /// Plane-major `3 x 7 x 7` binary encoding: side to move's pieces,
    /// the opponent's pieces, then the brick.
    pub fn to_planes(&self) -> [f32; PLANES * CELLS] {
        let (own, other) = match self.side_to_move() {
            Player::O => (self.o, self.x),
            Player::X => (self.x, self.o),
        };
        let mut planes = [0.0f32; PLANES * CELLS];
        for i in BitIter(own) {
            planes[i] = 1.0;
        }
        for i in BitIter(other) {
            planes[CELLS + i] = 1.0;
        }
        planes[2 * CELLS + self.brick.index()] = 1.0;
        planes
    }

    pub fn transform(&self, t: Symmetry) -> Board {
        Board {
            o: t.apply_bits(self.o),
            x: t.apply_bits(self.x),
            brick: t.apply(self.brick),
            outcome: self.outcome,
        }
    }
}

impl fmt::Debug for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "Board(brick {}, {:?}, {} to move)",
            self.brick,
            self.outcome,
            self.side_to_move()
        )?;
        write!(f, "{self}")
    }
}

/// ASCII rendering with row letters down the side and column digits on top.
impl fmt::Display for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "  ")?;
        for c in 0..SIDE {
            write!(f, " {}", c + 1)?;
        }
        writeln!(f)?;
        for r in 0..SIDE {
            write!(f, "{} ", (b'A' + r as u8) as char)?;
            for c in 0..SIDE {
                let ch = match self.piece_at(Square::from_row_col(r, c).unwrap()) {
                    Piece::Empty => '.',
                    Piece::O => 'O',
                    Piece::X => 'X',
                    Piece::Brick => 'B',
                };
                write!(f, " {ch}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Iterates set-bit positions from least to most significant.
#[derive(Clone, Copy)]
pub(crate) struct BitIter(pub u64);

impl Iterator for BitIter {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let i = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(i)
    }
}


#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn window_census() {
        let all = windows();
        assert_eq!(all.len(), 88);
        let kinds = |dr: i32, dc: i32| {
            all.iter()
                .filter(|w| {
                    let (a, b) = (w.squares[0], w.squares[1]);
                    (
                        b.row() as i32 - a.row() as i32,
                        b.col() as i32 - a.col() as i32,
                    ) == (dr, dc)
                })
                .count()
        };
        assert_eq!(
            (kinds(0, 1), kinds(1, 0), kinds(1, 1), kinds(1, -1)),
            (28, 28, 16, 16)
        );
    }

    #[test]
    fn new_game_has_one_brick_and_48_moves() {
        for name in ["D4", "E5", "A1"] {
            let b = Board::new(sq(name));
            assert_eq!(b.piece_at(sq(name)), Piece::Brick);
            assert_eq!(b.legal_moves().len(), 48);
            assert!(!b.legal_moves().contains(&sq(name)));
            assert_eq!(b.side_to_move(), Player::O);
            assert_eq!(b.outcome(), Outcome::Ongoing);
        }
        assert_eq!(Board::new(sq("A1")).brick().index(), 0);
    }

    #[test]
    fn first_move_c3_passes_turn_to_x() {
        let b = Board::new(sq("D4")).apply_move(sq("C3")).unwrap();
        assert_eq!(b.piece_at(sq("C3")), Piece::O);
        assert_eq!(b.side_to_move(), Player::X);
        assert_eq!(b.move_count(), 1);
    }

    #[test]
    fn illegal_moves_are_rejected() {
        let b = Board::new(sq("D4")).apply_move(sq("C3")).unwrap();
        assert!(matches!(
            b.apply_move(sq("C3")),
            Err(BoardError::IllegalMove { .. })
        ));
        assert!(matches!(
            b.apply_move(sq("D4")),
            Err(BoardError::IllegalMove { .. })
        ));
    }

    #[test]
    fn row_of_four_wins_and_is_absorbing() {
        let moves: Vec<Square> = ["B1", "G1", "B2", "G2", "B3", "F7", "B4"]
            .iter()
            .map(|s| sq(s))
            .collect();
        let b = Board::from_moves(sq("D4"), &moves).unwrap();
        assert_eq!(b.outcome(), Outcome::OWin);
        assert!(b.legal_moves().is_empty());
        assert!(b.check_win_at(sq("B4")));
        assert!(b.apply_move(sq("A1")).is_err());
    }

    #[test]
    fn single_piece_is_not_a_win() {
        let b = Board::new(sq("D4")).apply_move(sq("B4")).unwrap();
        assert!(!b.check_win_at(sq("B4")));
    }

    #[test]
    fn no_wraparound() {
        // O on A5, A6, A7 and A1: contiguous only if the row wrapped.
        let o = [sq("A5"), sq("A6"), sq("A7"), sq("A1")]
            .iter()
            .fold(0, |m, s| m | s.bit());
        let x = [sq("G1"), sq("G3"), sq("F5")]
            .iter()
            .fold(0, |m, s| m | s.bit());
        let b = Board::from_bitboards(sq("D4"), o, x).unwrap();
        assert_eq!(b.outcome(), Outcome::Ongoing);
    }

    #[test]
    fn position_47_plies_in_has_one_legal_move() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut found = 0;
        while found < 5 {
            let (b, moves) = random_playout(sq("D4"), 47, &mut rng);
            if moves.len() == 47 && b.outcome() == Outcome::Ongoing {
                assert_eq!(b.legal_moves().len(), 1);
                found += 1;
            }
        }
    }

    #[test]
    fn filled_board_without_line_is_x_win() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        loop {
            let (b, moves) = random_playout(sq("D4"), 48, &mut rng);
            if moves.len() == 48
                && !windows()
                    .iter()
                    .any(|w| b.o_bits() & w.mask == w.mask || b.x_bits() & w.mask == w.mask)
            {
                assert_eq!(b.outcome(), Outcome::XWin);
                assert_eq!(b.scan_outcome(), Outcome::XWin);
                break;
            }
        }
    }

    #[test]
    fn incremental_win_matches_full_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut positions = 0;
        for _ in 0..10_000 {
            let brick = random_square(&mut rng);
            let mut b = Board::new(brick);
            while !b.outcome().is_decided() {
                let legal = b.legal_moves();
                let m = legal[rng.random_range(0..legal.len())];
                let next = b.apply_move(m).unwrap();
                // brute-force oracle: did the mover complete any window through any square?
                let own = match b.side_to_move() {
                    Player::O => next.o_bits(),
                    Player::X => next.x_bits(),
                };
                let brute = windows().iter().any(|w| own & w.mask == w.mask);
                assert_eq!(next.check_win_at(m), brute);
                assert_eq!(next.outcome(), next.scan_outcome());
                let diff = next.o_bits().count_ones() as i32 - next.x_bits().count_ones() as i32;
                assert!((0..=1).contains(&diff));
                b = next;
                positions += 1;
            }
            assert_ne!(b.outcome(), Outcome::Ongoing);
        }
        assert!(positions >= 10_000);
    }

    #[test]
    fn planes_follow_side_to_move() {
        let b = Board::new(sq("D4"));
        let p = b.to_planes();
        assert!(p[..2 * CELLS].iter().all(|&v| v == 0.0));
        assert_eq!(p[2 * CELLS + 3 * 7 + 3], 1.0);
        assert_eq!(p[2 * CELLS..].iter().sum::<f32>(), 1.0);

        let after = b.apply_move(sq("C3")).unwrap().to_planes();
        assert!(after[..CELLS].iter().all(|&v| v == 0.0));
        assert_eq!(after[CELLS + sq("C3").index()], 1.0);
    }

    #[test]
    fn planes_swap_with_colours() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let (b, _) = random_playout(sq("E5"), 2 * rng.random_range(0..20), &mut rng);
            if b.side_to_move() != Player::O || b.outcome().is_decided() {
                continue;
            }
            // equal counts, so swapping colours keeps O to move
            let swapped = Board::from_bitboards(b.brick(), b.x_bits(), b.o_bits()).unwrap();
            let (p, q) = (b.to_planes(), swapped.to_planes());
            assert_eq!(&p[..CELLS], &q[CELLS..2 * CELLS]);
            assert_eq!(&p[CELLS..2 * CELLS], &q[..CELLS]);
            assert_eq!(&p[2 * CELLS..], &q[2 * CELLS..]);
        }
    }
}
