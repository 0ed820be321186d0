use super::{BitIter, Square, CELLS, PLANES, SIDE};

/// The four reflections of the grid (the Klein four-group). Every element is
/// its own inverse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Symmetry {
    Identity,
    /// Mirrors columns: `D1 <-> D7`.
    FlipHorizontal,
    /// Mirrors rows: `A4 <-> G4`.
    FlipVertical,
    Rotate180,
}

impl Symmetry {
    pub const ALL: [Symmetry; 4] = [
        Symmetry::Identity,
        Symmetry::FlipHorizontal,
        Symmetry::FlipVertical,
        Symmetry::Rotate180,
    ];

    pub fn apply(self, sq: Square) -> Square {
        let (r, c) = (sq.row(), sq.col());
        let (r, c) = match self {
            Symmetry::Identity => (r, c),
            Symmetry::FlipHorizontal => (r, SIDE - 1 - c),
            Symmetry::FlipVertical => (SIDE - 1 - r, c),
            Symmetry::Rotate180 => (SIDE - 1 - r, SIDE - 1 - c),
        };
        Square::from_row_col(r, c).expect("reflection stays on the grid")
    }

    /// `self.then(other)` applies `self` first, then `other`.
    pub fn then(self, other: Symmetry) -> Symmetry {
        use Symmetry::*;
        match (self, other) {
            (Identity, t) | (t, Identity) => t,
            (a, b) if a == b => Identity,
            (FlipHorizontal, FlipVertical) | (FlipVertical, FlipHorizontal) => Rotate180,
            (Rotate180, FlipHorizontal) | (FlipHorizontal, Rotate180) => FlipVertical,
            (Rotate180, FlipVertical) | (FlipVertical, Rotate180) => FlipHorizontal,
            _ => unreachable!("all pairs covered"),
        }
    }

    pub(crate) fn apply_bits(self, bits: u64) -> u64 {
        if self == Symmetry::Identity {
            return bits;
        }
        BitIter(bits).fold(0, |acc, i| {
            acc | self.apply(Square::from_index_unchecked(i)).bit()
        })
    }

    /// Permutes a length-49 per-square vector so that `out[t(sq)] = v[sq]`.
    pub fn apply_policy<T: Copy>(self, v: &[T; CELLS]) -> [T; CELLS] {
        let mut out = *v;
        for sq in Square::all() {
            out[self.apply(sq).index()] = v[sq.index()];
        }
        out
    }

    /// Applies the reflection to each plane of a plane-major `3 x 7 x 7` stack.
    pub fn apply_planes<T: Copy + Default>(
        self,
        planes: &[T; PLANES * CELLS],
    ) -> [T; PLANES * CELLS] {
        let mut out = [T::default(); PLANES * CELLS];
        for p in 0..PLANES {
            for sq in Square::all() {
                out[p * CELLS + self.apply(sq).index()] = planes[p * CELLS + sq.index()];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_util::*;
    use super::super::Board;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flips_move_expected_squares() {
        assert_eq!(Symmetry::FlipHorizontal.apply(sq("D1")), sq("D7"));
        assert_eq!(Symmetry::FlipVertical.apply(sq("A4")), sq("G4"));
        assert_eq!(Symmetry::Rotate180.apply(sq("A1")), sq("G7"));
        assert_eq!(Symmetry::Rotate180.apply(sq("D4")), sq("D4"));
    }

    #[test]
    fn group_table_matches_composition_on_squares() {
        for a in Symmetry::ALL {
            for b in Symmetry::ALL {
                let c = a.then(b);
                for s in Square::all() {
                    assert_eq!(b.apply(a.apply(s)), c.apply(s));
                }
            }
            for s in Square::all() {
                assert_eq!(a.apply(a.apply(s)), s);
            }
        }
        for s in Square::all() {
            assert_eq!(
                Symmetry::Rotate180.apply(s),
                Symmetry::FlipHorizontal.apply(Symmetry::FlipVertical.apply(s))
            );
        }
    }

    #[test]
    fn representations_transform_consistently() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let brick = random_square(&mut rng);
            let (b, _) = random_playout(brick, 48, &mut rng);
            let policy: [f32; CELLS] = std::array::from_fn(|i| i as f32);
            for t in Symmetry::ALL {
                let tb = b.transform(t);
                assert_eq!(tb.outcome(), b.outcome());
                assert_eq!(tb.scan_outcome(), b.outcome());
                assert_eq!(t.apply_planes(&b.to_planes()), tb.to_planes());
                assert_eq!(tb.transform(t), b);
                let tp = t.apply_policy(&policy);
                for s in Square::all() {
                    assert_eq!(tp[t.apply(s).index()], policy[s.index()]);
                }
            }
        }
    }

    #[test]
    fn transformed_board_keeps_legality() {
        let b = Board::from_moves(sq("E5"), &[sq("C3"), sq("A1")]).unwrap();
        let t = b.transform(Symmetry::FlipHorizontal);
        assert_eq!(t.brick(), sq("E3"));
        assert_eq!(t.legal_moves().len(), 46);
        assert!(!t.is_legal(sq("C5")));
    }
}
