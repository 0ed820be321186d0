//! Fixed-depth minimax with alpha-beta pruning over the window heuristic.
//! O maximises, X minimises.

use rand::Rng;

use crate::board::{Board, Player, Square};
use crate::heuristic::evaluate;
use crate::AgentError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Lowest square index among equally valued moves.
    FirstIndex,
    /// Uniform choice among equally valued moves.
    SeededRandom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MinimaxConfig {
    pub depth: u32,
    pub tie_break: TieBreak,
    pub seed: u64,
}

impl Default for MinimaxConfig {
    fn default() -> Self {
        MinimaxConfig {
            depth: 2,
            tie_break: TieBreak::FirstIndex,
            seed: 0,
        }
    }
}

/// Children ordered best-first for the side to move by their static value.
fn ordered_children(b: &Board) -> Vec<(Square, Board, f64)> {
    let mut kids: Vec<_> = b
        .legal_moves()
        .into_iter()
        .map(|m| {
            let child = b.play_unchecked(m);
            (m, child, evaluate(&child))
        })
        .collect();
    match b.side_to_move() {
        Player::O => kids.sort_by(|a, c| c.2.total_cmp(&a.2)),
        Player::X => kids.sort_by(|a, c| a.2.total_cmp(&c.2)),
    }
    kids
}

/// Alpha-beta value of `b` searched `depth` plies deep. Decided boards and
/// depth 0 return the static evaluation. The result equals the unpruned
/// minimax value whenever it lies strictly inside `(alpha, beta)`.
pub fn minimax_value(b: &Board, depth: u32, mut alpha: f64, mut beta: f64) -> f64 {
    if depth == 0 || b.outcome().is_decided() {
        return evaluate(b);
    }
    let maximizing = b.side_to_move() == Player::O;
    let mut best = if maximizing {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    };
    for (_, child, static_value) in ordered_children(b) {
        let v = if depth == 1 {
            static_value
        } else {
            minimax_value(&child, depth - 1, alpha, beta)
        };
        if maximizing {
            best = best.max(v);
            alpha = alpha.max(v);
        } else {
            best = best.min(v);
            beta = beta.min(v);
        }
        if alpha >= beta {
            break;
        }
    }
    best
}

/// Exact values of every root move that ties for best, plus that value.
fn best_moves(b: &Board, depth: u32) -> (Vec<Square>, f64) {
    let maximizing = b.side_to_move() == Player::O;
    let mut best = if maximizing {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    };
    let mut ties: Vec<Square> = Vec::new();
    for (m, child, static_value) in ordered_children(b) {
        let v = if depth <= 1 {
            static_value
        } else if maximizing {
            // a bound strictly below `best` so equal values are computed exactly
            let bound = if best.is_finite() {
                best.next_down()
            } else {
                best
            };
            minimax_value(&child, depth - 1, bound, f64::INFINITY)
        } else {
            let bound = if best.is_finite() {
                best.next_up()
            } else {
                best
            };
            minimax_value(&child, depth - 1, f64::NEG_INFINITY, bound)
        };
        let better = if maximizing { v > best } else { v < best };
        if better {
            best = v;
            ties.clear();
            ties.push(m);
        } else if v == best {
            ties.push(m);
        }
    }
    ties.sort();
    (ties, best)
}

/// Picks the move whose searched value is best for the side to move.
pub fn select_move<R: Rng>(
    b: &Board,
    cfg: &MinimaxConfig,
    rng: &mut R,
) -> Result<Square, AgentError> {
    if b.outcome().is_decided() {
        return Err(AgentError::NoLegalMove);
    }
    let (ties, _) = best_moves(b, cfg.depth.max(1));
    let pick = match cfg.tie_break {
        TieBreak::FirstIndex => 0,
        TieBreak::SeededRandom => rng.random_range(0..ties.len()),
    };
    Ok(ties[pick])
}
