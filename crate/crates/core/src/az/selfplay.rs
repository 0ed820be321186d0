use rand::Rng;

use super::search::{az_select_move, outcome_for, AzSearchConfig, Evaluator};
use crate::board::{Board, GameRecord, RecordMeta, Square, Symmetry, CELLS, PLANES};
use crate::nn::Batch;
use crate::AgentError;

/// One position from self-play with its search target and final outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub planes: [f32; PLANES * CELLS],
    pub pi: [f32; CELLS],
    /// +1 if the side to move in this position went on to win.
    pub z: f32,
    pub legal: u64,
}

impl TrainingExample {
    /// The same example seen through a reflection of the board.
    pub fn transformed(&self, t: Symmetry) -> TrainingExample {
        let legal = (0..CELLS)
            .filter(|&i| self.legal >> i & 1 == 1)
            .fold(0u64, |acc, i| {
                acc | 1 << t.apply(Square::new(i).expect("valid index")).index()
            });
        TrainingExample {
            planes: t.apply_planes(&self.planes),
            pi: t.apply_policy(&self.pi),
            z: self.z,
            legal,
        }
    }
}

/// Collects examples into a network batch.
pub fn to_batch<'a>(examples: impl IntoIterator<Item = &'a TrainingExample>) -> Batch<f32> {
    let mut batch = Batch::default();
    for e in examples {
        batch.push(&e.planes, &e.pi, e.z, e.legal);
    }
    batch
}

/// Plays one game with search on both sides and returns every position
/// in all four reflections, plus the game record.
pub fn self_play_game<E: Evaluator + ?Sized, R: Rng>(
    eval: &E,
    cfg: &AzSearchConfig,
    brick: Square,
    rng: &mut R,
) -> Result<(Vec<TrainingExample>, GameRecord), AgentError> {
    let mut board = Board::new(brick);
    let mut record = GameRecord::new(brick);
    let mut meta = RecordMeta {
        players: Some(["self-play".into(), "self-play".into()]),
        ..RecordMeta::default()
    };
    let mut positions = Vec::new();
    while !board.outcome().is_decided() {
        let (mv, pi) = az_select_move(&board, eval, cfg, board.move_count(), rng)?;
        positions.push((board, pi));
        meta.policies.push(Some(pi.to_vec()));
        record.moves.push(mv);
        board = board.apply_move(mv).expect("search returns legal moves");
    }
    record.result = board.outcome();
    record.meta = Some(meta);
    let mut examples = Vec::with_capacity(positions.len() * Symmetry::ALL.len());
    for (b, pi) in positions {
        let base = TrainingExample {
            planes: b.to_planes(),
            pi,
            z: outcome_for(&board, b.side_to_move()),
            legal: b.legal_bits(),
        };
        examples.extend(Symmetry::ALL.iter().map(|&t| base.transformed(t)));
    }
    Ok((examples, record))
}
