use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{HarnessError, ResolvedAgent};
use crate::board::{Board, Square};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimingStats {
    pub moves: usize,
    pub mean_s: f64,
    /// Sample standard deviation; zero for a single move.
    pub std_s: f64,
}

/// Undecided positions reached by up to `max_plies` uniformly random moves
/// from an empty board with the given brick. `max_plies == 0` gives the
/// initial board `n` times.
pub fn sample_positions(brick: Square, max_plies: usize, n: usize, seed: u64) -> Vec<Board> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let plies = if max_plies == 0 {
            0
        } else {
            rng.random_range(0..=max_plies)
        };
        let mut b = Board::new(brick);
        for _ in 0..plies {
            let legal = b.legal_moves();
            let next = b
                .apply_move(legal[rng.random_range(0..legal.len())])
                .expect("legal");
            if next.outcome().is_decided() {
                break;
            }
            b = next;
        }
        out.push(b);
    }
    out
}

/// Times `n_moves` decisions, cycling through `positions`. Only the call
/// that chooses the move is timed. Runs on the calling thread.
pub fn bench_time_per_move(
    agent: &ResolvedAgent,
    positions: &[Board],
    n_moves: usize,
    seed: u64,
) -> Result<TimingStats, HarnessError> {
    if positions.is_empty() || n_moves == 0 {
        return Err(HarnessError::Config(
            "timing needs at least one position and one move".into(),
        ));
    }
    let mut player = agent.build(seed);
    let mut samples = Vec::with_capacity(n_moves);
    for i in 0..n_moves {
        let board = &positions[i % positions.len()];
        let start = Instant::now();
        let chosen = player.select_move(board);
        samples.push(start.elapsed().as_secs_f64());
        chosen.map_err(|e| HarnessError::AgentFailure {
            agent: agent.name(),
            game: 0,
            reason: e.to_string(),
            partial: Box::default(),
        })?;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(TimingStats {
        moves: samples.len(),
        mean_s: mean,
        std_s: var.sqrt(),
    })
}
