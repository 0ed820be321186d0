//! The move-selection interface shared by every player in the harness.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::board::{Board, Square};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("no legal move: the game is already decided")]
    NoLegalMove,
    #[error("network evaluation failed: {0}")]
    Network(#[from] crate::nn::NnError),
}

/// A player. Agents see only the current [`Board`]; any randomness comes
/// from state the agent owns.
pub trait Agent: Send {
    fn name(&self) -> &str;

    fn select_move(&mut self, board: &Board) -> Result<Square, AgentError>;

    /// Search policy behind the last move, if the agent has one.
    fn last_policy(&self) -> Option<Vec<f32>> {
        None
    }
}

/// Uniformly random legal moves.
pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(rng: ChaCha8Rng) -> Self {
        RandomAgent { rng }
    }
}

impl Agent for RandomAgent {
    fn name(&self) -> &str {
        "random"
    }

    fn select_move(&mut self, board: &Board) -> Result<Square, AgentError> {
        let legal = board.legal_moves();
        if legal.is_empty() {
            return Err(AgentError::NoLegalMove);
        }
        Ok(legal[self.rng.random_range(0..legal.len())])
    }
}

/// Minimax with its own tie-break stream.
pub struct MinimaxAgent {
    name: String,
    cfg: crate::minimax::MinimaxConfig,
    rng: ChaCha8Rng,
}

impl MinimaxAgent {
    pub fn new(name: impl Into<String>, cfg: crate::minimax::MinimaxConfig) -> Self {
        use rand::SeedableRng;
        MinimaxAgent {
            name: name.into(),
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        }
    }
}

impl Agent for MinimaxAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn select_move(&mut self, board: &Board) -> Result<Square, AgentError> {
        crate::minimax::select_move(board, &self.cfg, &mut self.rng)
    }
}
