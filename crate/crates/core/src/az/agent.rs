use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::search::{az_select_move, AzSearchConfig};
use crate::board::{Board, Square};
use crate::nn::{load_checkpoint, Network, NnError};
use crate::{Agent, AgentError};

/// Network-guided player. With zero simulations it plays the policy argmax.
pub struct AzAgent {
    name: String,
    net: Arc<Network<f32>>,
    cfg: AzSearchConfig,
    rng: ChaCha8Rng,
    last_policy: Option<Vec<f32>>,
}

impl AzAgent {
    pub fn new(
        name: impl Into<String>,
        net: Arc<Network<f32>>,
        cfg: AzSearchConfig,
        seed: u64,
    ) -> Self {
        AzAgent {
            name: name.into(),
            net,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            last_policy: None,
        }
    }

    /// Loads a checkpoint for test-time play (no root noise).
    pub fn from_checkpoint(path: &Path, simulations: u32, seed: u64) -> Result<Self, NnError> {
        let net = Arc::new(load_checkpoint(path)?.network);
        let name = format!("azero:{}:{simulations}", path.display());
        Ok(AzAgent::new(
            name,
            net,
            AzSearchConfig::with_simulations(simulations),
            seed,
        ))
    }
}

impl Agent for AzAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn select_move(&mut self, board: &Board) -> Result<Square, AgentError> {
        let (m, pi) = az_select_move(
            board,
            &*self.net,
            &self.cfg,
            board.move_count(),
            &mut self.rng,
        )?;
        self.last_policy = Some(pi.to_vec());
        Ok(m)
    }

    fn last_policy(&self) -> Option<Vec<f32>> {
        self.last_policy.clone()
    }
}
