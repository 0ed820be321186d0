//! The optional `--config` file: global settings plus one section per
//! subcommand. Command-line flags win over file values.

use std::path::{Path, PathBuf};

use bttt_core::az::TrainConfig;
use bttt_core::harness::AgentSpec;
use bttt_core::Square;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub verbose: Option<u8>,
    pub train: Option<TrainConfig>,
    pub tournament: TournamentConfig,
    pub eval_all: EvalAllConfig,
    pub bench: BenchConfig,
    pub play: PlayConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TournamentConfig {
    pub agents: Vec<AgentSpec>,
    /// One square, or several for a per-game draw from the pool.
    pub bricks: Vec<Square>,
    pub games: u32,
    pub include_self: bool,
}

impl Default for TournamentConfig {
    fn default() -> Self {
        TournamentConfig {
            agents: Vec::new(),
            bricks: vec![d4()],
            games: 100,
            include_self: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalAllConfig {
    pub agent: Option<AgentSpec>,
    pub opponent: Option<AgentSpec>,
    pub games_per_position: u32,
}

impl Default for EvalAllConfig {
    fn default() -> Self {
        EvalAllConfig {
            agent: None,
            opponent: None,
            games_per_position: 10,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub agents: Vec<AgentSpec>,
    pub moves: usize,
    pub brick: Square,
    /// Timed positions come from up to this many random plies; 0 times the
    /// empty board only.
    pub random_plies: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            agents: Vec::new(),
            moves: 100,
            brick: d4(),
            random_plies: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum Side {
    O,
    X,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlayConfig {
    pub agent: AgentSpec,
    pub brick: Square,
    pub human: Side,
}

impl Default for PlayConfig {
    fn default() -> Self {
        PlayConfig {
            agent: AgentSpec::Mcts { iterations: 1000 },
            brick: d4(),
            human: Side::O,
        }
    }
}

fn d4() -> Square {
    "D4".parse().expect("valid square")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
    }
}
