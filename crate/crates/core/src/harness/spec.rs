use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::agent::{MinimaxAgent, RandomAgent};
use crate::az::{AzAgent, AzSearchConfig};
use crate::mcts::{MctsAgent, MctsConfig};
use crate::minimax::{MinimaxConfig, TieBreak};
use crate::nn::{load_checkpoint, Network, NnError};
use crate::Agent;

/// A player named on the command line or in a config file.
///
/// Grammar: `random`, `minimax`, `minimax:seeded`, `mcts:<iterations>`,
/// `azero:<checkpoint>:<simulations>` (simulations 0 plays the raw policy).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AgentSpec {
    Random,
    Minimax {
        tie_break: TieBreak,
    },
    Mcts {
        iterations: u32,
    },
    Azero {
        checkpoint: PathBuf,
        simulations: u32,
    },
}

const GRAMMAR: &str = "expected random, minimax, minimax:seeded, mcts:<iterations> or azero:<checkpoint>:<simulations>";

impl FromStr for AgentSpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::UnknownAgent {
            name: s.to_string(),
            reason: GRAMMAR.to_string(),
        };
        let count = |text: &str| text.parse::<u32>().map_err(|_| bad());
        match s {
            "random" => return Ok(AgentSpec::Random),
            "minimax" => {
                return Ok(AgentSpec::Minimax {
                    tie_break: TieBreak::FirstIndex,
                })
            }
            "minimax:seeded" => {
                return Ok(AgentSpec::Minimax {
                    tie_break: TieBreak::SeededRandom,
                })
            }
            _ => {}
        }
        if let Some(n) = s.strip_prefix("mcts:") {
            let iterations = count(n)?;
            if iterations == 0 {
                return Err(bad());
            }
            return Ok(AgentSpec::Mcts { iterations });
        }
        if let Some(rest) = s.strip_prefix("azero:") {
            // the path itself may contain ':'
            let (path, sims) = rest.rsplit_once(':').ok_or_else(bad)?;
            if path.is_empty() {
                return Err(bad());
            }
            return Ok(AgentSpec::Azero {
                checkpoint: PathBuf::from(path),
                simulations: count(sims)?,
            });
        }
        Err(bad())
    }
}

impl fmt::Display for AgentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentSpec::Random => f.write_str("random"),
            AgentSpec::Minimax {
                tie_break: TieBreak::FirstIndex,
            } => f.write_str("minimax"),
            AgentSpec::Minimax {
                tie_break: TieBreak::SeededRandom,
            } => f.write_str("minimax:seeded"),
            AgentSpec::Mcts { iterations } => write!(f, "mcts:{iterations}"),
            AgentSpec::Azero {
                checkpoint,
                simulations,
            } => write!(f, "azero:{}:{simulations}", checkpoint.display()),
        }
    }
}

impl serde::Serialize for AgentSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for AgentSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// An [`AgentSpec`] whose checkpoint (if any) is loaded; builds a fresh
/// agent per game.
#[derive(Clone)]
pub struct ResolvedAgent {
    spec: AgentSpec,
    net: Option<Arc<Network<f32>>>,
}

impl ResolvedAgent {
    pub fn spec(&self) -> &AgentSpec {
        &self.spec
    }

    pub fn name(&self) -> String {
        self.spec.to_string()
    }

    pub fn build(&self, seed: u64) -> Box<dyn Agent> {
        let name = self.name();
        match &self.spec {
            AgentSpec::Random => Box::new(RandomAgent::new(ChaCha8Rng::seed_from_u64(seed))),
            AgentSpec::Minimax { tie_break } => Box::new(MinimaxAgent::new(
                name,
                MinimaxConfig {
                    tie_break: *tie_break,
                    seed,
                    ..MinimaxConfig::default()
                },
            )),
            AgentSpec::Mcts { iterations } => Box::new(MctsAgent::new(MctsConfig {
                seed,
                ..MctsConfig::with_iterations(*iterations)
            })),
            AgentSpec::Azero { simulations, .. } => Box::new(AzAgent::new(
                name,
                self.net
                    .clone()
                    .expect("resolved azero agents hold a network"),
                AzSearchConfig::with_simulations(*simulations),
                seed,
            )),
        }
    }
}

/// Loads every checkpoint up front so bad names fail before any game. Each
/// distinct checkpoint file is read once.
pub fn resolve_all(specs: &[AgentSpec]) -> Result<Vec<ResolvedAgent>, HarnessError> {
    let mut cache: HashMap<PathBuf, Arc<Network<f32>>> = HashMap::new();
    specs
        .iter()
        .map(|spec| {
            let net = match spec {
                AgentSpec::Azero { checkpoint, .. } => Some(match cache.get(checkpoint) {
                    Some(n) => n.clone(),
                    None => {
                        let n = Arc::new(load_network(checkpoint)?);
                        cache.insert(checkpoint.clone(), n.clone());
                        n
                    }
                }),
                _ => None,
            };
            Ok(ResolvedAgent {
                spec: spec.clone(),
                net,
            })
        })
        .collect()
}

pub fn resolve(spec: &AgentSpec) -> Result<ResolvedAgent, HarnessError> {
    Ok(resolve_all(std::slice::from_ref(spec))?.remove(0))
}

fn load_network(path: &Path) -> Result<Network<f32>, HarnessError> {
    if !path.exists() {
        return Err(HarnessError::MissingCheckpoint(path.to_path_buf()));
    }
    load_checkpoint(path)
        .map(|c| c.network)
        .map_err(|source: NnError| HarnessError::Checkpoint {
            path: path.to_path_buf(),
            source,
        })
}
