//! Self-play reinforcement learning: PUCT search guided by the policy/value
//! network, reflection-augmented self-play, and the iteration loop.

mod agent;
mod search;
mod selfplay;
mod train;

pub use agent::AzAgent;
pub use search::{
    az_select_move, outcome_for, puct_score, puct_search, AzSearchConfig, Evaluator, PuctTree,
    UniformEvaluator,
};
pub use selfplay::{self_play_game, to_batch, TrainingExample};
pub use train::{
    checkpoint_path, latest_checkpoint, read_metrics, run_iteration, train, IterationConfig,
    IterationMetrics, Memory, TrainConfig, TrainError, METRICS_FILE,
};
