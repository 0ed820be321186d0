//! Brick Tic-Tac-Toe: a 7x7 four-in-a-row game with a single blocked square,
//! used to measure how well game-playing agents transfer to brick positions
//! they were not trained on.
//!
//! The crate provides the game engine ([`board`]), the search agents
//! ([`minimax`], [`mcts`], [`az`]), a from-scratch policy/value network
//! ([`nn`]) and the tournament harness ([`harness`]).

pub mod agent;
pub mod az;
pub mod board;
pub mod harness;
pub mod heuristic;
pub mod mcts;
pub mod minimax;
pub mod nn;
pub mod seed;

pub use agent::{Agent, AgentError};
pub use board::{Board, GameRecord, Outcome, Piece, Player, Square, Symmetry};
