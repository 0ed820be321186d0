//! Seeded matches, round-robin tournaments, the all-brick evaluation and
//! per-move timing, with CSV result tables and a run manifest.

mod bench;
mod results;
mod spec;

use std::fmt;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use bench::{bench_time_per_move, sample_positions, TimingStats};
pub use results::{
    checkpoint_digests, read_results, sha256_file, write_results, CheckpointDigest, ResultRow,
    RunManifest, CSV_HEADER,
};
pub use spec::{resolve, resolve_all, AgentSpec, ResolvedAgent};

use crate::board::{Board, GameRecord, Player, RecordMeta, Square};
use crate::nn::NnError;
use crate::seed::{derive, fnv1a};
use crate::AgentError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("unknown agent {name:?}: {reason}")]
    UnknownAgent { name: String, reason: String },
    #[error("checkpoint not found: {}", .0.display())]
    MissingCheckpoint(PathBuf),
    #[error("cannot load checkpoint {}: {source}", path.display())]
    Checkpoint { path: PathBuf, source: NnError },
    #[error("invalid match configuration: {0}")]
    Config(String),
    #[error("{agent} failed in game {game}: {reason}")]
    AgentFailure {
        agent: String,
        game: u32,
        reason: String,
        /// Tallies of the games that finished before the failure. Not a
        /// valid result.
        partial: Box<ResultRow>,
    },
    #[error("results file: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed results row {row}: {reason}")]
    BadRow { row: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where the brick goes in each game of a match.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BrickChoice {
    Fixed(Square),
    /// Drawn uniformly per game from the game's own seed.
    Pool(Vec<Square>),
}

impl fmt::Display for BrickChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BrickChoice::Fixed(s) => write!(f, "{s}"),
            BrickChoice::Pool(p) => {
                let names: Vec<String> = p.iter().map(|s| s.to_string()).collect();
                write!(f, "{}", names.join("|"))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct MatchConfig {
    /// Always plays O, i.e. moves first.
    pub player1: AgentSpec,
    pub player2: AgentSpec,
    pub brick: BrickChoice,
    pub games: u32,
    pub base_seed: u64,
    pub record_games: bool,
}

impl MatchConfig {
    pub fn new(
        player1: AgentSpec,
        player2: AgentSpec,
        brick: Square,
        games: u32,
        base_seed: u64,
    ) -> Self {
        MatchConfig {
            player1,
            player2,
            brick: BrickChoice::Fixed(brick),
            games,
            base_seed,
            record_games: false,
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.games == 0 {
            return Err(HarnessError::Config("games must be at least 1".into()));
        }
        if let BrickChoice::Pool(p) = &self.brick {
            if p.is_empty() {
                return Err(HarnessError::Config("brick pool is empty".into()));
            }
        }
        Ok(())
    }
}

/// Total decision time and move count for one side.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ThinkTime {
    pub seconds: f64,
    pub moves: u64,
}

impl ThinkTime {
    pub fn mean(&self) -> f64 {
        if self.moves == 0 {
            0.0
        } else {
            self.seconds / self.moves as f64
        }
    }

    fn add(&mut self, other: ThinkTime) {
        self.seconds += other.seconds;
        self.moves += other.moves;
    }
}

/// A finished match: the table row plus what went into it.
#[derive(Clone, Debug)]
pub struct MatchOutcome {
    pub row: ResultRow,
    pub think1: ThinkTime,
    pub think2: ThinkTime,
    /// In game order; empty unless recording was requested.
    pub records: Vec<GameRecord>,
}

struct GameResult {
    winner: Player,
    think: [ThinkTime; 2],
    record: Option<GameRecord>,
}

struct GameFailure {
    agent: String,
    reason: String,
}

/// Seed of game `k` in a match whose base seed is `base_seed`.
pub fn game_seed(base_seed: u64, k: u32) -> u64 {
    derive(base_seed, &[k as u64])
}

/// Base seed of one pairing inside a tournament, so adding pairings never
/// changes the games of the others.
pub fn pairing_seed(base_seed: u64, pairing: &str) -> u64 {
    derive(base_seed, &[fnv1a(pairing)])
}

fn play_game(
    p1: &ResolvedAgent,
    p2: &ResolvedAgent,
    brick: &BrickChoice,
    seed: u64,
    record: bool,
) -> Result<GameResult, GameFailure> {
    let brick = match brick {
        BrickChoice::Fixed(s) => *s,
        BrickChoice::Pool(pool) => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[0]));
            *pool.choose(&mut rng).expect("pool validated non-empty")
        }
    };
    let mut agents = [p1.build(derive(seed, &[1])), p2.build(derive(seed, &[2]))];
    let names = [p1.name(), p2.name()];
    let mut board = Board::new(brick);
    let mut think = [ThinkTime::default(); 2];
    let mut rec = record.then(|| {
        let mut r = GameRecord::new(brick);
        r.meta = Some(RecordMeta {
            players: Some(names.clone()),
            ..RecordMeta::default()
        });
        r
    });
    loop {
        if let Some(winner) = board.outcome().winner() {
            if let Some(r) = rec.as_mut() {
                r.result = board.outcome();
            }
            return Ok(GameResult {
                winner,
                think,
                record: rec,
            });
        }
        let side = match board.side_to_move() {
            Player::O => 0,
            Player::X => 1,
        };
        let start = Instant::now();
        let chosen = agents[side].select_move(&board);
        let elapsed = start.elapsed().as_secs_f64();
        think[side].seconds += elapsed;
        think[side].moves += 1;
        let fail = |reason: String| GameFailure {
            agent: names[side].clone(),
            reason,
        };
        let mv = chosen.map_err(|e: AgentError| fail(e.to_string()))?;
        board = board
            .apply_move(mv)
            .map_err(|e| fail(format!("illegal move {mv}: {e}")))?;
        if let Some(r) = rec.as_mut() {
            r.moves.push(mv);
            let meta = r.meta.as_mut().expect("set above");
            meta.think_time_s.push(elapsed);
            meta.policies.push(agents[side].last_policy());
        }
    }
}

/// Runs `count` jobs on up to `workers` threads and returns their results
/// in job order. Each job depends only on its index, so the output does
/// not depend on the worker count.
fn run_indexed<T: Send>(count: usize, workers: usize, job: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let workers = workers.clamp(1, count.max(1));
    if workers == 1 {
        return (0..count).map(job).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let out = job(i);
                slots
                    .lock()
                    .expect("no worker panics while holding the lock")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|s| s.expect("every job ran"))
        .collect()
}

/// Plays a match between two resolved agents. Game `k` is seeded with
/// [`game_seed`]`(base_seed, k)` and player 1 always plays O.
pub fn play_resolved(
    p1: &ResolvedAgent,
    p2: &ResolvedAgent,
    brick: &BrickChoice,
    games: u32,
    base_seed: u64,
    record_games: bool,
    workers: usize,
) -> Result<MatchOutcome, HarnessError> {
    let results = run_indexed(games as usize, workers, |k| {
        play_game(p1, p2, brick, game_seed(base_seed, k as u32), record_games)
    });
    let mut out = MatchOutcome {
        row: ResultRow {
            player1: p1.name(),
            player2: p2.name(),
            brick: brick.to_string(),
            wins1: 0,
            wins2: 0,
            games: 0,
            mean_time1_s: 0.0,
            mean_time2_s: 0.0,
        },
        think1: ThinkTime::default(),
        think2: ThinkTime::default(),
        records: Vec::new(),
    };
    for (k, result) in results.into_iter().enumerate() {
        match result {
            Ok(g) => {
                out.row.games += 1;
                match g.winner {
                    Player::O => out.row.wins1 += 1,
                    Player::X => out.row.wins2 += 1,
                }
                out.think1.add(g.think[0]);
                out.think2.add(g.think[1]);
                out.records.extend(g.record);
            }
            Err(f) => {
                out.finish_times();
                return Err(HarnessError::AgentFailure {
                    agent: f.agent,
                    game: k as u32,
                    reason: f.reason,
                    partial: Box::new(out.row),
                });
            }
        }
    }
    out.finish_times();
    Ok(out)
}

impl MatchOutcome {
    fn finish_times(&mut self) {
        self.row.mean_time1_s = self.think1.mean();
        self.row.mean_time2_s = self.think2.mean();
    }
}

/// Resolves both agents and plays the match.
pub fn play_match(cfg: &MatchConfig, workers: usize) -> Result<MatchOutcome, HarnessError> {
    cfg.validate()?;
    let agents = resolve_all(&[cfg.player1.clone(), cfg.player2.clone()])?;
    play_resolved(
        &agents[0],
        &agents[1],
        &cfg.brick,
        cfg.games,
        cfg.base_seed,
        cfg.record_games,
        workers,
    )
}

/// One match per ordered pair of agents (so both colour assignments are
/// played), optionally including each agent against itself. Rows follow
/// the agent list order.
pub fn round_robin(
    agents: &[AgentSpec],
    brick: &BrickChoice,
    games: u32,
    base_seed: u64,
    include_self: bool,
    workers: usize,
) -> Result<Vec<MatchOutcome>, HarnessError> {
    if agents.len() < 2 {
        return Err(HarnessError::Config(
            "a round robin needs at least two agents".into(),
        ));
    }
    MatchConfig {
        player1: agents[0].clone(),
        player2: agents[1].clone(),
        brick: brick.clone(),
        games,
        base_seed,
        record_games: false,
    }
    .validate()?;
    let resolved = resolve_all(agents)?;
    let mut out = Vec::new();
    for (i, a) in resolved.iter().enumerate() {
        for (j, b) in resolved.iter().enumerate() {
            if i == j && !include_self {
                continue;
            }
            let id = format!("{}|{}|{}|{}", i, j, a.name(), b.name());
            out.push(play_resolved(
                a,
                b,
                brick,
                games,
                pairing_seed(base_seed, &id),
                false,
                workers,
            )?);
        }
    }
    Ok(out)
}

/// Per-brick rows and their total for the all-positions evaluation.
#[derive(Clone, Debug)]
pub struct PositionsReport {
    /// One row per brick square in index order.
    pub rows: Vec<ResultRow>,
    /// Sum over all rows, with brick `all`.
    pub aggregate: ResultRow,
}

impl PositionsReport {
    /// Player 1 wins as a percentage of all games.
    pub fn win_rate_percent(&self) -> f64 {
        if self.aggregate.games == 0 {
            0.0
        } else {
            100.0 * self.aggregate.wins1 as f64 / self.aggregate.games as f64
        }
    }

    /// Rows followed by the aggregate, ready for [`write_results`].
    pub fn table(&self) -> Vec<ResultRow> {
        let mut t = self.rows.clone();
        t.push(self.aggregate.clone());
        t
    }
}

/// Plays `games_per_pos` games from every brick square with `agent` as
/// player 1.
pub fn eval_all_positions(
    agent: &AgentSpec,
    opponent: &AgentSpec,
    games_per_pos: u32,
    base_seed: u64,
    workers: usize,
) -> Result<PositionsReport, HarnessError> {
    if games_per_pos == 0 {
        return Err(HarnessError::Config(
            "games per position must be at least 1".into(),
        ));
    }
    let resolved = resolve_all(&[agent.clone(), opponent.clone()])?;
    let (p1, p2) = (&resolved[0], &resolved[1]);
    let mut rows = Vec::with_capacity(49);
    let (mut t1, mut t2) = (ThinkTime::default(), ThinkTime::default());
    for brick in Square::all() {
        let id = format!("{}|{}|{}", p1.name(), p2.name(), brick);
        let m = play_resolved(
            p1,
            p2,
            &BrickChoice::Fixed(brick),
            games_per_pos,
            pairing_seed(base_seed, &id),
            false,
            workers,
        )?;
        t1.add(m.think1);
        t2.add(m.think2);
        rows.push(m.row);
    }
    let aggregate = ResultRow {
        player1: p1.name(),
        player2: p2.name(),
        brick: "all".into(),
        wins1: rows.iter().map(|r| r.wins1).sum(),
        wins2: rows.iter().map(|r| r.wins2).sum(),
        games: rows.iter().map(|r| r.games).sum(),
        mean_time1_s: t1.mean(),
        mean_time2_s: t2.mean(),
    };
    Ok(PositionsReport { rows, aggregate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::board::test_util::sq;
    use crate::board::Outcome;

    fn spec(s: &str) -> AgentSpec {
        s.parse().unwrap()
    }

    #[test]
    fn minimax_beats_random_from_both_sides() {
        let m = play_match(
            &MatchConfig::new(spec("minimax"), spec("random"), sq("D4"), 100, 1),
            1,
        )
        .unwrap();
        assert_eq!((m.row.wins1, m.row.wins2), (100, 0));
        let m = play_match(
            &MatchConfig::new(spec("random"), spec("minimax"), sq("D4"), 100, 1),
            1,
        )
        .unwrap();
        assert_eq!((m.row.wins1, m.row.wins2), (0, 100));
    }

    #[test]
    fn random_self_play_favours_the_first_player_moderately() {
        let m = play_match(
            &MatchConfig::new(spec("random"), spec("random"), sq("D4"), 100, 7),
            1,
        )
        .unwrap();
        assert!((40..=80).contains(&m.row.wins1), "{:?}", m.row);
    }

    #[test]
    fn results_are_reproducible_and_independent_of_workers() {
        let mut cfg = MatchConfig::new(spec("random"), spec("mcts:20"), sq("C3"), 12, 99);
        cfg.record_games = true;
        let a = play_match(&cfg, 1).unwrap();
        let b = play_match(&cfg, 3).unwrap();
        assert_eq!((a.row.wins1, a.row.wins2), (b.row.wins1, b.row.wins2));
        let moves = |m: &MatchOutcome| {
            m.records
                .iter()
                .map(|r| r.moves.clone())
                .collect::<Vec<_>>()
        };
        assert_eq!(moves(&a), moves(&b));
        cfg.base_seed = 100;
        assert_ne!(moves(&a), moves(&play_match(&cfg, 1).unwrap()));
    }

    #[test]
    fn every_row_conserves_games() {
        let agents = [spec("random"), spec("minimax"), spec("mcts:10")];
        let rows = round_robin(&agents, &BrickChoice::Fixed(sq("D4")), 4, 3, true, 2).unwrap();
        assert_eq!(rows.len(), 3 * 2 + 3);
        for m in &rows {
            assert_eq!(m.row.wins1 + m.row.wins2, m.row.games);
            assert_eq!(m.row.games, 4);
        }
        let rows =
            round_robin(&agents[..2], &BrickChoice::Fixed(sq("D4")), 4, 3, false, 1).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].row.player1, "random");
        assert_eq!(rows[1].row.player1, "minimax");
    }

    #[test]
    fn adding_an_agent_leaves_existing_pairings_alone() {
        let brick = BrickChoice::Fixed(sq("E5"));
        let small =
            round_robin(&[spec("random"), spec("mcts:5")], &brick, 6, 11, false, 1).unwrap();
        let large = round_robin(
            &[spec("random"), spec("mcts:5"), spec("minimax")],
            &brick,
            6,
            11,
            false,
            1,
        )
        .unwrap();
        assert_eq!(small[0].row.wins1, large[0].row.wins1);
        assert_eq!(small[1].row.wins1, large[2].row.wins1);
    }

    #[test]
    fn pool_bricks_come_from_the_pool() {
        let mut cfg = MatchConfig::new(spec("random"), spec("random"), sq("A1"), 40, 5);
        let pool = vec![sq("C3"), sq("D3"), sq("D4")];
        cfg.brick = BrickChoice::Pool(pool.clone());
        cfg.record_games = true;
        let m = play_match(&cfg, 1).unwrap();
        assert_eq!(m.row.brick, "C3|D3|D4");
        for p in &pool {
            assert!(m.records.iter().any(|r| r.brick == *p));
        }
        assert!(m.records.iter().all(|r| pool.contains(&r.brick)));
    }

    #[test]
    fn records_replay_to_the_reported_winner() {
        let mut cfg = MatchConfig::new(spec("minimax:seeded"), spec("random"), sq("B2"), 5, 2);
        cfg.record_games = true;
        let m = play_match(&cfg, 1).unwrap();
        assert_eq!(m.records.len(), 5);
        let o_wins = m
            .records
            .iter()
            .filter(|r| r.replay().unwrap().outcome() == Outcome::OWin)
            .count();
        assert_eq!(o_wins as u32, m.row.wins1);
        for r in &m.records {
            let meta = r.meta.as_ref().unwrap();
            assert_eq!(meta.think_time_s.len(), r.moves.len());
        }
    }

    #[test]
    fn all_positions_cover_every_square() {
        let report = eval_all_positions(&spec("minimax"), &spec("random"), 2, 0, 1).unwrap();
        assert_eq!(report.rows.len(), 49);
        assert_eq!(report.aggregate.games, 98);
        assert_eq!(
            report.aggregate.wins1,
            report.rows.iter().map(|r| r.wins1).sum::<u32>()
        );
        assert_eq!(report.table().len(), 50);
        assert!(report.win_rate_percent() > 90.0);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cfg = MatchConfig::new(spec("random"), spec("random"), sq("D4"), 0, 0);
        assert!(matches!(play_match(&cfg, 1), Err(HarnessError::Config(_))));
        let one = [spec("random")];
        assert!(matches!(
            round_robin(&one, &BrickChoice::Fixed(sq("D4")), 1, 0, true, 1),
            Err(HarnessError::Config(_))
        ));
    }
}
