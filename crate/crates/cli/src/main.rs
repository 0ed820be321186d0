//! `bttt`: train agents, run tournaments and benchmarks, or play a game.
//!
//! Exit codes: 0 success, 1 agent failure, 2 configuration error, 3 I/O
//! error, 4 missing checkpoint.

mod config;
mod error;
mod play;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use bttt_core::az::{train, TrainConfig, METRICS_FILE};
use bttt_core::harness::{
    bench_time_per_move, checkpoint_digests, eval_all_positions, resolve, resolve_all, round_robin,
    sample_positions, write_results, AgentSpec, BrickChoice, ResultRow, RunManifest,
};
use bttt_core::nn::NetworkConfig;
use bttt_core::{GameRecord, Square};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use config::{RunConfig, Side};
use error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "bttt",
    version,
    about = "Brick Tic-Tac-Toe agents and experiments"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Base seed for every random stream in the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for self-play and match games.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More progress output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Self-play training; resumes from the newest checkpoint in --out.
    Train(TrainArgs),
    /// Round robin over ordered pairs of agents.
    Tournament(TournamentArgs),
    /// One agent as player 1 from every brick square.
    EvalAll(EvalAllArgs),
    /// Mean decision time per move.
    Bench(BenchArgs),
    /// Play against an agent on the terminal.
    Play(PlayArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Scale {
    /// 32 filters, 3 residual blocks.
    Desk,
    /// 75 filters, 5 residual blocks, 850 iterations.
    Full,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Comma-separated brick squares sampled per self-play game.
    #[arg(long, value_delimiter = ',')]
    brick_pool: Option<Vec<String>>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long, value_enum)]
    scale: Option<Scale>,
    /// Search simulations per self-play move.
    #[arg(long)]
    simulations: Option<u32>,
}

#[derive(Args, Debug)]
struct TournamentArgs {
    /// Comma-separated agents: random, minimax, minimax:seeded, mcts:N, azero:PATH:SIMS.
    #[arg(long, value_delimiter = ',')]
    agents: Option<Vec<String>>,
    /// Brick square, or several comma-separated for a per-game draw.
    #[arg(long, value_delimiter = ',')]
    brick: Option<Vec<String>>,
    #[arg(long)]
    games: Option<u32>,
    /// Leave out each agent's game against itself.
    #[arg(long)]
    no_self_play: bool,
}

#[derive(Args, Debug)]
struct EvalAllArgs {
    #[arg(long)]
    agent: Option<String>,
    #[arg(long)]
    opponent: Option<String>,
    #[arg(long)]
    games_per_position: Option<u32>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',')]
    agents: Option<Vec<String>>,
    #[arg(long)]
    moves: Option<usize>,
    #[arg(long)]
    brick: Option<String>,
    /// Time positions reached by up to this many random plies.
    #[arg(long)]
    random_plies: Option<usize>,
}

#[derive(Args, Debug)]
struct PlayArgs {
    #[arg(long)]
    agent: Option<String>,
    #[arg(long)]
    brick: Option<String>,
    /// The side you play; O moves first.
    #[arg(long, value_enum)]
    human: Option<Side>,
}

struct Globals {
    seed: u64,
    workers: usize,
    verbose: u8,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("bttt: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut file = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let g = Globals {
        seed: cli.global.seed.or(file.seed).unwrap_or(0),
        workers: cli.global.workers.or(file.workers).unwrap_or(1).max(1),
        verbose: cli.global.verbose.max(file.verbose.unwrap_or(0)),
    };
    let out = cli.global.out.clone().or(file.out.take());
    match cli.command {
        Command::Train(a) => cmd_train(
            a,
            file.train.take(),
            out,
            &g,
            cli.global.seed,
            cli.global.workers,
        ),
        Command::Tournament(a) => cmd_tournament(a, file, out, &g),
        Command::EvalAll(a) => cmd_eval_all(a, file, out, &g),
        Command::Bench(a) => cmd_bench(a, file, out, &g),
        Command::Play(a) => cmd_play(a, file, out, &g),
    }
}

fn parse_square(text: &str, key: &str) -> Result<Square, CliError> {
    text.parse()
        .map_err(|e| CliError::Config(format!("{key}: {e}")))
}

fn parse_agent(text: &str, key: &str) -> Result<AgentSpec, CliError> {
    text.parse()
        .map_err(|e| CliError::Config(format!("{key}: {e}")))
}

fn parse_agents(list: &[String], key: &str) -> Result<Vec<AgentSpec>, CliError> {
    list.iter().map(|s| parse_agent(s, key)).collect()
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

fn write_table(path: &Path, rows: &[ResultRow]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    write_results(BufWriter::new(file), rows)?;
    Ok(())
}

fn print_table(rows: &[ResultRow]) -> Result<(), CliError> {
    write_results(std::io::stdout().lock(), rows)?;
    Ok(())
}

fn manifest(
    command: &str,
    g: &Globals,
    agents: &[AgentSpec],
    config: &impl Serialize,
    outputs: Vec<PathBuf>,
) -> Result<RunManifest, CliError> {
    Ok(RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        base_seed: g.seed,
        workers: g.workers,
        agents: agents.to_vec(),
        checkpoints: checkpoint_digests(agents)?,
        config: serde_json::to_value(config).expect("configs serialize"),
        outputs,
    })
}

fn cmd_train(
    a: TrainArgs,
    section: Option<TrainConfig>,
    out: Option<PathBuf>,
    g: &Globals,
    seed_flag: Option<u64>,
    workers_flag: Option<usize>,
) -> Result<(), CliError> {
    let from_file = section.is_some();
    let mut cfg = section.unwrap_or_default();
    // Global values override the section only when given explicitly.
    if seed_flag.is_some() || !from_file {
        cfg.seed = g.seed;
    }
    if workers_flag.is_some() || !from_file {
        cfg.workers = g.workers;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    match a.scale {
        Some(Scale::Desk) => cfg.network = NetworkConfig::desk(),
        Some(Scale::Full) => {
            cfg.network = NetworkConfig::full();
            cfg.iterations = 850;
        }
        None => {}
    }
    if let Some(n) = a.iterations {
        cfg.iterations = n;
    }
    if let Some(n) = a.simulations {
        cfg.search.simulations = n;
    }
    if let Some(pool) = a.brick_pool {
        cfg.iteration.brick_pool = pool
            .iter()
            .map(|s| parse_square(s, "brick_pool"))
            .collect::<Result<_, _>>()?;
    }
    cfg.validate()?;
    if g.verbose > 0 {
        eprintln!("training into {}", cfg.out_dir.display());
    }
    let last = train(&cfg, |m| {
        println!(
            "iter {:>4}  games {:>3}  len {:>5.1}  O wins {:>5.1}%  loss {:.4} (value {:.4}, policy {:.4})  {:.1}s + {:.1}s",
            m.iteration,
            m.games,
            m.mean_game_length,
            100.0 * m.o_win_rate,
            m.loss.total,
            m.loss.value,
            m.loss.policy,
            m.selfplay_seconds,
            m.train_seconds
        );
    })?;
    println!("latest checkpoint {}", last.display());
    if g.verbose > 0 {
        eprintln!("metrics in {}", cfg.out_dir.join(METRICS_FILE).display());
    }
    Ok(())
}

fn cmd_tournament(
    a: TournamentArgs,
    file: RunConfig,
    out: Option<PathBuf>,
    g: &Globals,
) -> Result<(), CliError> {
    let mut cfg = file.tournament;
    if let Some(list) = a.agents {
        cfg.agents = parse_agents(&list, "agents")?;
    }
    if let Some(b) = a.brick {
        cfg.bricks = b
            .iter()
            .map(|s| parse_square(s, "brick"))
            .collect::<Result<_, _>>()?;
    }
    if let Some(n) = a.games {
        cfg.games = n;
    }
    if a.no_self_play {
        cfg.include_self = false;
    }
    let brick = match cfg.bricks.as_slice() {
        [] => {
            return Err(CliError::Config(
                "brick: at least one square is required".into(),
            ))
        }
        [one] => BrickChoice::Fixed(*one),
        many => BrickChoice::Pool(many.to_vec()),
    };
    let rows: Vec<ResultRow> = round_robin(
        &cfg.agents,
        &brick,
        cfg.games,
        g.seed,
        cfg.include_self,
        g.workers,
    )?
    .into_iter()
    .map(|m| m.row)
    .collect();
    let dir = out.unwrap_or_else(|| PathBuf::from("runs/tournament"));
    create_dir(&dir)?;
    let csv = dir.join("results.csv");
    write_table(&csv, &rows)?;
    manifest("tournament", g, &cfg.agents, &cfg, vec![csv])?.write(&dir.join("manifest.json"))?;
    print_table(&rows)
}

fn cmd_eval_all(
    a: EvalAllArgs,
    file: RunConfig,
    out: Option<PathBuf>,
    g: &Globals,
) -> Result<(), CliError> {
    let mut cfg = file.eval_all;
    if let Some(s) = a.agent {
        cfg.agent = Some(parse_agent(&s, "agent")?);
    }
    if let Some(s) = a.opponent {
        cfg.opponent = Some(parse_agent(&s, "opponent")?);
    }
    if let Some(n) = a.games_per_position {
        cfg.games_per_position = n;
    }
    let agent = cfg
        .agent
        .clone()
        .ok_or_else(|| CliError::Config("agent: required".into()))?;
    let opponent = cfg
        .opponent
        .clone()
        .ok_or_else(|| CliError::Config("opponent: required".into()))?;
    let report = eval_all_positions(&agent, &opponent, cfg.games_per_position, g.seed, g.workers)?;
    let dir = out.unwrap_or_else(|| PathBuf::from("runs/eval-all"));
    create_dir(&dir)?;
    let csv = dir.join("results.csv");
    write_table(&csv, &report.table())?;
    manifest("eval-all", g, &[agent, opponent], &cfg, vec![csv])?
        .write(&dir.join("manifest.json"))?;
    print_table(&report.table())?;
    println!(
        "aggregate {}-{} over {} games: {:.1}% player 1 wins",
        report.aggregate.wins1,
        report.aggregate.wins2,
        report.aggregate.games,
        report.win_rate_percent()
    );
    Ok(())
}

#[derive(Serialize)]
struct BenchRow {
    agent: String,
    moves: usize,
    mean_s: f64,
    std_s: f64,
}

fn cmd_bench(
    a: BenchArgs,
    file: RunConfig,
    out: Option<PathBuf>,
    g: &Globals,
) -> Result<(), CliError> {
    let mut cfg = file.bench;
    if let Some(list) = a.agents {
        cfg.agents = parse_agents(&list, "agents")?;
    }
    if let Some(n) = a.moves {
        cfg.moves = n;
    }
    if let Some(b) = a.brick {
        cfg.brick = parse_square(&b, "brick")?;
    }
    if let Some(n) = a.random_plies {
        cfg.random_plies = n;
    }
    if cfg.agents.is_empty() {
        return Err(CliError::Config(
            "agents: at least one agent is required".into(),
        ));
    }
    let resolved = resolve_all(&cfg.agents)?;
    let positions = sample_positions(cfg.brick, cfg.random_plies, cfg.moves.max(1), g.seed);
    let mut rows = Vec::new();
    for agent in &resolved {
        let t = bench_time_per_move(agent, &positions, cfg.moves, g.seed)?;
        if g.verbose > 0 {
            eprintln!("{}: {:.6} s/move", agent.name(), t.mean_s);
        }
        rows.push(BenchRow {
            agent: agent.name(),
            moves: t.moves,
            mean_s: t.mean_s,
            std_s: t.std_s,
        });
    }
    let dir = out.unwrap_or_else(|| PathBuf::from("runs/bench"));
    create_dir(&dir)?;
    let path = dir.join("bench.json");
    let text = serde_json::to_string_pretty(&rows).expect("rows serialize");
    std::fs::write(&path, text + "\n")
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    manifest("bench", g, &cfg.agents, &cfg, vec![path])?.write(&dir.join("manifest.json"))?;
    println!("agent,moves,mean_s,std_s");
    for r in &rows {
        println!("{},{},{},{}", r.agent, r.moves, r.mean_s, r.std_s);
    }
    Ok(())
}

fn cmd_play(
    a: PlayArgs,
    file: RunConfig,
    out: Option<PathBuf>,
    g: &Globals,
) -> Result<(), CliError> {
    let mut cfg = file.play;
    if let Some(s) = a.agent {
        cfg.agent = parse_agent(&s, "agent")?;
    }
    if let Some(b) = a.brick {
        cfg.brick = parse_square(&b, "brick")?;
    }
    if let Some(h) = a.human {
        cfg.human = h;
    }
    let agent = resolve(&cfg.agent)?;
    let record = play::play(
        &agent,
        cfg.brick,
        cfg.human,
        g.seed,
        &mut std::io::stdin().lock(),
        &mut std::io::stdout().lock(),
    )?;
    let dir = out.unwrap_or_else(|| PathBuf::from("runs/play"));
    create_dir(&dir)?;
    let path = dir.join("games.jsonl");
    append_record(&path, &record)?;
    eprintln!("game saved to {}", path.display());
    Ok(())
}

fn append_record(path: &Path, record: &GameRecord) -> Result<(), CliError> {
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    writeln!(f, "{}", record.to_line())?;
    Ok(())
}
