//! Generation-then-train iterations and the checkpointed training loop.

use std::collections::VecDeque;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::search::AzSearchConfig;
use super::selfplay::{self_play_game, to_batch, TrainingExample};
use crate::board::{Outcome, Square};
use crate::nn::{
    load_checkpoint, save_checkpoint, LossBreakdown, Network, NetworkConfig, NnError, Sgd,
};
use crate::seed::derive;
use crate::AgentError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IterationConfig {
    /// Examples (reflections included) generated per iteration.
    pub memory_target: usize,
    pub batch_size: usize,
    pub brick_pool: Vec<Square>,
    /// Minibatch steps per iteration; `None` means two passes over the memory.
    pub updates_per_iteration: Option<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2: f64,
    /// Number of most recent iterations whose examples are trained on.
    pub memory_window: usize,
}

impl Default for IterationConfig {
    fn default() -> Self {
        IterationConfig {
            memory_target: 6000,
            batch_size: 256,
            brick_pool: vec![Square::new(24).expect("D4")],
            updates_per_iteration: None,
            learning_rate: 0.1,
            momentum: 0.9,
            l2: 1e-4,
            memory_window: 1,
        }
    }
}

impl IterationConfig {
    pub fn updates(&self) -> usize {
        self.updates_per_iteration
            .unwrap_or_else(|| (2 * self.memory_target).div_ceil(self.batch_size))
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |key: &str, msg: &str| Err(TrainError::Config(format!("{key}: {msg}")));
        if self.memory_target == 0 {
            return bad("memory_target", "must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if self.brick_pool.is_empty() {
            return bad("brick_pool", "must name at least one square");
        }
        if self.memory_window == 0 {
            return bad("memory_window", "must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) || !(self.l2 >= 0.0)
        {
            return bad(
                "learning_rate/momentum/l2",
                "need lr > 0, momentum in [0, 1), l2 >= 0",
            );
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("iteration {iteration}: {source}")]
    Io {
        iteration: usize,
        #[source]
        source: std::io::Error,
    },
    #[error("iteration {iteration}: {source}")]
    Network {
        iteration: usize,
        #[source]
        source: NnError,
    },
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// Per-iteration statistics, one JSON line each in the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub games: usize,
    pub examples: usize,
    pub mean_game_length: f64,
    pub o_win_rate: f64,
    /// Mean of the minibatch losses over this iteration's updates.
    pub loss: LossBreakdown,
    pub updates: usize,
    pub selfplay_seconds: f64,
    pub train_seconds: f64,
}

/// Examples of the most recent iterations.
#[derive(Clone, Debug, Default)]
pub struct Memory {
    generations: VecDeque<Vec<TrainingExample>>,
}

impl Memory {
    pub fn len(&self) -> usize {
        self.generations.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&mut self, examples: Vec<TrainingExample>, window: usize) {
        self.generations.push_back(examples);
        while self.generations.len() > window {
            self.generations.pop_front();
        }
    }

    fn get(&self, mut i: usize) -> &TrainingExample {
        for g in &self.generations {
            if i < g.len() {
                return &g[i];
            }
            i -= g.len();
        }
        panic!("memory index out of range")
    }
}

fn game_rng(seed: u64, game: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, &[game as u64]))
}

/// Plays games until `target` examples exist. Games are seeded by index and
/// may run on several threads; the result equals the sequential run.
fn generate(
    net: &Network<f32>,
    search: &AzSearchConfig,
    pool: &[Square],
    target: usize,
    seed: u64,
    workers: usize,
) -> Result<(Vec<TrainingExample>, Vec<Outcome>, Vec<usize>), AgentError> {
    let play = |game: usize| {
        let mut rng = game_rng(seed, game);
        let brick = pool[rng.random_range(0..pool.len())];
        self_play_game(net, search, brick, &mut rng)
    };
    let workers = workers.max(1);
    let mut examples = Vec::new();
    let mut outcomes = Vec::new();
    let mut lengths = Vec::new();
    let mut next = 0;
    while examples.len() < target {
        let wave: Vec<_> = if workers == 1 {
            vec![play(next)]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = (next..next + workers)
                    .map(|g| s.spawn(move || play(g)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("self-play thread panicked"))
                    .collect()
            })
        };
        next += wave.len();
        for result in wave {
            if examples.len() >= target {
                break;
            }
            let (ex, rec) = result?;
            outcomes.push(rec.result);
            lengths.push(rec.moves.len());
            examples.extend(ex);
        }
    }
    Ok((examples, outcomes, lengths))
}

/// One self-play generation followed by minibatch SGD on the memory.
#[allow(clippy::too_many_arguments)]
pub fn run_iteration(
    net: &mut Network<f32>,
    sgd: &mut Sgd<f32>,
    memory: &mut Memory,
    it_cfg: &IterationConfig,
    search: &AzSearchConfig,
    iteration: usize,
    seed: u64,
    workers: usize,
) -> Result<IterationMetrics, TrainError> {
    let start = Instant::now();
    let (examples, outcomes, lengths) = generate(
        net,
        search,
        &it_cfg.brick_pool,
        it_cfg.memory_target,
        derive(seed, &[0]),
        workers,
    )?;
    let selfplay_seconds = start.elapsed().as_secs_f64();
    let games = outcomes.len();
    let o_wins = outcomes.iter().filter(|&&o| o == Outcome::OWin).count();
    let new_examples = examples.len();
    memory.push(examples, it_cfg.memory_window);

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[1]));
    let updates = it_cfg.updates();
    let mut sum = LossBreakdown::default();
    let net_err = |source| TrainError::Network { iteration, source };
    for _ in 0..updates {
        let n = it_cfg.batch_size.min(memory.len());
        let idx = sample(&mut rng, memory.len(), n);
        let batch = to_batch(idx.iter().map(|i| memory.get(i)));
        let (loss, grads, cache) = net.loss_and_gradients(&batch, it_cfg.l2).map_err(net_err)?;
        net.update_running_stats(&cache);
        sgd.step(net.params_mut(), &grads).map_err(net_err)?;
        sum.value += loss.value;
        sum.policy += loss.policy;
        sum.l2 += loss.l2;
        sum.total += loss.total;
    }
    let k = updates.max(1) as f64;
    Ok(IterationMetrics {
        iteration,
        games,
        examples: new_examples,
        mean_game_length: lengths.iter().sum::<usize>() as f64 / games.max(1) as f64,
        o_win_rate: o_wins as f64 / games.max(1) as f64,
        loss: LossBreakdown {
            value: sum.value / k,
            policy: sum.policy / k,
            l2: sum.l2 / k,
            total: sum.total / k,
        },
        updates,
        selfplay_seconds,
        train_seconds: start.elapsed().as_secs_f64(),
    })
}

/// A full training run, read from and written as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub network: NetworkConfig,
    pub search: AzSearchConfig,
    pub iteration: IterationConfig,
    pub iterations: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            network: NetworkConfig::desk(),
            search: AzSearchConfig {
                noise: true,
                ..AzSearchConfig::default()
            },
            iteration: IterationConfig::default(),
            iterations: 40,
            seed: 0,
            out_dir: PathBuf::from("runs/train"),
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.network
            .validate()
            .map_err(|e| TrainError::Config(format!("network: {e}")))?;
        self.iteration.validate()?;
        if self.search.simulations == 0 {
            return Err(TrainError::Config(
                "search.simulations: self-play needs at least 1".into(),
            ));
        }
        if !(self.search.dirichlet_alpha > 0.0)
            || !(0.0..=1.0).contains(&self.search.dirichlet_epsilon)
        {
            return Err(TrainError::Config(
                "search: dirichlet_alpha must be positive and dirichlet_epsilon in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

pub const METRICS_FILE: &str = "metrics.jsonl";

pub fn checkpoint_path(dir: &Path, iteration: usize) -> PathBuf {
    dir.join(format!("iter_{iteration:04}.ckpt"))
}

/// Highest iteration with a checkpoint in `dir`.
pub fn latest_checkpoint(dir: &Path) -> Option<(usize, PathBuf)> {
    let entries = std::fs::read_dir(dir).ok()?;
    entries
        .filter_map(|e| {
            let name = e.ok()?.file_name().into_string().ok()?;
            let n = name
                .strip_prefix("iter_")?
                .strip_suffix(".ckpt")?
                .parse()
                .ok()?;
            Some((n, dir.join(name)))
        })
        .max_by_key(|(n, _)| *n)
}

/// Runs `cfg.iterations` iterations, saving a checkpoint (with optimizer
/// velocity) after each and appending one metrics line. An existing run in
/// `cfg.out_dir` is resumed after its latest checkpoint; because every
/// iteration draws from its own seed, the resumed run matches an
/// uninterrupted one.
pub fn train(
    cfg: &TrainConfig,
    mut on_iteration: impl FnMut(&IterationMetrics),
) -> Result<PathBuf, TrainError> {
    cfg.validate()?;
    let io = |iteration| move |source| TrainError::Io { iteration, source };
    std::fs::create_dir_all(&cfg.out_dir).map_err(io(0))?;
    let (mut net, mut sgd, start) = match latest_checkpoint(&cfg.out_dir) {
        Some((done, path)) => {
            let loaded = load_checkpoint(&path).map_err(|source| TrainError::Network {
                iteration: done,
                source,
            })?;
            if loaded.network.config() != &cfg.network {
                return Err(TrainError::Config(format!(
                    "network: {} was written with a different network config",
                    path.display()
                )));
            }
            let velocity = loaded
                .velocity
                .unwrap_or_else(|| loaded.network.params().zeros_like());
            let sgd = Sgd::with_velocity(
                cfg.iteration.learning_rate,
                cfg.iteration.momentum,
                velocity,
            );
            (loaded.network, sgd, done + 1)
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, &[u64::MAX]));
            let net = Network::new(cfg.network.clone(), &mut rng)
                .map_err(|e| TrainError::Config(format!("network: {e}")))?;
            let sgd = Sgd::new(
                cfg.iteration.learning_rate,
                cfg.iteration.momentum,
                net.params(),
            );
            (net, sgd, 1)
        }
    };
    let metrics_path = cfg.out_dir.join(METRICS_FILE);
    truncate_metrics(&metrics_path, start - 1).map_err(io(start))?;
    let config_text = serde_json::to_string_pretty(cfg).expect("config serializes");
    std::fs::write(cfg.out_dir.join("config.json"), config_text).map_err(io(start))?;

    let mut memory = Memory::default();
    let mut last = latest_checkpoint(&cfg.out_dir).map(|(_, p)| p);
    for it in start..=cfg.iterations {
        let metrics = run_iteration(
            &mut net,
            &mut sgd,
            &mut memory,
            &cfg.iteration,
            &cfg.search,
            it,
            derive(cfg.seed, &[it as u64]),
            cfg.workers,
        )?;
        let path = checkpoint_path(&cfg.out_dir, it);
        save_checkpoint(&path, &net, Some(sgd.velocity())).map_err(|source| {
            TrainError::Network {
                iteration: it,
                source,
            }
        })?;
        let mut log = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&metrics_path)
            .map_err(io(it))?;
        writeln!(
            log,
            "{}",
            serde_json::to_string(&metrics).expect("metrics serialize")
        )
        .map_err(io(it))?;
        on_iteration(&metrics);
        last = Some(path);
    }
    last.ok_or_else(|| TrainError::Config("iterations: must be at least 1".into()))
}

/// Keeps the first `keep` lines of the metrics log (if any).
fn truncate_metrics(path: &Path, keep: usize) -> std::io::Result<()> {
    let Ok(file) = std::fs::File::open(path) else {
        return Ok(());
    };
    let lines: Vec<String> = std::io::BufReader::new(file)
        .lines()
        .take(keep)
        .collect::<Result<_, _>>()?;
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    std::fs::write(path, text)
}

pub fn read_metrics(path: &Path) -> std::io::Result<Vec<IterationMetrics>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(std::io::Error::other))
        .collect()
}
