//! UCT Monte Carlo tree search with uniformly random rollouts.
//!
//! Rewards are +1 for an O win and -1 for an X win. A node entered by an O
//! move accumulates `+r`, a node entered by an X move accumulates `-r`, so
//! every parent picks the child maximising `v/n + C * sqrt(ln(sum n) / n)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{Agent, AgentError};
use crate::board::{BitIter, Board, Outcome, Player, Square, CELLS};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MctsConfig {
    pub iterations: u32,
    pub exploration: f64,
    pub seed: u64,
}

impl MctsConfig {
    pub fn with_iterations(iterations: u32) -> Self {
        MctsConfig {
            iterations,
            exploration: 1.0,
            seed: 0,
        }
    }
}

/// Statistics the selection rule needs about one child.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChildStats {
    pub square: Square,
    pub visits: u32,
    pub value: f64,
}

/// UCB1 score of a visited child. `total_visits` is the sum over siblings.
#[inline]
pub fn ucb1(value: f64, visits: u32, total_visits: u32, exploration: f64) -> f64 {
    let n = visits as f64;
    value / n + exploration * ((total_visits as f64).ln() / n).sqrt()
}

/// Index of the child with the highest UCB1 score; ties go to the lowest square.
/// Every child must have at least one visit.
pub fn uct_select(children: &[ChildStats], exploration: f64) -> usize {
    let total: u32 = children.iter().map(|c| c.visits).sum();
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, c) in children.iter().enumerate() {
        debug_assert!(c.visits > 0);
        let score = ucb1(c.value, c.visits, total, exploration);
        if score > best_score || (score == best_score && c.square < children[best].square) {
            best = i;
            best_score = score;
        }
    }
    best
}

/// Reward of a decided board. Filled boards are X wins, so the draw reward
/// of 0 only appears for an undecided board, which callers never pass.
#[inline]
fn terminal_reward(outcome: Outcome) -> f64 {
    match outcome {
        Outcome::OWin => 1.0,
        Outcome::XWin => -1.0,
        Outcome::Ongoing => 0.0,
    }
}

/// Plays uniformly random moves to the end of the game.
pub fn rollout<R: Rng>(b: &Board, rng: &mut R) -> f64 {
    let mut board = *b;
    let mut empties: Vec<usize> = BitIter(board.legal_bits()).collect();
    while !board.outcome().is_decided() {
        let i = rng.random_range(0..empties.len());
        let sq = Square::from_index_unchecked(empties.swap_remove(i));
        board = board.play_unchecked(sq);
    }
    terminal_reward(board.outcome())
}

type NodeId = usize;

#[derive(Debug, Clone)]
struct Node {
    board: Board,
    visits: u32,
    value: f64,
    children: Vec<(Square, NodeId)>,
    untried: Vec<Square>,
    /// Player whose move produced this node; `None` at the root.
    mover: Option<Player>,
}

impl Node {
    fn new(board: Board, mover: Option<Player>) -> Node {
        Node {
            board,
            visits: 0,
            value: 0.0,
            children: Vec::new(),
            untried: board.legal_moves(),
            mover,
        }
    }
}

/// A search tree rooted at one position. Trees are not reused across moves.
pub struct SearchTree {
    nodes: Vec<Node>,
    exploration: f64,
}

impl SearchTree {
    pub fn new(root: Board, exploration: f64) -> SearchTree {
        SearchTree {
            nodes: vec![Node::new(root, None)],
            exploration,
        }
    }

    /// One selection, expansion, rollout and backpropagation pass.
    pub fn iterate<R: Rng>(&mut self, rng: &mut R) {
        let mut path = vec![0];
        let mut id = 0;
        loop {
            let node = &self.nodes[id];
            if node.board.outcome().is_decided()
                || !node.untried.is_empty()
                || node.children.is_empty()
            {
                break;
            }
            id = self.select_child(node);
            path.push(id);
        }

        if !self.nodes[id].untried.is_empty() {
            let node = &mut self.nodes[id];
            let sq = node.untried.remove(rng.random_range(0..node.untried.len()));
            let mover = node.board.side_to_move();
            let child = Node::new(node.board.play_unchecked(sq), Some(mover));
            let child_id = self.nodes.len();
            self.nodes[id].children.push((sq, child_id));
            self.nodes.push(child);
            id = child_id;
            path.push(id);
        }

        let reward = rollout(&self.nodes[id].board, rng);
        self.backpropagate(&path, reward);
    }

    /// Same choice as [`uct_select`] without collecting the children; the
    /// log term is shared by all siblings.
    fn select_child(&self, node: &Node) -> NodeId {
        let total: u32 = node
            .children
            .iter()
            .map(|&(_, c)| self.nodes[c].visits)
            .sum();
        let log_total = (total as f64).ln();
        let mut best = node.children[0];
        let mut best_score = f64::NEG_INFINITY;
        for &(square, c) in &node.children {
            let child = &self.nodes[c];
            let n = child.visits as f64;
            let score = child.value / n + self.exploration * (log_total / n).sqrt();
            if score > best_score || (score == best_score && square < best.0) {
                best = (square, c);
                best_score = score;
            }
        }
        best.1
    }

    /// Adds one visit and the mover-signed reward to every node on `path`.
    pub fn backpropagate(&mut self, path: &[NodeId], reward: f64) {
        for &id in path {
            let node = &mut self.nodes[id];
            node.visits += 1;
            match node.mover {
                Some(Player::O) => node.value += reward,
                Some(Player::X) => node.value -= reward,
                None => {}
            }
        }
    }

    pub fn root_visits(&self) -> u32 {
        self.nodes[0].visits
    }

    /// `(square, visits, value)` for each expanded root child, by square.
    pub fn root_children(&self) -> Vec<(Square, u32, f64)> {
        let mut out: Vec<_> = self.nodes[0]
            .children
            .iter()
            .map(|&(s, c)| (s, self.nodes[c].visits, self.nodes[c].value))
            .collect();
        out.sort_by_key(|c| c.0);
        out
    }

    /// Most visited root child, lowest square on ties.
    pub fn best_move(&self) -> Option<Square> {
        self.root_children()
            .into_iter()
            .fold(None, |best: Option<(Square, u32)>, (s, n, _)| match best {
                Some((_, bn)) if bn >= n => best,
                _ => Some((s, n)),
            })
            .map(|b| b.0)
    }

    pub fn root_policy(&self) -> [f32; CELLS] {
        let mut pi = [0.0f32; CELLS];
        let total = self.root_children().iter().map(|c| c.1).sum::<u32>().max(1) as f32;
        for (s, n, _) in self.root_children() {
            pi[s.index()] = n as f32 / total;
        }
        pi
    }
}

/// Runs `cfg.iterations` passes from `b` and returns the most visited move.
pub fn search<R: Rng>(
    b: &Board,
    cfg: &MctsConfig,
    rng: &mut R,
) -> Result<(Square, SearchTree), AgentError> {
    if b.outcome().is_decided() {
        return Err(AgentError::NoLegalMove);
    }
    let mut tree = SearchTree::new(*b, cfg.exploration);
    for _ in 0..cfg.iterations.max(1) {
        tree.iterate(rng);
    }
    let best = tree
        .best_move()
        .expect("an undecided root always expands a child");
    Ok((best, tree))
}

pub struct MctsAgent {
    name: String,
    cfg: MctsConfig,
    rng: ChaCha8Rng,
    last_policy: Option<Vec<f32>>,
}

impl MctsAgent {
    pub fn new(cfg: MctsConfig) -> Self {
        MctsAgent {
            name: format!("mcts:{}", cfg.iterations),
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            last_policy: None,
        }
    }
}

impl Agent for MctsAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn select_move(&mut self, board: &Board) -> Result<Square, AgentError> {
        let (m, tree) = search(board, &self.cfg, &mut self.rng)?;
        self.last_policy = Some(tree.root_policy().to_vec());
        Ok(m)
    }

    fn last_policy(&self) -> Option<Vec<f32>> {
        self.last_policy.clone()
    }
}
