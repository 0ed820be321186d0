//! Prior-guided tree search (PUCT) over a policy/value evaluator.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::board::{Board, Player, Square, CELLS};
use crate::nn::{Network, NnError};
use crate::AgentError;

/// Source of move priors and position values. Priors are over the 49
/// squares, zero on illegal ones; the value is from the perspective of the
/// side to move.
pub trait Evaluator: Sync {
    fn evaluate(&self, board: &Board) -> Result<([f32; CELLS], f32), NnError>;
}

impl Evaluator for Network<f32> {
    fn evaluate(&self, board: &Board) -> Result<([f32; CELLS], f32), NnError> {
        let (p, v) = self.evaluate_boards(std::slice::from_ref(board))?.remove(0);
        Ok((p.try_into().expect("49 policy entries"), v))
    }
}

/// Equal priors over legal moves and value 0.
pub struct UniformEvaluator;

impl Evaluator for UniformEvaluator {
    fn evaluate(&self, board: &Board) -> Result<([f32; CELLS], f32), NnError> {
        let legal = board.legal_bits();
        let n = legal.count_ones() as f32;
        Ok((
            std::array::from_fn(|i| if legal >> i & 1 == 1 { 1.0 / n } else { 0.0 }),
            0.0,
        ))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AzSearchConfig {
    /// Simulations per move; 0 plays the raw policy argmax.
    pub simulations: u32,
    pub c_puct: f64,
    pub dirichlet_alpha: f64,
    pub dirichlet_epsilon: f64,
    /// Moves made before this ply are sampled from the visit distribution.
    pub temperature_moves: u32,
    /// Root prior noise; used only in self-play.
    pub noise: bool,
}

impl Default for AzSearchConfig {
    fn default() -> Self {
        AzSearchConfig {
            simulations: 100,
            c_puct: 1.0,
            dirichlet_alpha: 0.2,
            dirichlet_epsilon: 0.25,
            temperature_moves: 10,
            noise: false,
        }
    }
}

impl AzSearchConfig {
    pub fn with_simulations(simulations: u32) -> Self {
        AzSearchConfig {
            simulations,
            ..Self::default()
        }
    }
}

type NodeId = usize;

#[derive(Clone, Debug)]
struct Node {
    board: Board,
    mv: Option<Square>,
    prior: f32,
    visits: u32,
    /// Sum of values from the perspective of the player who moved into
    /// this node.
    value_sum: f64,
    children: Vec<NodeId>,
    expanded: bool,
}

impl Node {
    fn q(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.value_sum / self.visits as f64
        }
    }
}

/// `Q + c * P * sqrt(N_parent) / (1 + N_child)`.
pub fn puct_score(q: f64, prior: f64, parent_visits: u32, child_visits: u32, c_puct: f64) -> f64 {
    q + c_puct * prior * (parent_visits as f64).sqrt() / (1.0 + child_visits as f64)
}

/// A search tree rooted at one position.
#[derive(Clone, Debug)]
pub struct PuctTree {
    nodes: Vec<Node>,
    c_puct: f64,
}

/// Value of a decided board for the player who made the last move.
fn terminal_value(b: &Board) -> f64 {
    let last_mover = b.side_to_move().opponent();
    match b.outcome().winner() {
        Some(p) if p == last_mover => 1.0,
        Some(_) => -1.0,
        None => unreachable!("terminal_value on an undecided board"),
    }
}

impl PuctTree {
    /// Creates the tree and expands the root, counting that as its first
    /// visit.
    pub fn new<E: Evaluator + ?Sized>(
        root: Board,
        eval: &E,
        c_puct: f64,
    ) -> Result<PuctTree, AgentError> {
        if root.outcome().is_decided() {
            return Err(AgentError::NoLegalMove);
        }
        let mut tree = PuctTree {
            nodes: vec![Node {
                board: root,
                mv: None,
                prior: 1.0,
                visits: 0,
                value_sum: 0.0,
                children: Vec::new(),
                expanded: false,
            }],
            c_puct,
        };
        let v = tree.expand(0, eval)?;
        // the root has no mover; only its visit count matters
        tree.nodes[0].visits = 1;
        tree.nodes[0].value_sum = -v;
        Ok(tree)
    }

    /// Expands `id` with evaluator priors and returns its value for the
    /// side to move there.
    fn expand<E: Evaluator + ?Sized>(&mut self, id: NodeId, eval: &E) -> Result<f64, AgentError> {
        let board = self.nodes[id].board;
        let (priors, v) = eval.evaluate(&board)?;
        for m in board.legal_moves() {
            let child = Node {
                board: board.apply_move(m).expect("legal move"),
                mv: Some(m),
                prior: priors[m.index()],
                visits: 0,
                value_sum: 0.0,
                children: Vec::new(),
                expanded: false,
            };
            self.nodes.push(child);
            let cid = self.nodes.len() - 1;
            self.nodes[id].children.push(cid);
        }
        self.nodes[id].expanded = true;
        Ok(v as f64)
    }

    /// Mixes `(1 - eps) * P + eps * Dir(alpha)` into the root priors.
    pub fn add_root_noise<R: Rng>(&mut self, alpha: f64, epsilon: f64, rng: &mut R) {
        let gamma = Gamma::new(alpha, 1.0).expect("positive concentration");
        let children = self.nodes[0].children.clone();
        let draws: Vec<f64> = children.iter().map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if !(total > 0.0) {
            return;
        }
        for (&c, d) in children.iter().zip(draws) {
            let p = self.nodes[c].prior as f64;
            self.nodes[c].prior = ((1.0 - epsilon) * p + epsilon * d / total) as f32;
        }
    }

    fn select_child(&self, id: NodeId) -> NodeId {
        let parent = &self.nodes[id];
        let mut best = parent.children[0];
        let mut best_score = f64::NEG_INFINITY;
        for &c in &parent.children {
            let n = &self.nodes[c];
            let s = puct_score(n.q(), n.prior as f64, parent.visits, n.visits, self.c_puct);
            if s > best_score {
                best_score = s;
                best = c;
            }
        }
        best
    }

    /// One simulation: descend, evaluate the leaf, back up.
    pub fn simulate<E: Evaluator + ?Sized>(&mut self, eval: &E) -> Result<(), AgentError> {
        let mut path = vec![0];
        let mut id = 0;
        while self.nodes[id].expanded && !self.nodes[id].children.is_empty() {
            id = self.select_child(id);
            path.push(id);
        }
        let board = self.nodes[id].board;
        // value for the player who moved into the leaf
        let mut value = if board.outcome().is_decided() {
            terminal_value(&board)
        } else {
            -self.expand(id, eval)?
        };
        for &n in path.iter().rev() {
            let node = &mut self.nodes[n];
            node.visits += 1;
            node.value_sum += value;
            value = -value;
        }
        Ok(())
    }

    pub fn root_visits(&self) -> u32 {
        self.nodes[0].visits
    }

    /// `(move, visits, q, prior)` for each root child in square order.
    pub fn root_children(&self) -> Vec<(Square, u32, f64, f32)> {
        self.nodes[0]
            .children
            .iter()
            .map(|&c| {
                let n = &self.nodes[c];
                (n.mv.expect("child has a move"), n.visits, n.q(), n.prior)
            })
            .collect()
    }

    /// Root visit counts normalized to a distribution over the 49 squares.
    pub fn visit_distribution(&self) -> [f32; CELLS] {
        let children = self.root_children();
        let total: u32 = children.iter().map(|c| c.1).sum();
        let mut pi = [0.0f32; CELLS];
        for (m, n, _, _) in children {
            pi[m.index()] = if total == 0 {
                0.0
            } else {
                n as f32 / total as f32
            };
        }
        pi
    }

    /// Most visited root child, lowest square on ties.
    pub fn most_visited(&self) -> Square {
        let mut best: Option<(Square, u32)> = None;
        for (m, n, _, _) in self.root_children() {
            if best.is_none_or(|(_, bn)| n > bn) {
                best = Some((m, n));
            }
        }
        best.expect("an expanded root has children").0
    }

    /// Checks visit and value bookkeeping across the whole tree.
    #[cfg(test)]
    fn check_invariants(&self) {
        for (i, n) in self.nodes.iter().enumerate() {
            assert!(n.value_sum.abs() <= n.visits as f64 + 1e-9);
            if n.expanded && !n.children.is_empty() {
                let child_visits: u32 = n.children.iter().map(|&c| self.nodes[c].visits).sum();
                assert_eq!(child_visits + 1, n.visits, "node {i}");
                let prior_sum: f32 = n.children.iter().map(|&c| self.nodes[c].prior).sum();
                assert!(
                    (prior_sum - 1.0).abs() < 1e-4,
                    "node {i}: priors sum to {prior_sum}"
                );
            }
        }
    }
}

/// Runs a full search from `b` and returns the tree.
pub fn puct_search<E: Evaluator + ?Sized, R: Rng>(
    b: &Board,
    eval: &E,
    cfg: &AzSearchConfig,
    rng: &mut R,
) -> Result<PuctTree, AgentError> {
    let mut tree = PuctTree::new(*b, eval, cfg.c_puct)?;
    if cfg.noise {
        tree.add_root_noise(cfg.dirichlet_alpha, cfg.dirichlet_epsilon, rng);
    }
    for _ in 0..cfg.simulations {
        tree.simulate(eval)?;
    }
    Ok(tree)
}

/// Index of the largest entry, lowest index on ties.
fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Draws an index with probability proportional to `weights`.
fn sample_index<R: Rng>(weights: &[f32], rng: &mut R) -> usize {
    let total: f64 = weights.iter().map(|&w| w as f64).sum();
    let mut r = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last = i;
        if r < w as f64 {
            return i;
        }
        r -= w as f64;
    }
    last
}

/// Chooses a move for ply `move_number` (0-based) and returns it with the
/// search distribution behind it. With zero simulations the distribution is
/// the masked network policy and the move is its argmax.
pub fn az_select_move<E: Evaluator + ?Sized, R: Rng>(
    b: &Board,
    eval: &E,
    cfg: &AzSearchConfig,
    move_number: usize,
    rng: &mut R,
) -> Result<(Square, [f32; CELLS]), AgentError> {
    if b.outcome().is_decided() {
        return Err(AgentError::NoLegalMove);
    }
    if cfg.simulations == 0 {
        let (p, _) = eval.evaluate(b)?;
        let legal = b.legal_bits();
        // a degenerate all-zero policy still has to yield a legal move
        let masked: Vec<f32> = (0..CELLS)
            .map(|i| {
                if legal >> i & 1 == 1 {
                    p[i].max(f32::MIN_POSITIVE)
                } else {
                    0.0
                }
            })
            .collect();
        let idx = argmax(&masked);
        return Ok((Square::new(idx).expect("valid index"), p));
    }
    let tree = puct_search(b, eval, cfg, rng)?;
    let pi = tree.visit_distribution();
    let mv = if move_number < cfg.temperature_moves as usize {
        Square::new(sample_index(&pi, rng)).expect("valid index")
    } else {
        tree.most_visited()
    };
    Ok((mv, pi))
}

/// Final score of `b` for `player`: +1 win, -1 loss, 0 while undecided.
pub fn outcome_for(b: &Board, player: Player) -> f32 {
    match b.outcome().winner() {
        Some(p) if p == player => 1.0,
        Some(_) => -1.0,
        None => 0.0,
    }
}
