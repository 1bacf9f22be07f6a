//! Stochastic grid worlds.
//!
//! States are cell indices `y * width + x` with `(0, 0)` in the top-left
//! corner. Landing on a goal or a reset-penalty cell pays its reward; the next
//! step, whatever the action, returns the agent to the start cell.

mod scenario;

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;

use crate::belief::{MentorModel, ObserverModel};
use crate::error::{Error, Result};
use crate::mdp::MdpModel;

pub use scenario::{scenario, scenario_names, MentorSpec, Scenario, ScenarioDefaults};

/// Rewards for the reward-bearing map symbols.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellRewards {
    /// `X`
    pub goal: f64,
    /// `*`
    pub reset_penalty: f64,
    /// `R`
    pub river: f64,
    /// `I`
    pub island: f64,
}

impl Default for CellRewards {
    fn default() -> Self {
        Self {
            goal: 1.0,
            reset_penalty: -1.0,
            river: -0.2,
            island: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Empty,
    Obstacle,
    Start,
    Goal(f64),
    Penalty { reward: f64, reset: bool },
    Island(f64),
}

impl Cell {
    pub fn reward(self) -> f64 {
        match self {
            Cell::Goal(r) | Cell::Island(r) | Cell::Penalty { reward: r, .. } => r,
            Cell::Empty | Cell::Obstacle | Cell::Start => 0.0,
        }
    }

    /// Goal and reset-penalty cells send the agent back to the start.
    pub fn resets(self) -> bool {
        matches!(self, Cell::Goal(_) | Cell::Penalty { reset: true, .. })
    }

    pub fn symbol(self) -> char {
        match self {
            Cell::Empty => '.',
            Cell::Obstacle => '#',
            Cell::Start => 'S',
            Cell::Goal(_) => 'X',
            Cell::Penalty { reset: true, .. } => '*',
            Cell::Penalty { reset: false, .. } => 'R',
            Cell::Island(_) => 'I',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    start: usize,
}

impl GridMap {
    /// Parses the text map format: equal-length lines over `S X # * R I .`.
    /// Blank lines are ignored.
    pub fn parse(text: &str, rewards: &CellRewards) -> Result<Self> {
        let mut cells = Vec::new();
        let mut width = None;
        let mut height = 0;
        let mut start = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Map {
                line: lineno + 1,
                message,
            };
            let len = line.chars().count();
            match width {
                None => width = Some(len),
                Some(w) if w != len => {
                    return Err(err(format!("expected {w} columns, found {len}")));
                }
                _ => {}
            }
            for ch in line.chars() {
                let cell = match ch {
                    '.' => Cell::Empty,
                    '#' => Cell::Obstacle,
                    'S' => {
                        if start.is_some() {
                            return Err(err("more than one start cell".into()));
                        }
                        start = Some(cells.len());
                        Cell::Start
                    }
                    'X' => Cell::Goal(rewards.goal),
                    '*' => Cell::Penalty {
                        reward: rewards.reset_penalty,
                        reset: true,
                    },
                    'R' => Cell::Penalty {
                        reward: rewards.river,
                        reset: false,
                    },
                    'I' => Cell::Island(rewards.island),
                    other => return Err(err(format!("unknown map symbol {other:?}"))),
                };
                cells.push(cell);
            }
            height += 1;
        }
        let width = width.ok_or(Error::Map {
            line: 0,
            message: "empty map".into(),
        })?;
        let start = start.ok_or(Error::Map {
            line: 0,
            message: "no start cell".into(),
        })?;
        Ok(Self {
            width,
            height,
            cells,
            start,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn state_count(&self) -> usize {
        self.cells.len()
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn cell(&self, s: usize) -> Cell {
        self.cells[s]
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn coords(&self, s: usize) -> (usize, usize) {
        (s % self.width, s / self.width)
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn goals(&self) -> Vec<usize> {
        (0..self.cells.len())
            .filter(|&s| matches!(self.cells[s], Cell::Goal(_)))
            .collect()
    }

    pub fn obstacle_count(&self) -> usize {
        self.cells.iter().filter(|c| **c == Cell::Obstacle).count()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.reward()).collect()
    }

    /// The in-bounds cell displaced by `(dx, dy)` from `s`, if any.
    pub fn offset(&self, s: usize, dx: i32, dy: i32) -> Option<usize> {
        let (x, y) = self.coords(s);
        let nx = x as i64 + dx as i64;
        let ny = y as i64 + dy as i64;
        if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
            return None;
        }
        Some(self.index(nx as usize, ny as usize))
    }

    /// Where a move from `s` lands: off-grid and obstacle targets leave the
    /// agent in place.
    pub fn target(&self, s: usize, (dx, dy): (i32, i32)) -> usize {
        match self.offset(s, dx, dy) {
            Some(t) if self.cells[t] != Cell::Obstacle => t,
            _ => s,
        }
    }

    /// In-bounds cells among the 3x3 block centred on `s`.
    pub fn neighborhood(&self, s: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(9);
        for dy in -1..=1 {
            for dx in -1..=1 {
                if let Some(t) = self.offset(s, dx, dy) {
                    out.push(t);
                }
            }
        }
        out
    }

    /// Noise-free shortest path length in moves between two cells using
    /// `moves`, with goal and reset cells treated as ordinary cells.
    pub fn shortest_path(&self, from: usize, to: usize, moves: &[(i32, i32)]) -> Option<usize> {
        let dist = self.distances_from(from, moves);
        (dist[to] != usize::MAX).then_some(dist[to])
    }

    pub(crate) fn distances_from(&self, from: usize, moves: &[(i32, i32)]) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.cells.len()];
        dist[from] = 0;
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            for &m in moves {
                let t = self.target(u, m);
                if dist[t] == usize::MAX {
                    dist[t] = dist[u] + 1;
                    queue.push_back(t);
                }
            }
        }
        dist
    }
}

impl fmt::Display for GridMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.cells.chunks(self.width) {
            let line: String = row.iter().map(|c| c.symbol()).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSetKind {
    News,
    Skew,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSet {
    pub kind: ActionSetKind,
    pub moves: Vec<(i32, i32)>,
    pub labels: Vec<&'static str>,
}

impl ActionSet {
    /// North, East, West, South.
    pub fn news() -> Self {
        Self {
            kind: ActionSetKind::News,
            moves: vec![(0, -1), (1, 0), (-1, 0), (0, 1)],
            labels: vec!["N", "E", "W", "S"],
        }
    }

    /// North, South, North-East, South-West.
    pub fn skew() -> Self {
        Self {
            kind: ActionSetKind::Skew,
            moves: vec![(0, -1), (0, 1), (1, -1), (-1, 1)],
            labels: vec!["N", "S", "NE", "SW"],
        }
    }

    pub fn custom(moves: Vec<(i32, i32)>) -> Result<Self> {
        if moves.is_empty() || moves.len() > 8 {
            return Err(Error::usage(format!("{} moves; expected 1 to 8", moves.len())));
        }
        if moves.iter().any(|&(dx, dy)| dx.abs() > 1 || dy.abs() > 1) {
            return Err(Error::usage("move displacements must be within one cell per axis"));
        }
        let labels = vec!["?"; moves.len()];
        Ok(Self {
            kind: ActionSetKind::Custom,
            moves,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }
}

/// Probability `eta` that the intended move is replaced by one of the other
/// moves, chosen uniformly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub eta: f64,
}

impl NoiseModel {
    pub fn new(eta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&eta) {
            return Err(Error::usage(format!("noise {eta} not in [0, 1)")));
        }
        Ok(Self { eta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next: usize,
    pub reward: f64,
    /// The agent landed on a goal or reset cell; the next step returns it to
    /// the start.
    pub reset: bool,
    pub goal: bool,
}

/// A map together with the acting agent's moves and noise.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    pub map: GridMap,
    pub actions: ActionSet,
    pub noise: NoiseModel,
}

impl GridWorld {
    pub fn new(map: GridMap, actions: ActionSet, noise: NoiseModel) -> Self {
        Self {
            map,
            actions,
            noise,
        }
    }

    pub fn state_count(&self) -> usize {
        self.map.state_count()
    }

    pub fn action_count(&self) -> usize {
        self.actions.len()
    }

    pub fn start(&self) -> usize {
        self.map.start()
    }

    fn realized_action(&self, a: usize, rng: &mut impl Rng) -> usize {
        let n = self.actions.len();
        if n > 1 && self.noise.eta > 0.0 && rng.gen::<f64>() < self.noise.eta {
            let other = rng.gen_range(0..n - 1);
            if other >= a {
                other + 1
            } else {
                other
            }
        } else {
            a
        }
    }

    /// Samples one transition.
    pub fn step(&self, s: usize, a: usize, rng: &mut impl Rng) -> StepOutcome {
        debug_assert!(self.map.cell(s) != Cell::Obstacle, "agent inside an obstacle");
        let next = if self.map.cell(s).resets() {
            self.map.start()
        } else {
            let realized = self.realized_action(a, rng);
            self.map.target(s, self.actions.moves[realized])
        };
        let cell = self.map.cell(next);
        StepOutcome {
            next,
            reward: cell.reward(),
            reset: cell.resets(),
            goal: matches!(cell, Cell::Goal(_)),
        }
    }

    /// Exact successor distribution of `(s, a)`; colliding outcomes merge.
    pub fn transition_row(&self, s: usize, a: usize) -> Vec<(usize, f64)> {
        if self.map.cell(s).resets() {
            return vec![(self.map.start(), 1.0)];
        }
        let n = self.actions.len();
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(n);
        for (b, &mv) in self.actions.moves.iter().enumerate() {
            let p = if n == 1 {
                1.0
            } else if b == a {
                1.0 - self.noise.eta
            } else {
                self.noise.eta / (n - 1) as f64
            };
            if p == 0.0 {
                continue;
            }
            let t = self.map.target(s, mv);
            match row.iter_mut().find(|(u, _)| *u == t) {
                Some(slot) => slot.1 += p,
                None => row.push((t, p)),
            }
        }
        row
    }

    /// The exact MDP realizing [`GridWorld::step`].
    pub fn true_model(&self, gamma: f64) -> Result<MdpModel> {
        let rows = (0..self.state_count())
            .flat_map(|s| (0..self.action_count()).map(move |a| (s, a)))
            .map(|(s, a)| self.transition_row(s, a))
            .collect();
        MdpModel::new(
            self.state_count(),
            self.action_count(),
            rows,
            self.map.rewards(),
            gamma,
        )
    }

    /// Uniform Dirichlet prior over each cell's 3x3 neighbourhood for every
    /// observer action.
    pub fn observer_prior(&self, pseudo_count: f64) -> ObserverModel {
        let mut model = ObserverModel::new(self.state_count(), self.action_count());
        for s in 0..self.state_count() {
            for t in self.map.neighborhood(s) {
                for a in 0..self.action_count() {
                    model.add_prior(s, a, t, pseudo_count);
                }
            }
        }
        model
    }

    /// Uniform Dirichlet prior over each cell's 3x3 neighbourhood for a
    /// mentor's chain.
    pub fn mentor_prior(&self, pseudo_count: f64) -> MentorModel {
        let mut model = MentorModel::new(self.state_count());
        if pseudo_count > 0.0 {
            for s in 0..self.state_count() {
                for t in self.map.neighborhood(s) {
                    model.add_prior(s, t, pseudo_count);
                }
            }
        }
        model
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn world(text: &str, eta: f64) -> GridWorld {
        GridWorld::new(
            GridMap::parse(text, &CellRewards::default()).unwrap(),
            ActionSet::news(),
            NoiseModel::new(eta).unwrap(),
        )
    }

    #[test]
    fn parse_and_display_round_trip() {
        let text = "S.#\n.*R\nI.X\n";
        let map = GridMap::parse(text, &CellRewards::default()).unwrap();
        assert_eq!(map.to_string(), text);
        assert_eq!((map.width(), map.height(), map.start()), (3, 3, 0));
        assert_eq!(map.goals(), vec![8]);
        assert_eq!(map.cell(5).reward(), -0.2);
    }

    #[test]
    fn parse_errors() {
        let r = CellRewards::default();
        assert!(matches!(GridMap::parse("S..\n..", &r), Err(Error::Map { line: 2, .. })));
        assert!(GridMap::parse("...\n...", &r).is_err());
        assert!(GridMap::parse("S.S", &r).is_err());
        assert!(GridMap::parse("S.?", &r).is_err());
    }

    #[test]
    fn deterministic_moves_and_walls() {
        let w = world("S..\n.#.\n..X", 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(w.step(0, 1, &mut rng).next, 1);
        // East from (0, 1) hits the obstacle.
        assert_eq!(w.step(3, 1, &mut rng).next, 3);
        // North from the top row stays put.
        assert_eq!(w.step(1, 0, &mut rng).next, 1);
        let out = w.step(5, 3, &mut rng);
        assert_eq!((out.next, out.reward, out.goal, out.reset), (8, 1.0, true, true));
        assert_eq!(w.step(8, 0, &mut rng).next, 0);
    }

    #[test]
    fn shortcut_cells_send_agent_home() {
        let w = world("S.*.X", 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = w.step(1, 1, &mut rng);
        assert_eq!((out.next, out.reward, out.reset, out.goal), (2, -1.0, true, false));
        let home = w.step(2, 1, &mut rng);
        assert_eq!((home.next, home.reward, home.reset), (0, 0.0, false));
    }

    #[test]
    fn true_model_rows() {
        let w = world("S...\n....\n....\n...X", 0.0);
        let m = w.true_model(0.9).unwrap();
        for s in 0..16 {
            for a in 0..4 {
                assert_eq!(m.row(s, a).len(), 1);
            }
        }
        let w = world("S...\n....\n....\n...X", 0.1);
        let m = w.true_model(0.9).unwrap();
        // (1, 1) heading east: intended 0.9, each other direction 0.1 / 3.
        let s = 5;
        assert_abs_diff_eq!(m.probability(s, 1, 6), 0.9, epsilon = 1e-12);
        for t in [1, 4, 9] {
            assert_abs_diff_eq!(m.probability(s, 1, t), 0.1 / 3.0, epsilon = 1e-12);
        }
        // Top-left corner: north and west both bounce back to the corner.
        assert_abs_diff_eq!(m.probability(0, 1, 0), 0.2 / 3.0, epsilon = 1e-12);
        assert_eq!(m.row(15, 2), &[(0, 1.0)]);
    }

    #[test]
    fn priors_cover_neighbourhoods() {
        let w = world("S..\n...\n..X", 0.1);
        let o = w.observer_prior(1.0);
        assert_eq!(o.successors(4, 0).len(), 9);
        assert_eq!(o.successors(0, 3).len(), 4);
        assert_abs_diff_eq!(o.expected_prob(0, 3, 4).unwrap(), 0.25, epsilon = 1e-15);
        let m = w.mentor_prior(1.0);
        assert_eq!(m.successors(1).len(), 6);
        assert!(!w.mentor_prior(0.0).has_data(1));
    }

    #[test]
    fn noise_frequencies_match_model() {
        let w = world("S....\n.....\n..#..\n.....\n....X", 0.4);
        let m = w.true_model(0.9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let s = w.map.index(2, 1);
        let n = 100_000;
        let mut counts = vec![0usize; w.state_count()];
        for _ in 0..n {
            counts[w.step(s, 3, &mut rng).next] += 1;
        }
        for (t, &c) in counts.iter().enumerate() {
            assert!((c as f64 / n as f64 - m.probability(s, 3, t)).abs() < 0.01);
        }
        assert_eq!(counts[w.map.index(2, 2)], 0);
    }

    #[test]
    fn custom_action_validation() {
        assert!(ActionSet::custom(vec![]).is_err());
        assert!(ActionSet::custom(vec![(2, 0)]).is_err());
        assert_eq!(ActionSet::custom(vec![(1, 1)]).unwrap().len(), 1);
    }
}
