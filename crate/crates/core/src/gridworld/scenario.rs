//! Named experiment scenarios.
//!
//! Every scenario pairs the observer's world with one world per mentor. All
//! worlds share one grid size, so states mean the same cell everywhere, but
//! each agent has its own start, goal, obstacles and action set.

use super::{ActionSet, CellRewards, GridMap, GridWorld, NoiseModel};
use crate::error::{Error, Result};

/// A mentor's private world. Its policy is derived by solving this world.
#[derive(Debug, Clone, PartialEq)]
pub struct MentorSpec {
    pub world: GridWorld,
}

/// Per-scenario experiment defaults, overridable from the CLI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioDefaults {
    pub gamma: f64,
    pub steps: usize,
    pub runs: usize,
    pub window: usize,
    pub epsilon0: f64,
    pub epsilon_decay: f64,
    pub mentor_epsilon: f64,
    pub c: f64,
    /// Extra prioritized backups per sample.
    pub backups: usize,
    pub feasibility: bool,
    pub repair: bool,
    pub k: usize,
    pub n_attempts: u32,
    pub alpha: f64,
    pub prior: f64,
}

impl Default for ScenarioDefaults {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            steps: 50_000,
            runs: 10,
            window: 1000,
            epsilon0: 1.0,
            epsilon_decay: 0.9996,
            mentor_epsilon: 0.01,
            c: 0.0,
            backups: 18,
            feasibility: false,
            repair: false,
            k: 3,
            n_attempts: 20,
            alpha: 0.05,
            prior: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub observer: GridWorld,
    pub mentors: Vec<MentorSpec>,
    pub defaults: ScenarioDefaults,
}

impl Scenario {
    pub fn gamma(&self) -> f64 {
        self.defaults.gamma
    }
}

const NAMES: &[&str] = &[
    "exp1_basic",
    "exp2_scale",
    "exp2_stoch",
    "exp3_islands",
    "exp4_maze",
    "exp5_shortcut",
    "exp6_two_mentors",
    "het1_skew",
    "het2_obstacles",
    "het3_parallel",
    "river",
    "fracture_a",
    "fracture_b",
    "fracture_c",
    "fracture_d",
];

pub fn scenario_names() -> &'static [&'static str] {
    NAMES
}

fn map(text: &str, rewards: &CellRewards) -> Result<GridMap> {
    GridMap::parse(text, rewards)
}

fn world(text: &str, rewards: &CellRewards, actions: ActionSet, eta: f64) -> Result<GridWorld> {
    Ok(GridWorld::new(map(text, rewards)?, actions, NoiseModel::new(eta)?))
}

fn mentor(text: &str, rewards: &CellRewards, actions: ActionSet, eta: f64) -> Result<MentorSpec> {
    Ok(MentorSpec {
        world: world(text, rewards, actions, eta)?,
    })
}

fn check(cond: bool, name: &str, what: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("scenario {name}: {}", what())))
    }
}

fn corners(name: &str, m: &GridMap) -> Result<()> {
    let far = m.index(m.width() - 1, m.height() - 1);
    check(m.start() == 0 && m.goals() == [far], name, || {
        "start and goal must sit in opposite corners".into()
    })
}

const EXP1: &str = include_str!("../../maps/exp1_basic.map");
const EXP2_SCALE: &str = include_str!("../../maps/exp2_scale.map");
const EXP3: &str = include_str!("../../maps/exp3_islands.map");
const EXP4: &str = include_str!("../../maps/exp4_maze.map");
const EXP5: &str = include_str!("../../maps/exp5_shortcut.map");
const EXP5_MENTOR: &str = include_str!("../../maps/exp5_shortcut_mentor.map");
const EXP6: &str = include_str!("../../maps/exp6_two_mentors.map");
const EXP6_A: &str = include_str!("../../maps/exp6_mentor_a.map");
const EXP6_B: &str = include_str!("../../maps/exp6_mentor_b.map");
const HET2: &str = include_str!("../../maps/het2_obstacles.map");
const HET3: &str = include_str!("../../maps/het3_parallel.map");
const RIVER: &str = include_str!("../../maps/river.map");
const RIVER_MENTOR: &str = include_str!("../../maps/river_mentor.map");
const FRACTURE: [(&str, &str); 4] = [
    (
        include_str!("../../maps/fracture_a.map"),
        include_str!("../../maps/fracture_a_mentor.map"),
    ),
    (
        include_str!("../../maps/fracture_b.map"),
        include_str!("../../maps/fracture_b_mentor.map"),
    ),
    (
        include_str!("../../maps/fracture_c.map"),
        include_str!("../../maps/fracture_c_mentor.map"),
    ),
    (
        include_str!("../../maps/fracture_d.map"),
        include_str!("../../maps/fracture_d_mentor.map"),
    ),
];

/// Obstacles in the maze.
pub const MAZE_OBSTACLES: usize = 286;
/// Moves on the maze's noise-free solution path; the path visits one more
/// cell than this.
pub const MAZE_PATH_MOVES: usize = 132;

/// Builds the named scenario, validating its maps.
pub fn scenario(name: &str) -> Result<Scenario> {
    let rewards = CellRewards::default();
    let news = ActionSet::news;
    let d = ScenarioDefaults::default();
    let (observer, mentors, defaults) = match name {
        "exp1_basic" | "exp2_scale" | "exp2_stoch" => {
            let (text, eta, backups) = match name {
                "exp1_basic" => (EXP1, 0.1, 18),
                "exp2_scale" => (EXP2_SCALE, 0.1, 24),
                _ => (EXP1, 0.4, 18),
            };
            let obs = world(text, &rewards, news(), eta)?;
            corners(name, &obs.map)?;
            let m = mentor(text, &rewards, news(), eta)?;
            (obs, vec![m], ScenarioDefaults { backups, epsilon_decay: 0.9998, ..d })
        }
        "exp3_islands" => {
            let obs = world(EXP3, &rewards, news(), 0.1)?;
            corners(name, &obs.map)?;
            let islands = obs.map.cells().iter().filter(|c| matches!(c, super::Cell::Island(_))).count();
            check(islands == 4, name, || format!("{islands} islands, expected 4"))?;
            let m = mentor(EXP3, &rewards, news(), 0.1)?;
            (obs, vec![m], ScenarioDefaults { c: 5.0, ..d })
        }
        "exp4_maze" => {
            let obs = world(EXP4, &rewards, news(), 0.1)?;
            corners(name, &obs.map)?;
            let n = obs.map.obstacle_count();
            check(n == MAZE_OBSTACLES, name, || format!("{n} obstacles"))?;
            let path = obs.map.shortest_path(obs.map.start(), obs.map.goals()[0], &obs.actions.moves);
            check(path == Some(MAZE_PATH_MOVES), name, || format!("solution path {path:?}"))?;
            let m = mentor(EXP4, &rewards, news(), 0.1)?;
            let defaults = ScenarioDefaults {
                gamma: 0.98,
                steps: 250_000,
                c: 5.0,
                backups: MAZE_PATH_MOVES + 1,
                epsilon_decay: 0.9999,
                ..d
            };
            (obs, vec![m], defaults)
        }
        "exp5_shortcut" => {
            let rewards = CellRewards {
                reset_penalty: 0.0,
                ..rewards
            };
            let obs = world(EXP5, &rewards, news(), 0.1)?;
            let m = mentor(EXP5_MENTOR, &rewards, news(), 0.1)?;
            (obs, vec![m], ScenarioDefaults { c: 5.0, backups: 30, ..d })
        }
        "exp6_two_mentors" => {
            let obs = world(EXP6, &rewards, news(), 0.1)?;
            corners(name, &obs.map)?;
            let a = mentor(EXP6_A, &rewards, news(), 0.1)?;
            let b = mentor(EXP6_B, &rewards, news(), 0.1)?;
            (obs, vec![a, b], ScenarioDefaults { c: 5.0, backups: 28, ..d })
        }
        "het1_skew" => {
            let obs = world(EXP1, &rewards, ActionSet::skew(), 0.05)?;
            corners(name, &obs.map)?;
            let m = mentor(EXP1, &rewards, news(), 0.05)?;
            let defaults = ScenarioDefaults {
                steps: 100_000,
                backups: 27,
                c: 5.0,
                epsilon_decay: 0.99995,
                feasibility: true,
                repair: true,
                ..d
            };
            (obs, vec![m], defaults)
        }
        "het2_obstacles" | "het3_parallel" => {
            let text = if name == "het2_obstacles" { HET2 } else { HET3 };
            let obs = world(text, &rewards, news(), 0.05)?;
            corners(name, &obs.map)?;
            let m = mentor(EXP1, &rewards, news(), 0.05)?;
            let defaults = ScenarioDefaults {
                feasibility: true,
                repair: true,
                ..d
            };
            (obs, vec![m], defaults)
        }
        "river" => {
            let obs = world(RIVER, &rewards, ActionSet::skew(), 0.05)?;
            let river = obs.map.cells().iter().filter(|c| c.reward() == rewards.river).count();
            check(river > 0 && obs.map.goals().len() == 1, name, || "river map needs river cells and one goal".into())?;
            let m = mentor(RIVER_MENTOR, &rewards, news(), 0.05)?;
            let defaults = ScenarioDefaults {
                gamma: 0.99,
                steps: 20_000,
                backups: 22,
                feasibility: true,
                repair: true,
                ..d
            };
            (obs, vec![m], defaults)
        }
        "fracture_a" | "fracture_b" | "fracture_c" | "fracture_d" => {
            let idx = (name.as_bytes()[9] - b'a') as usize;
            let (obs_text, mentor_text) = FRACTURE[idx];
            let rewards = FRACTURE_REWARDS;
            let obs = world(obs_text, &rewards, news(), FRACTURE_NOISE)?;
            let m = mentor(mentor_text, &rewards, news(), FRACTURE_NOISE)?;
            check(obs.map.width() == m.world.map.width() && obs.map.height() == m.world.map.height(), name, || {
                "mentor map size differs".into()
            })?;
            let defaults = ScenarioDefaults {
                steps: FRACTURE_STEPS,
                epsilon0: 0.05,
                epsilon_decay: 1.0,
                backups: 40,
                ..d
            };
            (obs, vec![m], defaults)
        }
        other => return Err(Error::UnknownScenario(other.to_string())),
    };
    for m in &mentors {
        check(
            m.world.map.width() == observer.map.width() && m.world.map.height() == observer.map.height(),
            name,
            || "mentor map size differs".into(),
        )?;
    }
    Ok(Scenario {
        name: name.to_string(),
        observer,
        mentors,
        defaults,
    })
}

/// Penalties on the loop arcs that each agent should avoid.
pub const FRACTURE_REWARDS: CellRewards = CellRewards {
    goal: 1.0,
    reset_penalty: -1.0,
    river: -0.5,
    island: 5.0,
};
pub const FRACTURE_NOISE: f64 = 0.05;
pub const FRACTURE_STEPS: usize = 20_000;
