//! Experiment engine: paired observer/control runs, seeding, averaging and
//! CSV output.
//!
//! # Seeding
//!
//! Every random stream is a ChaCha8 generator seeded from a SplitMix64 mix of
//! `(seed, run)` and selected by stream number: the observer's environment
//! and policy, the control's environment and policy, and one stream per
//! mentor. Both agents of a run watch the same mentor trajectories.
//!
//! # Output
//!
//! The series CSV has the header `step,obs_mean,ctrl_mean,delta`, optionally
//! followed by `obs_r<i>` and `ctrl_r<i>` columns, one row every `every`
//! steps. The summary CSV holds a single data row: convergence steps (first
//! step from which the mean curve stays at or above 80% of the optimal rate,
//! empty if never), final mean rates, the optimal rate and the fracture of
//! the observer against the first mentor.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::backup::ConfidenceParams;
use crate::error::{Error, Result};
use crate::feasibility::FeasibilityParams;
use crate::gridworld::{scenario, GridWorld, Scenario};
use crate::learner::{Learner, LearnerConfig, LearnerStats};
use crate::mdp::Policy;
use crate::metrics::{
    convergence_step, delta_curve, fracture, goal_rate_series, mean_series, optimal_goal_rate, solve_world,
};

/// Fraction of the optimal rate that counts as converged.
pub const CONVERGENCE_FRACTION: f64 = 0.8;

const STREAM_OBSERVER_ENV: u64 = 0;
const STREAM_OBSERVER_POLICY: u64 = 1;
const STREAM_CONTROL_ENV: u64 = 2;
const STREAM_CONTROL_POLICY: u64 = 3;
const STREAM_MENTOR: u64 = 16;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// The generator for `stream` of run `run`.
pub fn stream_rng(seed: u64, run: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(run as u64)));
    rng.set_stream(stream);
    rng
}

/// A mentor acting ε-greedily on the optimal policy of its own world.
#[derive(Debug, Clone)]
pub struct Mentor {
    pub world: GridWorld,
    pub policy: Policy,
    pub epsilon: f64,
    state: usize,
}

impl Mentor {
    pub fn state(&self) -> usize {
        self.state
    }

    /// Acts once; returns the observed transition.
    pub fn step(&mut self, rng: &mut impl Rng) -> (usize, usize) {
        let s = self.state;
        let a = if self.epsilon > 0.0 && rng.gen::<f64>() < self.epsilon {
            rng.gen_range(0..self.world.action_count())
        } else {
            self.policy.action(s)
        };
        let t = self.world.step(s, a, rng).next;
        self.state = t;
        (s, t)
    }
}

/// Solves the mentor's world and wraps the optimal policy.
pub fn make_mentor(world: &GridWorld, gamma: f64, epsilon: f64) -> Result<Mentor> {
    let (_, _, policy) = solve_world(world, gamma)?;
    Ok(Mentor {
        world: world.clone(),
        policy,
        epsilon,
        state: world.start(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub runs: usize,
    pub steps: usize,
    pub seed: u64,
    pub window: usize,
    /// Series CSV row interval.
    pub every: usize,
    pub per_run: bool,
    pub out: Option<PathBuf>,
    pub gamma: f64,
    pub mentor_epsilon: f64,
    pub epsilon0: f64,
    pub epsilon_decay: f64,
    pub c: f64,
    pub alpha: f64,
    pub k: usize,
    pub n: u32,
    pub backups: usize,
    pub prior: f64,
    pub imitation: bool,
    pub feasibility: bool,
    pub repair: bool,
    /// Mentor indices to use; all when `None`.
    pub mentors: Option<Vec<usize>>,
    /// Skip the control agent.
    pub observer_only: bool,
}

impl ExperimentConfig {
    /// The scenario's defaults.
    pub fn for_scenario(name: &str) -> Result<Self> {
        let d = scenario(name)?.defaults;
        Ok(Self {
            scenario: name.to_string(),
            runs: d.runs,
            steps: d.steps,
            seed: 1,
            window: d.window,
            every: 100,
            per_run: false,
            out: None,
            gamma: d.gamma,
            mentor_epsilon: d.mentor_epsilon,
            epsilon0: d.epsilon0,
            epsilon_decay: d.epsilon_decay,
            c: d.c,
            alpha: d.alpha,
            k: d.k,
            n: d.n_attempts,
            backups: d.backups,
            prior: d.prior,
            imitation: true,
            feasibility: d.feasibility,
            repair: d.repair,
            mentors: None,
            observer_only: false,
        })
    }

    /// Sets one option from its `key=value` spelling. Keys match the long
    /// CLI flags without dashes; `no-imitation` style keys take `true` or
    /// `false`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::usage(format!("bad value {value:?} for {key}")))
        }
        match key {
            "scenario" => {
                let keep = self.clone();
                *self = Self::for_scenario(value)?;
                self.seed = keep.seed;
                self.out = keep.out;
            }
            "runs" => self.runs = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "window" => self.window = parse(key, value)?,
            "every" => self.every = parse(key, value)?,
            "per-run" => self.per_run = parse(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "gamma" => self.gamma = parse(key, value)?,
            "mentor-epsilon" => self.mentor_epsilon = parse(key, value)?,
            "epsilon" => self.epsilon0 = parse(key, value)?,
            "decay" => self.epsilon_decay = parse(key, value)?,
            "c" => self.c = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "n" => self.n = parse(key, value)?,
            "backups" => self.backups = parse(key, value)?,
            "prior" => self.prior = parse(key, value)?,
            "no-imitation" => self.imitation = !parse::<bool>(key, value)?,
            "no-feasibility" => self.feasibility = !parse::<bool>(key, value)?,
            "no-repair" => self.repair = !parse::<bool>(key, value)?,
            "feasibility" => self.feasibility = parse(key, value)?,
            "repair" => self.repair = parse(key, value)?,
            "mentors" => self.mentors = Some(parse_mentor_list(value)?),
            "observer-only" => self.observer_only = parse(key, value)?,
            other => return Err(Error::usage(format!("unknown option {other:?}"))),
        }
        Ok(())
    }

    pub fn learner_config(&self) -> LearnerConfig {
        LearnerConfig {
            gamma: self.gamma,
            backups: self.backups,
            epsilon0: self.epsilon0,
            epsilon_decay: self.epsilon_decay,
            confidence: ConfidenceParams::new(self.c),
            feasibility: FeasibilityParams {
                alpha: self.alpha,
                k: self.k,
                n_attempts: self.n,
                ..FeasibilityParams::default()
            },
            imitation: self.imitation,
            feasibility_enabled: self.imitation && self.feasibility,
            repair: self.imitation && self.feasibility && self.repair,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 || self.window == 0 || self.every == 0 {
            return Err(Error::usage("runs, window and every must be positive"));
        }
        if !(0.0..=1.0).contains(&self.mentor_epsilon) {
            return Err(Error::usage("mentor epsilon must lie in [0, 1]"));
        }
        if !(self.prior > 0.0 && self.prior.is_finite()) {
            return Err(Error::usage("prior pseudo-count must be positive"));
        }
        self.learner_config().validate()
    }
}

/// `"0,2"` or `"none"`.
pub fn parse_mentor_list(value: &str) -> Result<Vec<usize>> {
    let value = value.trim();
    if value.is_empty() || value == "none" {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::usage(format!("bad mentor index {v:?}")))
        })
        .collect()
}

/// Parses flat `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::usage(format!("config line {}: expected key=value", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_text(&text)
}

/// One agent's run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// Whether a goal was reached at each step.
    pub goals: Vec<bool>,
    pub total_reward: f64,
    pub stats: LearnerStats,
    pub final_values: Vec<f64>,
    /// Greedy policy from the final value function and model, lowest index
    /// on ties.
    pub final_policy: Policy,
}

impl RunRecord {
    pub fn goal_count(&self) -> usize {
        self.goals.iter().filter(|&&g| g).count()
    }
}

fn final_policy(learner: &Learner) -> Policy {
    let obs = learner.observer();
    let v = learner.values();
    Policy::from_vec(
        (0..obs.state_count())
            .map(|s| {
                let mut best = (0, f64::NEG_INFINITY);
                for a in 0..obs.action_count() {
                    let e = obs.expectation(s, a, |t| v[t]);
                    if e > best.1 {
                        best = (a, e);
                    }
                }
                best.0
            })
            .collect(),
    )
}

/// Simulates one agent for `steps` steps, feeding it the given mentors'
/// transitions after each of its own steps.
#[allow(clippy::too_many_arguments)]
pub fn simulate_agent(
    sc: &Scenario,
    config: LearnerConfig,
    prior: f64,
    mentors: &[Mentor],
    steps: usize,
    env_rng: &mut ChaCha8Rng,
    policy_rng: &mut ChaCha8Rng,
    mentor_rngs: &mut [ChaCha8Rng],
) -> Result<RunRecord> {
    simulate(sc, config, prior, mentors, steps, env_rng, policy_rng, mentor_rngs).map(|(r, _)| r)
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    sc: &Scenario,
    config: LearnerConfig,
    prior: f64,
    mentors: &[Mentor],
    steps: usize,
    env_rng: &mut ChaCha8Rng,
    policy_rng: &mut ChaCha8Rng,
    mentor_rngs: &mut [ChaCha8Rng],
) -> Result<(RunRecord, Learner)> {
    let world = &sc.observer;
    let mentor_models = mentors.iter().map(|_| world.mentor_prior(prior)).collect();
    let mut learner = Learner::new(config, world.map.rewards(), world.observer_prior(prior), mentor_models)?;
    let mut mentors: Vec<Mentor> = if config.imitation { mentors.to_vec() } else { Vec::new() };
    let mut goals = Vec::with_capacity(steps);
    let mut total_reward = 0.0;
    let mut s = world.start();
    for _ in 0..steps {
        let (a, _) = learner.select_action(s, policy_rng);
        let out = world.step(s, a, env_rng);
        learner.observe_own(s, a, out.next);
        learner.arrived(out.next);
        goals.push(out.goal);
        total_reward += out.reward;
        s = out.next;
        for (i, (m, rng)) in mentors.iter_mut().zip(mentor_rngs.iter_mut()).enumerate() {
            let (ms, mt) = m.step(rng);
            learner.observe_mentor(i, ms, mt);
        }
    }
    let record = RunRecord {
        goals,
        total_reward,
        stats: learner.stats().clone(),
        final_policy: final_policy(&learner),
        final_values: learner.values().to_vec(),
    };
    Ok((record, learner))
}

/// Observer and control records of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPair {
    pub observer: RunRecord,
    pub control: Option<RunRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub optimal_rate: f64,
    pub obs_convergence: Option<usize>,
    pub ctrl_convergence: Option<usize>,
    pub obs_final: f64,
    pub ctrl_final: f64,
    pub phi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub runs: Vec<RunPair>,
    /// Per-run goal-rate series.
    pub obs_series: Vec<Vec<u32>>,
    pub ctrl_series: Vec<Vec<u32>>,
    pub obs_mean: Vec<f64>,
    pub ctrl_mean: Vec<f64>,
    pub delta: Vec<f64>,
    pub summary: Summary,
}

/// Replays the observer of run `run` and writes its final tables to `dir`:
/// `observer_counts.txt` and `mentor<i>_counts.txt` hold `key successor
/// prior experience` lines, with observer keys `state * actions + action`
/// and mentor keys the state; `ledger.txt` holds `state mentor infeasible
/// bridged repairable attempts search_steps searching` lines.
pub fn dump_run(config: &ExperimentConfig, run: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let sc = scenario(&config.scenario)?;
    let mentors = roster(&sc, config)?;
    let mut mentor_rngs: Vec<ChaCha8Rng> = (0..mentors.len())
        .map(|i| stream_rng(config.seed, run, STREAM_MENTOR + i as u64))
        .collect();
    let (_, learner) = simulate(
        &sc,
        config.learner_config(),
        config.prior,
        &mentors,
        config.steps,
        &mut stream_rng(config.seed, run, STREAM_OBSERVER_ENV),
        &mut stream_rng(config.seed, run, STREAM_OBSERVER_POLICY),
        &mut mentor_rngs,
    )?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut emit = |name: String, body: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>| -> Result<()> {
        let path = dir.join(name);
        let mut buf = Vec::new();
        body(&mut buf).map_err(|e| Error::io(&path, e))?;
        fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    emit("observer_counts.txt".into(), &|b| learner.observer().table().dump(b))?;
    for (i, m) in learner.mentors().iter().enumerate() {
        emit(format!("mentor{i}_counts.txt"), &|b| m.table().dump(b))?;
    }
    emit("ledger.txt".into(), &|b| learner.ledger().dump(b))?;
    Ok(written)
}

/// Runs one (observer, control) pair.
pub fn run_pair(sc: &Scenario, config: &ExperimentConfig, mentors: &[Mentor], run: usize) -> Result<RunPair> {
    let lc = config.learner_config();
    let mentor_rngs = |_: ()| -> Vec<ChaCha8Rng> {
        (0..mentors.len())
            .map(|i| stream_rng(config.seed, run, STREAM_MENTOR + i as u64))
            .collect()
    };
    let observer = simulate_agent(
        sc,
        lc,
        config.prior,
        mentors,
        config.steps,
        &mut stream_rng(config.seed, run, STREAM_OBSERVER_ENV),
        &mut stream_rng(config.seed, run, STREAM_OBSERVER_POLICY),
        &mut mentor_rngs(()),
    )?;
    let control = if config.observer_only {
        None
    } else {
        Some(simulate_agent(
            sc,
            lc.control(),
            config.prior,
            mentors,
            config.steps,
            &mut stream_rng(config.seed, run, STREAM_CONTROL_ENV),
            &mut stream_rng(config.seed, run, STREAM_CONTROL_POLICY),
            &mut mentor_rngs(()),
        )?)
    };
    Ok(RunPair { observer, control })
}

/// The scenario's mentors selected by the config's roster.
pub fn roster(sc: &Scenario, config: &ExperimentConfig) -> Result<Vec<Mentor>> {
    let indices: Vec<usize> = match &config.mentors {
        Some(list) => list.clone(),
        None => (0..sc.mentors.len()).collect(),
    };
    indices
        .iter()
        .map(|&i| {
            let spec = sc
                .mentors
                .get(i)
                .ok_or_else(|| Error::usage(format!("scenario {} has no mentor {i}", sc.name)))?;
            make_mentor(&spec.world, config.gamma, config.mentor_epsilon)
        })
        .collect()
}

/// Runs every (observer, control) pair, in parallel, and aggregates.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let sc = scenario(&config.scenario)?;
    let mentors = roster(&sc, config)?;
    let runs: Vec<RunPair> = (0..config.runs)
        .into_par_iter()
        .map(|r| run_pair(&sc, config, &mentors, r))
        .collect::<Result<_>>()?;
    aggregate(&sc, config, &mentors, runs)
}

fn aggregate(sc: &Scenario, config: &ExperimentConfig, mentors: &[Mentor], runs: Vec<RunPair>) -> Result<ExperimentResult> {
    let w = config.window;
    let obs_series: Vec<Vec<u32>> = runs.iter().map(|r| goal_rate_series(&r.observer.goals, w)).collect();
    let ctrl_series: Vec<Vec<u32>> = runs
        .iter()
        .filter_map(|r| r.control.as_ref())
        .map(|c| goal_rate_series(&c.goals, w))
        .collect();
    let obs_mean = mean_series(&obs_series)?;
    let ctrl_mean = if ctrl_series.is_empty() {
        vec![0.0; obs_mean.len()]
    } else {
        mean_series(&ctrl_series)?
    };
    let delta = delta_curve(&obs_mean, &ctrl_mean)?;
    let optimal_rate = optimal_goal_rate(&sc.observer, config.gamma)? * w as f64 / 1000.0;
    let threshold = CONVERGENCE_FRACTION * optimal_rate;
    let phi = match mentors.first() {
        Some(m) => Some(fracture(&sc.observer, &m.world, config.gamma)?.phi),
        None => None,
    };
    let summary = Summary {
        optimal_rate,
        obs_convergence: convergence_step(&obs_mean, threshold),
        ctrl_convergence: if ctrl_series.is_empty() {
            None
        } else {
            convergence_step(&ctrl_mean, threshold)
        },
        obs_final: obs_mean.last().copied().unwrap_or(0.0),
        ctrl_final: ctrl_mean.last().copied().unwrap_or(0.0),
        phi,
    };
    Ok(ExperimentResult {
        config: config.clone(),
        runs,
        obs_series,
        ctrl_series,
        obs_mean,
        ctrl_mean,
        delta,
        summary,
    })
}

fn num(v: f64) -> String {
    format!("{v:.4}")
}

impl ExperimentResult {
    /// The series CSV.
    pub fn series_csv(&self) -> String {
        let mut out = String::from("step,obs_mean,ctrl_mean,delta");
        if self.config.per_run {
            for i in 0..self.obs_series.len() {
                let _ = write!(out, ",obs_r{i}");
            }
            for i in 0..self.ctrl_series.len() {
                let _ = write!(out, ",ctrl_r{i}");
            }
        }
        out.push('\n');
        let every = self.config.every;
        for i in (0..self.obs_mean.len()).filter(|i| (i + 1) % every == 0) {
            let _ = write!(
                out,
                "{},{},{},{}",
                i + 1,
                num(self.obs_mean[i]),
                num(self.ctrl_mean[i]),
                num(self.delta[i])
            );
            if self.config.per_run {
                for s in self.obs_series.iter().chain(&self.ctrl_series) {
                    let _ = write!(out, ",{}", s[i]);
                }
            }
            out.push('\n');
        }
        out
    }

    /// The one-row summary CSV.
    pub fn summary_csv(&self) -> String {
        let s = &self.summary;
        let opt = |v: Option<usize>| v.map(|x| (x + 1).to_string()).unwrap_or_default();
        format!(
            "scenario,optimal_rate,obs_convergence_step,ctrl_convergence_step,obs_final_rate,ctrl_final_rate,phi\n\
             {},{},{},{},{},{},{}\n",
            self.config.scenario,
            num(s.optimal_rate),
            opt(s.obs_convergence),
            opt(s.ctrl_convergence),
            num(s.obs_final),
            num(s.ctrl_final),
            s.phi.map(num).unwrap_or_default()
        )
    }

    /// Writes the series to `path` and the summary beside it with a
    /// `.summary.csv` suffix.
    pub fn write(&self, path: &Path) -> Result<PathBuf> {
        fs::write(path, self.series_csv()).map_err(|e| Error::io(path, e))?;
        let summary = summary_path(path);
        fs::write(&summary, self.summary_csv()).map_err(|e| Error::io(&summary, e))?;
        Ok(summary)
    }
}

pub fn summary_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.summary.csv"))
}

/// Applies `key=value` pairs in order.
pub fn apply_all(config: &mut ExperimentConfig, pairs: &[(String, String)]) -> Result<()> {
    // The scenario resets defaults, so it goes first.
    let map: BTreeMap<&str, &str> = pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
    if let Some(name) = map.get("scenario") {
        config.set("scenario", name)?;
    }
    for (k, v) in pairs.iter().filter(|(k, _)| k != "scenario") {
        config.set(k, v)?;
    }
    Ok(())
}
