//! The observer's agent loop: prioritized sweeping over augmented backups and
//! mentor-guided ε-greedy action selection.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use ordered_float::OrderedFloat;
use rand::Rng;

use crate::backup::{
    augmented_backup, closest_action, observer_estimate, supersedes, BackupInputs, ConfidenceParams,
    MentorCandidate,
};
use crate::belief::{MentorModel, MentorObservation, ObserverModel};
use crate::error::{Error, Result};
use crate::feasibility::{FeasibilityLedger, FeasibilityParams, GateContext};

/// Priorities below this are not queued.
pub const MIN_PRIORITY: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    pub gamma: f64,
    /// Prioritized backups after the direct backup of each sample.
    pub backups: usize,
    pub epsilon0: f64,
    /// Per-step multiplicative decay of ε.
    pub epsilon_decay: f64,
    pub confidence: ConfidenceParams,
    pub feasibility: FeasibilityParams,
    pub imitation: bool,
    pub feasibility_enabled: bool,
    pub repair: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            backups: 0,
            epsilon0: 0.25,
            epsilon_decay: 0.9995,
            confidence: ConfidenceParams::default(),
            feasibility: FeasibilityParams::default(),
            imitation: true,
            feasibility_enabled: false,
            repair: false,
        }
    }
}

impl LearnerConfig {
    /// The same learner with imitation switched off.
    pub fn control(self) -> Self {
        Self {
            imitation: false,
            feasibility_enabled: false,
            repair: false,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::usage(format!("gamma {} not in [0, 1)", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.epsilon0) {
            return Err(Error::usage(format!("epsilon0 {} not in [0, 1]", self.epsilon0)));
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return Err(Error::usage(format!("epsilon decay {} not in (0, 1]", self.epsilon_decay)));
        }
        if !(self.confidence.c.is_finite() && self.confidence.c >= 0.0) {
            return Err(Error::usage(format!("c {} must be finite and >= 0", self.confidence.c)));
        }
        self.feasibility.validate()
    }
}

/// How [`Learner::select_action`] chose its action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    Repair,
    Explore,
    Greedy,
    /// Greedy, following a mentor through the closest action.
    Imitate(usize),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LearnerStats {
    pub steps: u64,
    pub backups: u64,
    pub explored: u64,
    pub imitated: u64,
    pub repair_steps: u64,
}

#[derive(Debug, Clone)]
pub struct Learner {
    config: LearnerConfig,
    rewards: Vec<f64>,
    values: Vec<f64>,
    observer: ObserverModel,
    mentors: Vec<MentorModel>,
    ledger: FeasibilityLedger,
    predecessors: Vec<Vec<usize>>,
    queue: BinaryHeap<(OrderedFloat<f64>, Reverse<usize>)>,
    queued: Vec<f64>,
    epsilon: f64,
    stats: LearnerStats,
}

impl Learner {
    /// A learner with value function zero, the given prior models and known
    /// state rewards. Mentor models are ignored when imitation is off.
    pub fn new(
        config: LearnerConfig,
        rewards: Vec<f64>,
        observer: ObserverModel,
        mentors: Vec<MentorModel>,
    ) -> Result<Self> {
        config.validate()?;
        let n = observer.state_count();
        if rewards.len() != n {
            return Err(Error::InvalidModel(format!("{} rewards for {n} states", rewards.len())));
        }
        if let Some(m) = mentors.iter().find(|m| m.table().key_count() != n) {
            return Err(Error::InvalidModel(format!(
                "mentor model has {} states, observer {n}",
                m.table().key_count()
            )));
        }
        let mentors = if config.imitation { mentors } else { Vec::new() };
        let mut predecessors = vec![Vec::new(); n];
        for s in 0..n {
            for a in 0..observer.action_count() {
                for c in observer.successors(s, a) {
                    predecessors[c.successor].push(s);
                }
            }
            for m in &mentors {
                for c in m.successors(s) {
                    predecessors[c.successor].push(s);
                }
            }
        }
        for p in &mut predecessors {
            p.sort_unstable();
            p.dedup();
        }
        Ok(Self {
            ledger: FeasibilityLedger::new(n, mentors.len(), config.feasibility),
            config,
            rewards,
            values: vec![0.0; n],
            observer,
            mentors,
            predecessors,
            queue: BinaryHeap::new(),
            queued: vec![0.0; n],
            epsilon: config.epsilon0,
            stats: LearnerStats::default(),
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn observer(&self) -> &ObserverModel {
        &self.observer
    }

    pub fn mentors(&self) -> &[MentorModel] {
        &self.mentors
    }

    pub fn ledger(&self) -> &FeasibilityLedger {
        &self.ledger
    }

    pub fn stats(&self) -> &LearnerStats {
        &self.stats
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    /// The queued priority of `s`, zero when not queued.
    pub fn priority(&self, s: usize) -> f64 {
        self.queued[s]
    }

    /// One gated augmented backup at `s`. Returns `|ΔV(s)|`.
    pub fn backup(&mut self, s: usize) -> f64 {
        let Self {
            config,
            rewards,
            values,
            observer,
            mentors,
            ledger,
            stats,
            ..
        } = self;
        let inputs = BackupInputs {
            values,
            observer,
            mentors,
            rewards,
            gamma: config.gamma,
            confidence: config.confidence,
        };
        let feasibility = config.feasibility_enabled;
        let repair = config.repair;
        let result = augmented_backup(&inputs, s, |cand: MentorCandidate| {
            if !feasibility {
                return true;
            }
            let ctx = GateContext {
                observer,
                mentor: &mentors[cand.mentor],
                observer_supersedes: cand.observer_supersedes,
                repair_enabled: repair,
            };
            ledger.use_augmented(s, cand.mentor, &ctx)
        });
        stats.backups += 1;
        let delta = (result.value - values[s]).abs();
        values[s] = result.value;
        delta
    }

    /// Largest probability with which `w` moves to `s` under any observer
    /// action or mentor chain.
    fn transition_weight(&self, w: usize, s: usize) -> f64 {
        let mut best = 0.0f64;
        for a in 0..self.observer.action_count() {
            let total = self.observer.total(w, a);
            if total > 0.0 {
                let key = self.observer.key(w, a);
                best = best.max(self.observer.table().count(key, s) / total);
            }
        }
        for m in &self.mentors {
            let total = m.total(w);
            if total > 0.0 {
                best = best.max(m.table().count(w, s) / total);
            }
        }
        best
    }

    fn push(&mut self, s: usize, priority: f64) {
        if priority < MIN_PRIORITY || priority <= self.queued[s] {
            return;
        }
        self.queued[s] = priority;
        self.queue.push((OrderedFloat(priority), Reverse(s)));
    }

    fn push_predecessors(&mut self, s: usize, delta: f64) {
        if delta < MIN_PRIORITY {
            return;
        }
        for i in 0..self.predecessors[s].len() {
            let w = self.predecessors[s][i];
            let p = self.transition_weight(w, s) * delta;
            self.push(w, p);
        }
    }

    fn pop(&mut self) -> Option<usize> {
        while let Some((OrderedFloat(p), Reverse(s))) = self.queue.pop() {
            if p == self.queued[s] {
                self.queued[s] = 0.0;
                return Some(s);
            }
        }
        None
    }

    /// Direct backup at `s` followed by up to `B` prioritized backups.
    fn sweep_from(&mut self, s: usize) {
        let delta = self.backup(s);
        self.push_predecessors(s, delta);
        for _ in 0..self.config.backups {
            let Some(w) = self.pop() else { break };
            let delta = self.backup(w);
            self.push_predecessors(w, delta);
        }
    }

    fn add_predecessor(&mut self, s: usize, t: usize) {
        let preds = &mut self.predecessors[t];
        if let Err(pos) = preds.binary_search(&s) {
            preds.insert(pos, s);
        }
    }

    /// Learns from the observer's own transition `s --a--> t`.
    pub fn observe_own(&mut self, s: usize, a: usize, t: usize) {
        if self.observer.record(s, a, t) {
            self.add_predecessor(s, t);
        }
        self.sweep_from(s);
    }

    /// Learns from mentor `mentor`'s observed transition `s -> t`. A no-op
    /// when imitation is off.
    pub fn observe_mentor(&mut self, mentor: usize, s: usize, t: usize) {
        if !self.config.imitation || mentor >= self.mentors.len() {
            return;
        }
        if self.mentors[mentor].record(&MentorObservation { mentor, from: s, to: t }) {
            self.add_predecessor(s, t);
        }
        self.sweep_from(s);
    }

    /// Picks the action at `s` and decays ε.
    pub fn select_action(&mut self, s: usize, rng: &mut impl Rng) -> (usize, Choice) {
        let n_actions = self.observer.action_count();
        let epsilon = self.epsilon;
        self.epsilon *= self.config.epsilon_decay;
        self.stats.steps += 1;
        if self.config.repair && self.config.feasibility_enabled && !self.mentors.is_empty() {
            self.ledger.maybe_start_walk(s, &self.mentors);
            if let Some(a) = self.ledger.walk_action(n_actions, rng) {
                self.stats.repair_steps += 1;
                return (a, Choice::Repair);
            }
        }
        if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
            self.stats.explored += 1;
            return (rng.gen_range(0..n_actions), Choice::Explore);
        }
        let inputs = BackupInputs {
            values: &self.values,
            observer: &self.observer,
            mentors: &self.mentors,
            rewards: &self.rewards,
            gamma: self.config.gamma,
            confidence: self.config.confidence,
        };
        let (a_star, v_o, sigma_o) = observer_estimate(&inputs, s);
        if let Some(m) = self.leading_mentor(&inputs, s, v_o, sigma_o) {
            if let Some(a) = closest_action(&self.observer, &self.mentors[m], s) {
                self.stats.imitated += 1;
                return (a, Choice::Imitate(m));
            }
        }
        (a_star, Choice::Greedy)
    }

    /// The admitted mentor with the best mean value at `s`, if its lower
    /// bound strictly exceeds the observer's.
    fn leading_mentor(&self, inputs: &BackupInputs, s: usize, v_o: f64, sigma_o: f64) -> Option<usize> {
        let mut best: Option<(usize, f64, f64)> = None;
        for (m, model) in self.mentors.iter().enumerate() {
            if !model.has_data(s) || (self.config.feasibility_enabled && !self.ledger.admits(s, m)) {
                continue;
            }
            let v_m = self.rewards[s] + self.config.gamma * model.expectation(s, |t| self.values[t]);
            if best.is_none_or(|b| v_m > b.1) {
                let sigma_m = crate::backup::q_sigma(
                    inputs.values,
                    model.table(),
                    s,
                    self.config.gamma,
                    self.config.confidence.variance,
                )
                .unwrap_or(0.0);
                best = Some((m, v_m, sigma_m));
            }
        }
        let (m, v_m, sigma_m) = best?;
        supersedes(v_m, sigma_m, v_o, sigma_o, self.config.confidence).then_some(m)
    }

    /// Reports where the agent arrived after acting; advances a running
    /// repair walk.
    pub fn arrived(&mut self, t: usize) {
        self.ledger.advance_walk(t);
    }
}
