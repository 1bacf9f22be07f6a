//! Feasibility testing and k-step repair for heterogeneous mentors.
//!
//! A mentor's transition at `s` is feasible when at least one observer action
//! passes a Bonferroni-combined difference-of-means test against the mentor's
//! chain, using Chebychev critical values. Infeasible transitions may still be
//! bridged by a short observer path back onto the mentor's trajectory; the
//! ledger tracks bridging, repair attempts and the random-walk searches that
//! try to build such a bridge.

use std::collections::VecDeque;

use rand::Rng;

use crate::belief::{MentorModel, ObserverModel, VarianceModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityParams {
    /// Significance of the joint test.
    pub alpha: f64,
    /// Experience samples required on each side before testing.
    pub n_min: u64,
    /// Bridge length bound.
    pub k: usize,
    /// Repair attempts before a state is declared irreparable.
    pub n_attempts: u32,
    /// Minimum expected probability for an observer edge to count in
    /// reachability analysis.
    pub theta: f64,
    /// Variance formula inside the pooled standard deviation.
    pub variance: VarianceModel,
}

impl Default for FeasibilityParams {
    /// `k = 3`, `n = 20`. In an 8-connected grid with low noise, `n > 8k - 4`
    /// attempts are enough to cover the perimeter of a k-step box.
    fn default() -> Self {
        Self {
            alpha: 0.05,
            n_min: 5,
            k: 3,
            n_attempts: 20,
            theta: 0.3,
            variance: VarianceModel::Beta,
        }
    }
}

impl FeasibilityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::usage(format!("alpha {} not in (0, 0.5)", self.alpha)));
        }
        if self.n_min < 1 || self.k < 1 || self.n_attempts < 1 {
            return Err(Error::usage("n_min, k and n_attempts must be at least 1"));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::usage(format!("theta {} not in (0, 1]", self.theta)));
        }
        Ok(())
    }

    /// Steps in one repair walk.
    pub fn walk_length(&self) -> usize {
        self.k * self.k
    }
}

/// Critical value `Z` with Chebychev tail mass `P(|X - μ| ≥ Zσ) ≤ q`.
pub fn chebychev_z(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::usage(format!("tail probability {q} not in (0, 1)")));
    }
    Ok((1.0 / q).sqrt())
}

fn testable(observer: &ObserverModel, mentor: &MentorModel, s: usize, a: usize, n_min: u64) -> bool {
    observer.experience_total(s, a) >= n_min && mentor.experience_total(s) >= n_min
}

/// Test statistic for one successor: the absolute difference of expected
/// probabilities over the pooled model standard deviation.
///
/// `None` when either side has fewer than `n_min` experience samples.
pub fn successor_z(
    observer: &ObserverModel,
    mentor: &MentorModel,
    s: usize,
    a: usize,
    t: usize,
    params: &FeasibilityParams,
) -> Option<f64> {
    if !testable(observer, mentor, s, a, params.n_min) {
        return None;
    }
    let key = observer.key(s, a);
    let n_o = observer.table().count(key, t);
    let total_o = observer.total(s, a);
    let n_m = mentor.table().count(s, t);
    let total_m = mentor.total(s);
    let diff = (n_o / total_o - n_m / total_m).abs();
    let weight = n_o + n_m;
    if weight <= 0.0 {
        return Some(if diff > 0.0 { f64::INFINITY } else { 0.0 });
    }
    let pooled = (n_o * params.variance.evaluate(n_o, total_o)
        + n_m * params.variance.evaluate(n_m, total_m))
        / weight;
    Some(if pooled > 0.0 {
        diff / pooled.sqrt()
    } else if diff > 0.0 {
        f64::INFINITY
    } else {
        0.0
    })
}

/// Successors compared by the test: every successor stored for any observer
/// action at `s`, plus every successor in the mentor's chain at `s`.
pub fn successor_set(observer: &ObserverModel, mentor: &MentorModel, s: usize) -> Vec<usize> {
    let mut set: Vec<usize> = (0..observer.action_count())
        .flat_map(|a| observer.successors(s, a).iter().map(|c| c.successor))
        .chain(mentor.successors(s).iter().map(|c| c.successor))
        .collect();
    set.sort_unstable();
    set.dedup();
    set
}

/// Bonferroni test of "action `a` reproduces the mentor's transition at `s`".
///
/// Untestable pairs are assumed similar.
pub fn action_similar(
    observer: &ObserverModel,
    mentor: &MentorModel,
    s: usize,
    a: usize,
    params: &FeasibilityParams,
) -> bool {
    if !testable(observer, mentor, s, a, params.n_min) {
        return true;
    }
    let successors = successor_set(observer, mentor, s);
    let critical = chebychev_z(params.alpha / successors.len() as f64)
        .expect("alpha / r is inside (0, 1)");
    successors.iter().all(|&t| {
        successor_z(observer, mentor, s, a, t, params).is_none_or(|z| z <= critical)
    })
}

/// Mentor states reachable from `s` in at most `k` observed mentor
/// transitions, excluding `s`.
pub fn downstream_states(mentor: &MentorModel, s: usize, k: usize) -> Vec<usize> {
    let mut seen = vec![s];
    let mut frontier = vec![s];
    for _ in 0..k {
        let mut next = Vec::new();
        for &u in &frontier {
            for c in mentor.successors(u) {
                if c.experience > 0 && !seen.contains(&c.successor) {
                    seen.push(c.successor);
                    next.push(c.successor);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    seen.retain(|&u| u != s);
    seen.sort_unstable();
    seen
}

/// Whether the observer can reach the mentor's trajectory downstream of `s`
/// within `k` steps along edges of expected probability at least `theta`.
pub fn reachable(observer: &ObserverModel, mentor: &MentorModel, s: usize, params: &FeasibilityParams) -> bool {
    let downstream = downstream_states(mentor, s, params.k);
    if downstream.is_empty() {
        return false;
    }
    let mut depth = vec![usize::MAX; observer.state_count()];
    depth[s] = 0;
    let mut queue = VecDeque::from([s]);
    while let Some(u) = queue.pop_front() {
        if depth[u] == params.k {
            continue;
        }
        for a in 0..observer.action_count() {
            let total = observer.total(u, a);
            if total <= 0.0 {
                continue;
            }
            for c in observer.successors(u, a) {
                let t = c.successor;
                if c.total() / total < params.theta || depth[t] != usize::MAX {
                    continue;
                }
                if downstream.binary_search(&t).is_ok() {
                    return true;
                }
                depth[t] = depth[u] + 1;
                queue.push_back(t);
            }
        }
    }
    false
}

/// Per-(state, mentor) feasibility and repair bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LedgerEntry {
    pub infeasible: bool,
    pub bridged: bool,
    pub repairable: bool,
    /// Failed repair walks.
    pub attempts: u32,
    /// Steps taken by the current or last repair walk.
    pub search_steps: usize,
    /// A repair walk is pending or running.
    pub searching: bool,
}

impl Default for LedgerEntry {
    fn default() -> Self {
        Self {
            infeasible: false,
            bridged: false,
            repairable: true,
            attempts: 0,
            search_steps: 0,
            searching: false,
        }
    }
}

/// What [`FeasibilityLedger::use_augmented`] needs to know about the current
/// backup.
#[derive(Debug, Clone, Copy)]
pub struct GateContext<'a> {
    pub observer: &'a ObserverModel,
    pub mentor: &'a MentorModel,
    pub observer_supersedes: bool,
    pub repair_enabled: bool,
}

/// Outcome of one repair-walk step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkStatus {
    Continuing,
    Bridged,
    Failed,
}

/// A random walk started at `origin`, searching for the mentor's trajectory
/// downstream of it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairWalk {
    pub origin: usize,
    pub mentor: usize,
    pub steps: usize,
    pub length: usize,
    downstream: Vec<usize>,
}

impl RepairWalk {
    pub fn new(origin: usize, mentor: usize, length: usize, mut downstream: Vec<usize>) -> Self {
        downstream.sort_unstable();
        Self {
            origin,
            mentor,
            steps: 0,
            length,
            downstream,
        }
    }

    /// A uniformly random action.
    pub fn next_action(&self, action_count: usize, rng: &mut impl Rng) -> usize {
        rng.gen_range(0..action_count)
    }

    /// Records arrival at `state` after one walk step.
    pub fn advance(&mut self, state: usize) -> WalkStatus {
        self.steps += 1;
        if self.downstream.binary_search(&state).is_ok() {
            WalkStatus::Bridged
        } else if self.steps >= self.length {
            WalkStatus::Failed
        } else {
            WalkStatus::Continuing
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityLedger {
    params: FeasibilityParams,
    mentor_count: usize,
    entries: Vec<LedgerEntry>,
    /// Sample counts at the last similarity test and its verdict, so the test
    /// reruns only when new data arrives at the state.
    tested: Vec<Option<(u64, u64, bool)>>,
    active: Option<RepairWalk>,
    walk_steps_total: usize,
}

impl FeasibilityLedger {
    pub fn new(state_count: usize, mentor_count: usize, params: FeasibilityParams) -> Self {
        Self {
            params,
            mentor_count,
            entries: vec![LedgerEntry::default(); state_count * mentor_count],
            tested: vec![None; state_count * mentor_count],
            active: None,
            walk_steps_total: 0,
        }
    }

    pub fn params(&self) -> &FeasibilityParams {
        &self.params
    }

    #[inline]
    fn index(&self, s: usize, m: usize) -> usize {
        s * self.mentor_count + m
    }

    pub fn entry(&self, s: usize, m: usize) -> &LedgerEntry {
        &self.entries[self.index(s, m)]
    }

    fn entry_mut(&mut self, s: usize, m: usize) -> &mut LedgerEntry {
        let idx = self.index(s, m);
        &mut self.entries[idx]
    }

    pub fn active_walk(&self) -> Option<&RepairWalk> {
        self.active.as_ref()
    }

    /// Repair-walk steps executed over the ledger's lifetime.
    pub fn walk_steps_total(&self) -> usize {
        self.walk_steps_total
    }

    /// Whether any observer action reproduces mentor `m` at `s`. Verdicts are
    /// cached, and an infeasible verdict is permanent.
    pub fn feasible(&mut self, observer: &ObserverModel, mentor: &MentorModel, s: usize, m: usize) -> bool {
        if self.entry(s, m).infeasible {
            return false;
        }
        if mentor.experience_total(s) < self.params.n_min {
            return true;
        }
        let seen_o: u64 = (0..observer.action_count()).map(|a| observer.experience_total(s, a)).sum();
        let seen_m = mentor.experience_total(s);
        let idx = self.index(s, m);
        if let Some((o, mm, verdict)) = self.tested[idx] {
            if (o, mm) == (seen_o, seen_m) {
                return verdict;
            }
        }
        let params = self.params;
        let similar = (0..observer.action_count()).any(|a| action_similar(observer, mentor, s, a, &params));
        self.tested[idx] = Some((seen_o, seen_m, similar));
        if !similar {
            self.entries[idx].infeasible = true;
        }
        similar
    }

    /// The elaborated augmented-backup test for mentor `m` at `s`.
    pub fn use_augmented(&mut self, s: usize, m: usize, ctx: &GateContext) -> bool {
        if ctx.observer_supersedes {
            return false;
        }
        if self.feasible(ctx.observer, ctx.mentor, s, m) {
            return true;
        }
        if self.entry(s, m).bridged {
            return false;
        }
        if reachable(ctx.observer, ctx.mentor, s, &self.params) {
            self.entry_mut(s, m).bridged = true;
            return false;
        }
        if !self.entry(s, m).repairable || !ctx.repair_enabled {
            return false;
        }
        let n_attempts = self.params.n_attempts;
        let entry = self.entry_mut(s, m);
        if entry.searching {
            return true;
        }
        if entry.attempts >= n_attempts {
            entry.repairable = false;
            return false;
        }
        entry.searching = true;
        entry.search_steps = 0;
        true
    }

    /// Read-only view of the last verdict: whether mentor `m` may currently
    /// contribute at `s`, ignoring the supersedes test.
    pub fn admits(&self, s: usize, m: usize) -> bool {
        let e = self.entry(s, m);
        !e.infeasible || e.searching
    }

    /// Starts a repair walk if the agent stands at the origin of a pending
    /// search and no walk is running.
    pub fn maybe_start_walk(&mut self, s: usize, mentors: &[MentorModel]) {
        if self.active.is_some() {
            return;
        }
        for m in 0..self.mentor_count {
            let e = self.entry(s, m);
            if e.searching && e.repairable && !e.bridged {
                let downstream = downstream_states(&mentors[m], s, self.params.k);
                self.active = Some(RepairWalk::new(s, m, self.params.walk_length(), downstream));
                self.entry_mut(s, m).search_steps = 0;
                return;
            }
        }
    }

    /// The walk's next action, if a walk is running.
    pub fn walk_action(&self, action_count: usize, rng: &mut impl Rng) -> Option<usize> {
        self.active.as_ref().map(|w| w.next_action(action_count, rng))
    }

    /// Advances the running walk to `state` and settles the ledger when the
    /// walk ends.
    pub fn advance_walk(&mut self, state: usize) -> Option<WalkStatus> {
        let walk = self.active.as_mut()?;
        let status = walk.advance(state);
        let (origin, mentor, steps) = (walk.origin, walk.mentor, walk.steps);
        self.walk_steps_total += 1;
        let n_attempts = self.params.n_attempts;
        let entry = self.entry_mut(origin, mentor);
        entry.search_steps = steps;
        match status {
            WalkStatus::Continuing => {}
            WalkStatus::Bridged => {
                entry.bridged = true;
                entry.searching = false;
                self.active = None;
            }
            WalkStatus::Failed => {
                entry.attempts += 1;
                entry.searching = false;
                if entry.attempts >= n_attempts {
                    entry.repairable = false;
                }
                self.active = None;
            }
        }
        Some(status)
    }

    /// Writes `state mentor infeasible bridged repairable attempts search_steps searching`
    /// for every entry that differs from the default.
    pub fn dump(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        for (idx, e) in self.entries.iter().enumerate() {
            if *e == LedgerEntry::default() {
                continue;
            }
            writeln!(
                out,
                "{} {} {} {} {} {} {} {}",
                idx / self.mentor_count,
                idx % self.mentor_count,
                e.infeasible as u8,
                e.bridged as u8,
                e.repairable as u8,
                e.attempts,
                e.search_steps,
                e.searching as u8
            )?;
        }
        Ok(())
    }
}
