//! Augmented Bellman backups.
//!
//! The observer's own best action is compared against the value of following
//! each mentor's observed Markov chain, evaluated with the observer's rewards.
//! Each side gets a lower bound `value - c * sigma` from the Dirichlet model
//! variance; the side with the greater lower bound supplies the backed-up
//! mean value.

use crate::belief::{Count, DirichletCountTable, MentorModel, ObserverModel, VarianceModel};
use crate::error::{Error, Result};

/// Floor applied to zero mentor probabilities inside the cross-entropy of
/// [`closest_action`].
pub const KL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceParams {
    /// Standard-deviation multiplier for the lower bounds.
    pub c: f64,
    pub variance: VarianceModel,
}

impl ConfidenceParams {
    pub fn new(c: f64) -> Self {
        assert!(c.is_finite() && c >= 0.0, "confidence multiplier must be finite and >= 0");
        Self {
            c,
            variance: VarianceModel::default(),
        }
    }

    pub fn with_variance(mut self, variance: VarianceModel) -> Self {
        self.variance = variance;
        self
    }
}

impl Default for ConfidenceParams {
    fn default() -> Self {
        Self::new(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Observer,
    Mentor(usize),
}

/// The best admitted mentor's estimate at a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MentorEstimate {
    pub mentor: usize,
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackupResult {
    pub value: f64,
    pub source: Source,
    /// The observer's best action by expected value.
    pub best_action: usize,
    pub v_o: f64,
    pub sigma_o: f64,
    pub mentor: Option<MentorEstimate>,
}

/// What a gate sees when deciding whether a mentor may take part in a backup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MentorCandidate {
    pub mentor: usize,
    pub value: f64,
    pub sigma: f64,
    /// Whether the observer's own estimate supersedes this mentor's.
    pub observer_supersedes: bool,
}

/// Everything a backup reads. Borrowed from the learner.
#[derive(Debug, Clone, Copy)]
pub struct BackupInputs<'a> {
    pub values: &'a [f64],
    pub observer: &'a ObserverModel,
    pub mentors: &'a [MentorModel],
    pub rewards: &'a [f64],
    pub gamma: f64,
    pub confidence: ConfidenceParams,
}

/// `sqrt(γ² Σ_t σ²_model(key, t) V(t)²)` over the key's stored successors.
pub fn q_sigma(
    values: &[f64],
    table: &DirichletCountTable,
    key: usize,
    gamma: f64,
    variance: VarianceModel,
) -> Result<f64> {
    if !table.is_defined(key) {
        return Err(Error::UndefinedModel(key));
    }
    Ok(sigma_over(values, table.successors(key), table.total(key), gamma, variance))
}

#[inline]
fn sigma_over(values: &[f64], row: &[Count], total: f64, gamma: f64, variance: VarianceModel) -> f64 {
    if total <= 0.0 || gamma == 0.0 {
        return 0.0;
    }
    let sum: f64 = match variance {
        VarianceModel::TotalCount => {
            let var = variance.evaluate(0.0, total);
            var * row.iter().map(|c| values[c.successor].powi(2)).sum::<f64>()
        }
        VarianceModel::Beta => row
            .iter()
            .map(|c| variance.evaluate(c.total(), total) * values[c.successor].powi(2))
            .sum(),
    };
    gamma * sum.sqrt()
}

/// `R_o(s) + γ Σ_t Pr_m(s, t) V(t)`, or `None` without mentor data at `s`.
pub fn mentor_value(values: &[f64], mentor: &MentorModel, reward: f64, gamma: f64, s: usize) -> Option<f64> {
    mentor
        .has_data(s)
        .then(|| reward + gamma * mentor.expectation(s, |t| values[t]))
}

/// True iff the observer's lower bound strictly exceeds the mentor's.
#[inline]
pub fn supersedes(v_o: f64, sigma_o: f64, v_m: f64, sigma_m: f64, params: ConfidenceParams) -> bool {
    v_o - params.c * sigma_o > v_m - params.c * sigma_m
}

/// The observer's greedy action by expected value (lowest index on ties), its
/// value and its standard deviation.
pub fn observer_estimate(inputs: &BackupInputs, s: usize) -> (usize, f64, f64) {
    let observer = inputs.observer;
    let mut best = (0, f64::NEG_INFINITY);
    for a in 0..observer.action_count() {
        let e = observer.expectation(s, a, |t| inputs.values[t]);
        if e > best.1 {
            best = (a, e);
        }
    }
    let (a_star, expected) = best;
    let v_o = inputs.rewards[s] + inputs.gamma * expected;
    let sigma_o = sigma_over(
        inputs.values,
        observer.successors(s, a_star),
        observer.total(s, a_star),
        inputs.gamma,
        inputs.confidence.variance,
    );
    (a_star, v_o, sigma_o)
}

fn mentor_sigma(inputs: &BackupInputs, mentor: &MentorModel, s: usize) -> f64 {
    sigma_over(
        inputs.values,
        mentor.successors(s),
        mentor.total(s),
        inputs.gamma,
        inputs.confidence.variance,
    )
}

/// Picks the admitted mentor with the greatest mean value at `s`.
///
/// Mentors are compared by mean only; confidence enters solely in the test
/// against the observer.
fn best_admitted_mentor(
    inputs: &BackupInputs,
    s: usize,
    v_o: f64,
    sigma_o: f64,
    mut mentor_reward: impl FnMut(usize) -> Option<f64>,
    gate: &mut impl FnMut(MentorCandidate) -> bool,
) -> Option<MentorEstimate> {
    let mut best: Option<MentorEstimate> = None;
    for (m, model) in inputs.mentors.iter().enumerate() {
        if !model.has_data(s) {
            continue;
        }
        let Some(reward) = mentor_reward(m) else {
            continue;
        };
        let value = reward + inputs.gamma * model.expectation(s, |t| inputs.values[t]);
        let sigma = mentor_sigma(inputs, model, s);
        let candidate = MentorCandidate {
            mentor: m,
            value,
            sigma,
            observer_supersedes: supersedes(v_o, sigma_o, value, sigma, inputs.confidence),
        };
        if !gate(candidate) {
            continue;
        }
        if best.is_none_or(|b| value > b.value) {
            best = Some(MentorEstimate {
                mentor: m,
                value,
                sigma,
            });
        }
    }
    best
}

fn resolve(
    inputs: &BackupInputs,
    best_action: usize,
    v_o: f64,
    sigma_o: f64,
    mentor: Option<MentorEstimate>,
) -> BackupResult {
    let source = match mentor {
        Some(m) if !supersedes(v_o, sigma_o, m.value, m.sigma, inputs.confidence) => {
            Source::Mentor(m.mentor)
        }
        _ => Source::Observer,
    };
    let value = match (source, mentor) {
        (Source::Mentor(_), Some(m)) => m.value,
        _ => v_o,
    };
    BackupResult {
        value,
        source,
        best_action,
        v_o,
        sigma_o,
        mentor,
    }
}

/// Confidence-gated augmented backup at `s` over every mentor the gate admits.
///
/// With no admitted mentor this is exactly the standard Bellman backup on the
/// observer's expected model.
pub fn augmented_backup(
    inputs: &BackupInputs,
    s: usize,
    mut gate: impl FnMut(MentorCandidate) -> bool,
) -> BackupResult {
    let (a_star, v_o, sigma_o) = observer_estimate(inputs, s);
    let reward = inputs.rewards[s];
    let mentor = best_admitted_mentor(inputs, s, v_o, sigma_o, |_| Some(reward), &mut gate);
    resolve(inputs, a_star, v_o, sigma_o, mentor)
}

/// Augmented backup with action-dependent rewards `R_o(s, a)`.
///
/// The observer branch maximizes `R_o(s, a) + γ Σ Pr_o V`; a mentor branch is
/// charged `R_o(s, κ(s))` where `κ` is the closest observer action to that
/// mentor's chain. `inputs.rewards` is not consulted.
pub fn generalized_reward_backup(
    inputs: &BackupInputs,
    action_reward: impl Fn(usize, usize) -> f64,
    s: usize,
    mut gate: impl FnMut(MentorCandidate) -> bool,
) -> BackupResult {
    let observer = inputs.observer;
    let mut best = (0, f64::NEG_INFINITY);
    for a in 0..observer.action_count() {
        let q = action_reward(s, a) + inputs.gamma * observer.expectation(s, a, |t| inputs.values[t]);
        if q > best.1 {
            best = (a, q);
        }
    }
    let (a_star, v_o) = best;
    let sigma_o = sigma_over(
        inputs.values,
        observer.successors(s, a_star),
        observer.total(s, a_star),
        inputs.gamma,
        inputs.confidence.variance,
    );
    let mentor = best_admitted_mentor(
        inputs,
        s,
        v_o,
        sigma_o,
        |m| closest_action(observer, &inputs.mentors[m], s).map(|k| action_reward(s, k)),
        &mut gate,
    );
    resolve(inputs, a_star, v_o, sigma_o, mentor)
}

/// The observer action whose expected outcome distribution has the least
/// cross-entropy against the mentor's chain at `s`:
/// `argmin_a -Σ_t Pr_o(s, a, t) log Pr_m(s, t)`. Ties go to the lowest index.
///
/// `None` when the mentor has no data at `s`.
pub fn closest_action(observer: &ObserverModel, mentor: &MentorModel, s: usize) -> Option<usize> {
    if !mentor.has_data(s) {
        return None;
    }
    let mentor_total = mentor.total(s);
    let mentor_row = mentor.successors(s);
    let log_pm = |t: usize| {
        let n = mentor_row
            .iter()
            .find(|c| c.successor == t)
            .map_or(0.0, Count::total);
        (n / mentor_total).max(KL_FLOOR).ln()
    };
    let mut best = (0, f64::INFINITY);
    for a in 0..observer.action_count() {
        let total = observer.total(s, a);
        if total <= 0.0 {
            continue;
        }
        let cross: f64 = -observer
            .successors(s, a)
            .iter()
            .map(|c| c.total() / total * log_pm(c.successor))
            .sum::<f64>();
        if cross < best.1 {
            best = (a, cross);
        }
    }
    best.1.is_finite().then_some(best.0)
}
