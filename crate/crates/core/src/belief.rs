//! Dirichlet count tables for the observer's action models and the mentors'
//! Markov chains.
//!
//! Every key (a `(state, action)` pair for the observer, a state for a mentor)
//! carries a sparse list of successors with a real prior pseudo-count and an
//! integer experience count. The Dirichlet parameter is their sum.

use std::io::{self, Write};

use crate::error::{Error, Result};

/// Which formula [`DirichletCountTable::model_variance`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceModel {
    /// `N / (N² + N + 1)` with `N` the key's total count. Independent of the
    /// successor.
    #[default]
    TotalCount,
    /// Marginal Beta variance `αβ / (N² (N + 1))`.
    Beta,
}

impl VarianceModel {
    /// Variance for a successor holding `alpha` of `total` counts.
    #[inline]
    pub fn evaluate(self, alpha: f64, total: f64) -> f64 {
        match self {
            VarianceModel::TotalCount => total / (total * total + total + 1.0),
            VarianceModel::Beta => {
                let beta = total - alpha;
                alpha * beta / (total * total * (total + 1.0))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Count {
    pub successor: usize,
    pub prior: f64,
    pub experience: u64,
}

impl Count {
    #[inline]
    pub fn total(&self) -> f64 {
        self.prior + self.experience as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletCountTable {
    entries: Vec<Vec<Count>>,
    totals: Vec<f64>,
    experience_totals: Vec<u64>,
}

impl DirichletCountTable {
    pub fn new(key_count: usize) -> Self {
        Self {
            entries: vec![Vec::new(); key_count],
            totals: vec![0.0; key_count],
            experience_totals: vec![0; key_count],
        }
    }

    pub fn key_count(&self) -> usize {
        self.entries.len()
    }

    /// Adds `pseudo_count` of prior mass on `successor` for `key`.
    pub fn add_prior(&mut self, key: usize, successor: usize, pseudo_count: f64) {
        assert!(pseudo_count >= 0.0, "negative prior {pseudo_count}");
        self.slot(key, successor).prior += pseudo_count;
        self.totals[key] += pseudo_count;
    }

    /// Records one experienced transition. Returns `true` if `successor` was
    /// not previously in the key's support.
    pub fn record(&mut self, key: usize, successor: usize) -> bool {
        let fresh = !self.entries[key].iter().any(|c| c.successor == successor);
        self.slot(key, successor).experience += 1;
        self.totals[key] += 1.0;
        self.experience_totals[key] += 1;
        fresh
    }

    fn slot(&mut self, key: usize, successor: usize) -> &mut Count {
        let row = &mut self.entries[key];
        let idx = match row.iter().position(|c| c.successor == successor) {
            Some(idx) => idx,
            None => {
                row.push(Count {
                    successor,
                    prior: 0.0,
                    experience: 0,
                });
                row.len() - 1
            }
        };
        &mut row[idx]
    }

    /// Successors with stored counts, in insertion order.
    #[inline]
    pub fn successors(&self, key: usize) -> &[Count] {
        &self.entries[key]
    }

    /// Dirichlet parameter `n(key, t)`.
    pub fn count(&self, key: usize, successor: usize) -> f64 {
        self.entries[key]
            .iter()
            .find(|c| c.successor == successor)
            .map_or(0.0, Count::total)
    }

    pub fn experience(&self, key: usize, successor: usize) -> u64 {
        self.entries[key]
            .iter()
            .find(|c| c.successor == successor)
            .map_or(0, |c| c.experience)
    }

    #[inline]
    pub fn total(&self, key: usize) -> f64 {
        self.totals[key]
    }

    #[inline]
    pub fn experience_total(&self, key: usize) -> u64 {
        self.experience_totals[key]
    }

    pub fn is_defined(&self, key: usize) -> bool {
        self.totals[key] > 0.0
    }

    /// `n(key, t) / Σ_t' n(key, t')`.
    pub fn expected_prob(&self, key: usize, successor: usize) -> Result<f64> {
        let total = self.defined_total(key)?;
        Ok(self.count(key, successor) / total)
    }

    /// Per-successor model variance under `model`.
    pub fn model_variance(&self, key: usize, successor: usize, model: VarianceModel) -> Result<f64> {
        let total = self.defined_total(key)?;
        Ok(model.evaluate(self.count(key, successor), total))
    }

    fn defined_total(&self, key: usize) -> Result<f64> {
        let total = self.totals[key];
        if total > 0.0 {
            Ok(total)
        } else {
            Err(Error::UndefinedModel(key))
        }
    }

    /// `Σ_t Pr(key, t) f(t)` over the stored support. Zero for an undefined key.
    #[inline]
    pub fn expectation(&self, key: usize, mut f: impl FnMut(usize) -> f64) -> f64 {
        let total = self.totals[key];
        if total <= 0.0 {
            return 0.0;
        }
        self.entries[key]
            .iter()
            .map(|c| c.total() * f(c.successor))
            .sum::<f64>()
            / total
    }

    /// Writes one `key successor prior experience` line per stored count.
    pub fn dump(&self, out: &mut impl Write) -> io::Result<()> {
        for (key, row) in self.entries.iter().enumerate() {
            let mut sorted: Vec<&Count> = row.iter().collect();
            sorted.sort_by_key(|c| c.successor);
            for c in sorted {
                writeln!(out, "{key} {} {} {}", c.successor, c.prior, c.experience)?;
            }
        }
        Ok(())
    }
}

/// One mentor transition seen by the observer. The mentor's action is never
/// part of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MentorObservation {
    pub mentor: usize,
    pub from: usize,
    pub to: usize,
}

/// The observer's estimates of its own action models, keyed by `(state, action)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverModel {
    table: DirichletCountTable,
    action_count: usize,
}

impl ObserverModel {
    pub fn new(state_count: usize, action_count: usize) -> Self {
        Self {
            table: DirichletCountTable::new(state_count * action_count),
            action_count,
        }
    }

    #[inline]
    pub fn key(&self, s: usize, a: usize) -> usize {
        s * self.action_count + a
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn state_count(&self) -> usize {
        self.table.key_count() / self.action_count
    }

    pub fn table(&self) -> &DirichletCountTable {
        &self.table
    }

    pub fn add_prior(&mut self, s: usize, a: usize, t: usize, pseudo_count: f64) {
        let key = self.key(s, a);
        self.table.add_prior(key, t, pseudo_count);
    }

    /// Increments `n(s, a, t)` by one. Returns whether `t` is a new successor.
    pub fn record(&mut self, s: usize, a: usize, t: usize) -> bool {
        let key = self.key(s, a);
        self.table.record(key, t)
    }

    pub fn expected_prob(&self, s: usize, a: usize, t: usize) -> Result<f64> {
        self.table.expected_prob(self.key(s, a), t)
    }

    pub fn model_variance(&self, s: usize, a: usize, t: usize, model: VarianceModel) -> Result<f64> {
        self.table.model_variance(self.key(s, a), t, model)
    }

    #[inline]
    pub fn successors(&self, s: usize, a: usize) -> &[Count] {
        self.table.successors(self.key(s, a))
    }

    #[inline]
    pub fn total(&self, s: usize, a: usize) -> f64 {
        self.table.total(self.key(s, a))
    }

    #[inline]
    pub fn experience_total(&self, s: usize, a: usize) -> u64 {
        self.table.experience_total(self.key(s, a))
    }

    #[inline]
    pub fn expectation(&self, s: usize, a: usize, f: impl FnMut(usize) -> f64) -> f64 {
        self.table.expectation(self.key(s, a), f)
    }
}

/// The observer's estimate of one mentor's Markov chain, keyed by state.
#[derive(Debug, Clone, PartialEq)]
pub struct MentorModel {
    table: DirichletCountTable,
}

impl MentorModel {
    pub fn new(state_count: usize) -> Self {
        Self {
            table: DirichletCountTable::new(state_count),
        }
    }

    pub fn table(&self) -> &DirichletCountTable {
        &self.table
    }

    pub fn add_prior(&mut self, s: usize, t: usize, pseudo_count: f64) {
        self.table.add_prior(s, t, pseudo_count);
    }

    pub fn record(&mut self, obs: &MentorObservation) -> bool {
        self.table.record(obs.from, obs.to)
    }

    pub fn expected_prob(&self, s: usize, t: usize) -> Result<f64> {
        self.table.expected_prob(s, t)
    }

    pub fn model_variance(&self, s: usize, t: usize, model: VarianceModel) -> Result<f64> {
        self.table.model_variance(s, t, model)
    }

    #[inline]
    pub fn successors(&self, s: usize) -> &[Count] {
        self.table.successors(s)
    }

    #[inline]
    pub fn total(&self, s: usize) -> f64 {
        self.table.total(s)
    }

    #[inline]
    pub fn experience_total(&self, s: usize) -> u64 {
        self.table.experience_total(s)
    }

    #[inline]
    pub fn has_data(&self, s: usize) -> bool {
        self.table.is_defined(s)
    }

    #[inline]
    pub fn expectation(&self, s: usize, f: impl FnMut(usize) -> f64) -> f64 {
        self.table.expectation(s, f)
    }
}
