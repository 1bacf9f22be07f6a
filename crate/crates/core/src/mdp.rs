//! Exact-model MDPs and the dynamic-programming primitives built on them.
//!
//! Rewards are attached to states: `Q(s, a) = R(s) + γ Σ_t Pr(s, a, t) V(t)`.

use crate::error::{Error, Result};

const ROW_SUM_TOLERANCE: f64 = 1e-9;
const MAX_SWEEPS: usize = 1_000_000;

/// A sparse successor distribution: `(successor, probability)` pairs.
pub type Row = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct MdpModel {
    state_count: usize,
    action_count: usize,
    /// Indexed by `s * action_count + a`.
    rows: Vec<Row>,
    rewards: Vec<f64>,
    discount: f64,
}

impl MdpModel {
    /// Builds a model from per-(state, action) rows, validating every row.
    ///
    /// Duplicate successors within a row are merged.
    pub fn new(
        state_count: usize,
        action_count: usize,
        rows: Vec<Row>,
        rewards: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if state_count == 0 || action_count == 0 {
            return Err(Error::InvalidModel("empty state or action space".into()));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidModel(format!("discount {discount} not in [0, 1)")));
        }
        if rows.len() != state_count * action_count {
            return Err(Error::InvalidModel(format!(
                "expected {} rows, got {}",
                state_count * action_count,
                rows.len()
            )));
        }
        if rewards.len() != state_count {
            return Err(Error::InvalidModel(format!(
                "expected {state_count} rewards, got {}",
                rewards.len()
            )));
        }
        if let Some(r) = rewards.iter().find(|r| !r.is_finite()) {
            return Err(Error::InvalidModel(format!("non-finite reward {r}")));
        }
        let mut merged = Vec::with_capacity(rows.len());
        for (idx, row) in rows.into_iter().enumerate() {
            let (s, a) = (idx / action_count, idx % action_count);
            let mut out: Row = Vec::with_capacity(row.len());
            for (t, p) in row {
                if t >= state_count {
                    return Err(Error::InvalidModel(format!(
                        "row ({s}, {a}) names successor {t} outside the state space"
                    )));
                }
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidModel(format!(
                        "row ({s}, {a}) has probability {p} outside [0, 1]"
                    )));
                }
                match out.iter_mut().find(|(u, _)| *u == t) {
                    Some(slot) => slot.1 += p,
                    None => out.push((t, p)),
                }
            }
            out.retain(|&(_, p)| p > 0.0);
            out.sort_by_key(|&(t, _)| t);
            let sum: f64 = out.iter().map(|&(_, p)| p).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidModel(format!(
                    "row ({s}, {a}) sums to {sum}"
                )));
            }
            merged.push(out);
        }
        Ok(Self {
            state_count,
            action_count,
            rows: merged,
            rewards,
            discount,
        })
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn reward(&self, s: usize) -> f64 {
        self.rewards[s]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn row(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.rows[s * self.action_count + a]
    }

    pub fn probability(&self, s: usize, a: usize, t: usize) -> f64 {
        self.row(s, a)
            .iter()
            .find(|&&(u, _)| u == t)
            .map_or(0.0, |&(_, p)| p)
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s >= self.state_count {
            return Err(Error::StateOutOfRange {
                state: s,
                count: self.state_count,
            });
        }
        Ok(())
    }

    fn check_action(&self, a: usize) -> Result<()> {
        if a >= self.action_count {
            return Err(Error::ActionOutOfRange {
                action: a,
                count: self.action_count,
            });
        }
        Ok(())
    }

    fn check_values(&self, values: &ValueTable) -> Result<()> {
        if values.len() != self.state_count {
            return Err(Error::usage(format!(
                "value table has {} entries for {} states",
                values.len(),
                self.state_count
            )));
        }
        Ok(())
    }

    #[inline]
    fn q_unchecked(&self, values: &[f64], s: usize, a: usize) -> f64 {
        let expected: f64 = self.row(s, a).iter().map(|&(t, p)| p * values[t]).sum();
        self.rewards[s] + self.discount * expected
    }

    #[inline]
    fn backup_unchecked(&self, values: &[f64], s: usize) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for a in 0..self.action_count {
            let q = self.q_unchecked(values, s, a);
            if q > best.0 {
                best = (q, a);
            }
        }
        best
    }
}

/// The estimated or exact value of every state.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable(Vec<f64>);

impl ValueTable {
    pub fn zeros(state_count: usize) -> Self {
        Self(vec![0.0; state_count])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, s: usize) -> f64 {
        self.0[s]
    }

    pub fn set(&mut self, s: usize, v: f64) {
        self.0[s] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Largest absolute componentwise difference.
    pub fn sup_distance(&self, other: &ValueTable) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A deterministic stationary policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy(Vec<usize>);

impl Policy {
    pub fn from_vec(actions: Vec<usize>) -> Self {
        Self(actions)
    }

    pub fn action(&self, s: usize) -> usize {
        self.0[s]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// `R(s) + γ Σ_t Pr(s, a, t) V(t)`.
pub fn q_value(model: &MdpModel, values: &ValueTable, s: usize, a: usize) -> Result<f64> {
    model.check_state(s)?;
    model.check_action(a)?;
    model.check_values(values)?;
    Ok(model.q_unchecked(values.as_slice(), s, a))
}

/// One Bellman backup at `s`: the best Q-value and the lowest-index action attaining it.
pub fn bellman_backup(model: &MdpModel, values: &ValueTable, s: usize) -> Result<(f64, usize)> {
    model.check_state(s)?;
    model.check_values(values)?;
    Ok(model.backup_unchecked(values.as_slice(), s))
}

/// Greedy policy with respect to `values`; ties go to the lowest action index.
pub fn greedy_policy(model: &MdpModel, values: &ValueTable) -> Policy {
    Policy(
        (0..model.state_count)
            .map(|s| model.backup_unchecked(values.as_slice(), s).1)
            .collect(),
    )
}

/// Outcome of [`value_iteration`].
#[derive(Debug, Clone)]
pub struct Solution {
    pub values: ValueTable,
    pub policy: Policy,
    pub sweeps: usize,
}

/// Synchronous value iteration from `V = 0`.
///
/// Stops once the sup-norm change of a sweep is at most `epsilon (1 - γ) / (2γ)`,
/// which bounds the greedy policy's loss by `epsilon`. With `γ = 0` a single
/// sweep is exact.
pub fn value_iteration(model: &MdpModel, epsilon: f64) -> Result<Solution> {
    if !(epsilon > 0.0) {
        return Err(Error::usage(format!("epsilon must be positive, got {epsilon}")));
    }
    let gamma = model.discount;
    let threshold = if gamma > 0.0 {
        epsilon * (1.0 - gamma) / (2.0 * gamma)
    } else {
        f64::INFINITY
    };
    let mut current = vec![0.0; model.state_count];
    let mut next = vec![0.0; model.state_count];
    for sweep in 1..=MAX_SWEEPS {
        let mut delta: f64 = 0.0;
        for (s, slot) in next.iter_mut().enumerate() {
            let (v, _) = model.backup_unchecked(&current, s);
            delta = delta.max((v - current[s]).abs());
            *slot = v;
        }
        std::mem::swap(&mut current, &mut next);
        if delta <= threshold {
            let values = ValueTable(current);
            let policy = greedy_policy(model, &values);
            return Ok(Solution {
                values,
                policy,
                sweeps: sweep,
            });
        }
    }
    Err(Error::NoConvergence(MAX_SWEEPS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// s0 -> s1 with certainty, s1 absorbing, R = (0, 1).
    fn chain(gamma: f64) -> MdpModel {
        MdpModel::new(2, 1, vec![vec![(1, 1.0)], vec![(1, 1.0)]], vec![0.0, 1.0], gamma).unwrap()
    }

    #[test]
    fn discount_zero_q_is_reward() {
        let m = MdpModel::new(
            2,
            2,
            vec![vec![(1, 1.0)], vec![(0, 0.5), (1, 0.5)], vec![(0, 1.0)], vec![(1, 1.0)]],
            vec![3.0, -2.0],
            0.0,
        )
        .unwrap();
        let v = ValueTable::from_vec(vec![100.0, 50.0]);
        for s in 0..2 {
            for a in 0..2 {
                assert_eq!(q_value(&m, &v, s, a).unwrap(), m.reward(s));
            }
        }
    }

    #[test]
    fn chain_q_value() {
        let v = ValueTable::from_vec(vec![0.0, 10.0]);
        assert_abs_diff_eq!(q_value(&chain(0.9), &v, 0, 0).unwrap(), 9.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_two_successors() {
        let m = MdpModel::new(
            2,
            1,
            vec![vec![(0, 0.5), (1, 0.5)], vec![(1, 1.0)]],
            vec![0.0, 0.0],
            0.5,
        )
        .unwrap();
        let v = ValueTable::from_vec(vec![4.0, 6.0]);
        assert_abs_diff_eq!(q_value(&m, &v, 0, 0).unwrap(), 2.5, epsilon = 1e-12);
    }

    #[test]
    fn out_of_range_is_usage_error() {
        let m = chain(0.9);
        let v = ValueTable::zeros(2);
        assert!(matches!(q_value(&m, &v, 2, 0), Err(Error::StateOutOfRange { .. })));
        assert!(matches!(q_value(&m, &v, 0, 1), Err(Error::ActionOutOfRange { .. })));
        assert!(bellman_backup(&m, &v, 5).is_err());
    }

    #[test]
    fn backup_single_action_and_ties() {
        let v = ValueTable::from_vec(vec![0.0, 10.0]);
        assert_eq!(bellman_backup(&chain(0.9), &v, 0).unwrap(), (9.0, 0));

        let m = MdpModel::new(
            2,
            3,
            vec![
                vec![(0, 1.0)],
                vec![(1, 1.0)],
                vec![(1, 1.0)],
                vec![(1, 1.0)],
                vec![(1, 1.0)],
                vec![(1, 1.0)],
            ],
            vec![0.0, 0.0],
            0.9,
        )
        .unwrap();
        let v = ValueTable::from_vec(vec![0.0, 1.0]);
        assert_eq!(bellman_backup(&m, &v, 0).unwrap().1, 1);
    }

    #[test]
    fn zero_rewards_converge_immediately() {
        let m = MdpModel::new(
            3,
            2,
            vec![vec![(1, 1.0)]; 6],
            vec![0.0; 3],
            0.95,
        )
        .unwrap();
        let sol = value_iteration(&m, 1e-6).unwrap();
        assert_eq!(sol.sweeps, 1);
        assert!(sol.values.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn chain_value_iteration_matches_closed_form() {
        let sol = value_iteration(&chain(0.9), 1e-6).unwrap();
        assert_abs_diff_eq!(sol.values.get(0), 9.0, epsilon = 1e-5);
        assert_abs_diff_eq!(sol.values.get(1), 10.0, epsilon = 1e-5);
    }

    #[test]
    fn discount_zero_single_sweep() {
        let sol = value_iteration(&chain(0.0), 1e-6).unwrap();
        assert_eq!(sol.sweeps, 1);
        assert_eq!(sol.values.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn rejects_bad_models() {
        assert!(MdpModel::new(1, 1, vec![vec![(0, 0.5)]], vec![0.0], 0.9).is_err());
        assert!(MdpModel::new(1, 1, vec![vec![(0, 1.0)]], vec![0.0], 1.0).is_err());
        assert!(MdpModel::new(1, 1, vec![vec![(1, 1.0)]], vec![0.0], 0.5).is_err());
        assert!(value_iteration(&chain(0.5), 0.0).is_err());
    }

    #[test]
    fn duplicate_successors_merge() {
        let m = MdpModel::new(1, 1, vec![vec![(0, 0.25), (0, 0.75)]], vec![0.0], 0.5).unwrap();
        assert_eq!(m.row(0, 0), &[(0, 1.0)]);
    }
}
