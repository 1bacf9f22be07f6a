//! Performance curves, optimal goal rates and the fracture metric.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::gridworld::GridWorld;
use crate::mdp::{value_iteration, MdpModel, Policy, ValueTable};

/// Value-iteration tolerance for oracle solves.
pub const SOLVE_EPSILON: f64 = 1e-8;

/// Goals in the previous `window` steps, for every step. Early entries count
/// the partial prefix.
pub fn goal_rate_series(goals: &[bool], window: usize) -> Vec<u32> {
    let mut out = Vec::with_capacity(goals.len());
    let mut count = 0u32;
    for (i, &g) in goals.iter().enumerate() {
        count += g as u32;
        if window > 0 && i >= window && goals[i - window] {
            count -= 1;
        }
        out.push(count);
    }
    out
}

/// Pointwise mean of equal-length series.
pub fn mean_series<T: Copy + Into<f64>>(runs: &[Vec<T>]) -> Result<Vec<f64>> {
    let Some(first) = runs.first() else {
        return Ok(Vec::new());
    };
    let len = first.len();
    if runs.iter().any(|r| r.len() != len) {
        return Err(Error::usage("series lengths differ"));
    }
    let mut out = vec![0.0; len];
    for r in runs {
        for (o, &v) in out.iter_mut().zip(r) {
            *o += v.into();
        }
    }
    let n = runs.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

/// Observer minus control, pointwise.
pub fn delta_curve(observer: &[f64], control: &[f64]) -> Result<Vec<f64>> {
    if observer.len() != control.len() {
        return Err(Error::usage(format!(
            "delta of series with lengths {} and {}",
            observer.len(),
            control.len()
        )));
    }
    Ok(observer.iter().zip(control).map(|(o, c)| o - c).collect())
}

/// First step from which the series stays at or above `threshold`.
pub fn convergence_step(series: &[f64], threshold: f64) -> Option<usize> {
    let mut first = None;
    for (i, &v) in series.iter().enumerate() {
        if v >= threshold {
            first.get_or_insert(i);
        } else {
            first = None;
        }
    }
    first
}

/// First step at which the series reaches `threshold`.
pub fn first_reaching(series: &[f64], threshold: f64) -> Option<usize> {
    series.iter().position(|&v| v >= threshold)
}

/// Long-run goals per `per` steps when following `policy` from the start,
/// computed from the stationary distribution of the induced chain.
pub fn policy_goal_rate(world: &GridWorld, policy: &Policy, per: f64) -> f64 {
    let n = world.state_count();
    let rows: Vec<Vec<(usize, f64)>> = (0..n).map(|s| world.transition_row(s, policy.action(s))).collect();
    let mut dist = vec![0.0; n];
    dist[world.start()] = 1.0;
    let mut next = vec![0.0; n];
    // Lazy chain: same stationary distribution, no periodicity.
    for _ in 0..200_000 {
        next.iter_mut().zip(&dist).for_each(|(x, &d)| *x = 0.5 * d);
        for (s, row) in rows.iter().enumerate() {
            let half = 0.5 * dist[s];
            if half == 0.0 {
                continue;
            }
            for &(t, p) in row {
                next[t] += half * p;
            }
        }
        let change: f64 = next.iter().zip(&dist).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut dist, &mut next);
        if change < 1e-13 {
            break;
        }
    }
    per * world.map.goals().iter().map(|&g| dist[g]).sum::<f64>()
}

/// Solves `world` exactly.
pub fn solve_world(world: &GridWorld, gamma: f64) -> Result<(MdpModel, ValueTable, Policy)> {
    let model = world.true_model(gamma)?;
    let sol = value_iteration(&model, SOLVE_EPSILON)?;
    Ok((model, sol.values, sol.policy))
}

/// Goals per 1000 steps of the optimal policy.
pub fn optimal_goal_rate(world: &GridWorld, gamma: f64) -> Result<f64> {
    let (_, _, policy) = solve_world(world, gamma)?;
    Ok(policy_goal_rate(world, &policy, 1000.0))
}

/// Value of a fixed policy, by iterating its linear fixed point.
pub fn evaluate_policy(model: &MdpModel, policy: &Policy, tolerance: f64) -> Vec<f64> {
    let n = model.state_count();
    let gamma = model.discount();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    loop {
        let mut change = 0.0f64;
        for s in 0..n {
            let e: f64 = model.row(s, policy.action(s)).iter().map(|&(t, p)| p * v[t]).sum();
            next[s] = model.reward(s) + gamma * e;
            change = change.max((next[s] - v[s]).abs());
        }
        std::mem::swap(&mut v, &mut next);
        if change <= tolerance || gamma == 0.0 {
            return v;
        }
    }
}

/// Fracture of a pair of worlds, with its ingredients.
#[derive(Debug, Clone, PartialEq)]
pub struct Fracture {
    pub phi: f64,
    /// Disputed states in increasing order.
    pub disputed: Vec<usize>,
    /// Distance from each disputed state to the nearest undisputed one.
    pub distances: Vec<usize>,
}

/// Mean shortest-path distance from each disputed state to the nearest
/// undisputed state.
///
/// Both worlds are solved exactly; a state is disputed when the greedy moves
/// differ. Obstacles in either world are excluded. Paths follow transitions
/// of nonzero probability in the observer's world; a disputed state with no
/// path to an undisputed one counts as the graph diameter.
pub fn fracture(observer: &GridWorld, mentor: &GridWorld, gamma: f64) -> Result<Fracture> {
    let n = observer.state_count();
    if mentor.state_count() != n || mentor.map.width() != observer.map.width() {
        return Err(Error::usage("fracture needs worlds of the same shape"));
    }
    let (model, _, pi_o) = solve_world(observer, gamma)?;
    let (_, _, pi_m) = solve_world(mentor, gamma)?;
    let blocked = |s: usize| {
        observer.map.cell(s) == crate::gridworld::Cell::Obstacle
            || mentor.map.cell(s) == crate::gridworld::Cell::Obstacle
    };
    let states: Vec<usize> = (0..n).filter(|&s| !blocked(s)).collect();
    let mut is_disputed = vec![false; n];
    for &s in &states {
        let mo = observer.actions.moves[pi_o.action(s)];
        let mm = mentor.actions.moves[pi_m.action(s)];
        is_disputed[s] = mo != mm;
    }
    let disputed: Vec<usize> = states.iter().copied().filter(|&s| is_disputed[s]).collect();
    if disputed.is_empty() {
        return Ok(Fracture {
            phi: 0.0,
            disputed,
            distances: Vec::new(),
        });
    }
    let edges: Vec<Vec<usize>> = (0..n)
        .map(|s| {
            let mut out: Vec<usize> = (0..model.action_count())
                .flat_map(|a| model.row(s, a).iter().filter(|&&(_, p)| p > 0.0).map(|&(t, _)| t))
                .filter(|&t| t != s && !blocked(t))
                .collect();
            out.sort_unstable();
            out.dedup();
            out
        })
        .collect();
    let bfs = |from: usize| {
        let mut dist = vec![usize::MAX; n];
        dist[from] = 0;
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            for &t in &edges[u] {
                if dist[t] == usize::MAX {
                    dist[t] = dist[u] + 1;
                    queue.push_back(t);
                }
            }
        }
        dist
    };
    let mut diameter = None;
    let mut distances = Vec::with_capacity(disputed.len());
    for &s in &disputed {
        let dist = bfs(s);
        let nearest = states
            .iter()
            .filter(|&&u| !is_disputed[u] && dist[u] != usize::MAX)
            .map(|&u| dist[u])
            .min();
        let d = match nearest {
            Some(d) => d,
            None => *diameter.get_or_insert_with(|| {
                states
                    .iter()
                    .flat_map(|&u| bfs(u).into_iter().filter(|&d| d != usize::MAX))
                    .max()
                    .unwrap_or(0)
            }),
        };
        distances.push(d);
    }
    let phi = distances.iter().sum::<usize>() as f64 / distances.len() as f64;
    Ok(Fracture {
        phi,
        disputed,
        distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{scenario, ActionSet, CellRewards, GridMap, NoiseModel};

    #[test]
    fn window_arithmetic() {
        let mut goals = vec![false; 2000];
        goals[10] = true;
        let s = goal_rate_series(&goals, 1000);
        assert_eq!(s[9], 0);
        assert!(s[10..1010].iter().all(|&v| v == 1));
        assert_eq!(s[1010], 0);
    }

    #[test]
    fn periodic_goals_steady_state() {
        let goals: Vec<bool> = (0..5000).map(|i| i % 100 == 99).collect();
        let s = goal_rate_series(&goals, 1000);
        assert_eq!(s[4999], 10);
    }

    #[test]
    fn delta_subtracts() {
        assert_eq!(delta_curve(&[2.0, 4.0], &[1.0, 1.0]).unwrap(), vec![1.0, 3.0]);
        assert!(delta_curve(&[1.0], &[]).is_err());
    }

    #[test]
    fn convergence_requires_staying_above() {
        let s = [0.0, 5.0, 1.0, 5.0, 6.0];
        assert_eq!(convergence_step(&s, 4.0), Some(3));
        assert_eq!(first_reaching(&s, 4.0), Some(1));
        assert_eq!(convergence_step(&s, 7.0), None);
    }

    #[test]
    fn deterministic_corridor_rate() {
        let map = GridMap::parse("S...X\n", &CellRewards::default()).unwrap();
        let world = GridWorld::new(map, ActionSet::news(), NoiseModel::new(0.0).unwrap());
        // Four moves plus the reset step per goal.
        let rate = optimal_goal_rate(&world, 0.9).unwrap();
        assert!((rate - 200.0).abs() < 1e-6, "{rate}");
    }

    #[test]
    fn identical_worlds_have_no_fracture() {
        let sc = scenario("exp1_basic").unwrap();
        let f = fracture(&sc.observer, &sc.observer, 0.9).unwrap();
        assert_eq!(f.phi, 0.0);
    }

    #[test]
    fn disputed_states_next_to_agreement() {
        let rewards = CellRewards::default();
        let world = |text: &str| {
            GridWorld::new(
                GridMap::parse(text, &rewards).unwrap(),
                ActionSet::news(),
                NoiseModel::new(0.1).unwrap(),
            )
        };
        // The goals differ, so the agents disagree on the two right cells.
        let f = fracture(&world("S.X\n"), &world("SX.\n"), 0.9).unwrap();
        assert_eq!(f.disputed, vec![1, 2]);
        assert_eq!(f.phi, 1.0);
    }
}
