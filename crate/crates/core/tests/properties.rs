use implicit_imitation::belief::{DirichletCountTable, VarianceModel};
use implicit_imitation::gridworld::{scenario, ActionSet, CellRewards, GridMap, GridWorld, NoiseModel};
use implicit_imitation::mdp::{greedy_policy, q_value, value_iteration, MdpModel};
use implicit_imitation::metrics::{convergence_step, fracture, goal_rate_series};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arb_mdp() -> impl Strategy<Value = MdpModel> {
    (1usize..=6, 1usize..=3).prop_flat_map(|(n, m)| {
        let rows = prop::collection::vec(prop::collection::vec(0.01f64..1.0, n), n * m);
        let rewards = prop::collection::vec(-1.0f64..1.0, n);
        (Just(n), Just(m), rows, rewards, 0.0f64..0.95).prop_map(|(n, m, weights, rewards, gamma)| {
            let rows = weights
                .into_iter()
                .map(|w| {
                    let total: f64 = w.iter().sum();
                    w.into_iter().enumerate().map(|(t, x)| (t, x / total)).collect()
                })
                .collect();
            MdpModel::new(n, m, rows, rewards, gamma).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn value_iteration_is_a_near_fixed_point(model in arb_mdp()) {
        let sol = value_iteration(&model, 1e-6).unwrap();
        let policy = greedy_policy(&model, &sol.values);
        for s in 0..model.state_count() {
            let best = (0..model.action_count())
                .map(|a| q_value(&model, &sol.values, s, a).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((best - sol.values.get(s)).abs() < 1e-5);
            let chosen = q_value(&model, &sol.values, s, policy.action(s)).unwrap();
            prop_assert_eq!(chosen, best);
            for a in 0..policy.action(s) {
                prop_assert!(q_value(&model, &sol.values, s, a).unwrap() < best);
            }
        }
    }

    #[test]
    fn dirichlet_means_form_a_distribution(
        prior in 0.0f64..3.0,
        obs in prop::collection::vec(0usize..5, 1..60),
    ) {
        let mut t = DirichletCountTable::new(1);
        for succ in 0..5 {
            t.add_prior(0, succ, prior);
        }
        for &succ in &obs {
            t.record(0, succ);
        }
        let sum: f64 = (0..5).map(|succ| t.expected_prob(0, succ).unwrap()).sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert_eq!(t.experience_total(0), obs.len() as u64);
        for succ in 0..5 {
            for model in [VarianceModel::TotalCount, VarianceModel::Beta] {
                let v = t.model_variance(0, succ, model).unwrap();
                prop_assert!(v >= 0.0 && v.is_finite());
            }
        }
    }

    #[test]
    fn goal_rate_series_is_a_sliding_count(
        goals in prop::collection::vec(any::<bool>(), 1..400),
        window in 1usize..50,
    ) {
        let series = goal_rate_series(&goals, window);
        prop_assert_eq!(series.len(), goals.len());
        for (i, &v) in series.iter().enumerate() {
            let lo = (i + 1).saturating_sub(window);
            let direct = goals[lo..=i].iter().filter(|&&g| g).count() as u32;
            prop_assert_eq!(v, direct);
        }
    }

    #[test]
    fn convergence_step_stays_above(series in prop::collection::vec(0.0f64..10.0, 1..200), thr in 0.0f64..10.0) {
        match convergence_step(&series, thr) {
            Some(i) => {
                prop_assert!(series[i..].iter().all(|&v| v >= thr));
                prop_assert!(i == 0 || series[i - 1] < thr);
            }
            None => prop_assert!(*series.last().unwrap() < thr),
        }
    }

    #[test]
    fn sampled_steps_follow_transition_rows(eta in 0.0f64..0.5, x in 0usize..5, y in 0usize..4, a in 0usize..4, skew in any::<bool>()) {
        let text = "S....\n.#...\n.....\n...#X\n";
        let actions = if skew { ActionSet::skew() } else { ActionSet::news() };
        let world = GridWorld::new(
            GridMap::parse(text, &CellRewards::default()).unwrap(),
            actions,
            NoiseModel::new(eta).unwrap(),
        );
        let s = world.map.index(x, y);
        prop_assume!(world.map.cell(s).symbol() != '#');
        let row = world.transition_row(s, a);
        let total: f64 = row.iter().map(|e| e.1).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64((x * 31 + y * 7 + a) as u64);
        let n = 4000;
        let mut freq = vec![0usize; world.state_count()];
        for _ in 0..n {
            freq[world.step(s, a, &mut rng).next] += 1;
        }
        for t in 0..world.state_count() {
            let p = row.iter().filter(|e| e.0 == t).map(|e| e.1).sum::<f64>();
            let f = freq[t] as f64 / n as f64;
            // Five binomial standard deviations.
            let tol = 5.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-9;
            prop_assert!((f - p).abs() <= tol, "t={} f={} p={}", t, f, p);
        }
    }
}

#[test]
fn fracture_is_zero_for_identical_worlds_and_at_least_one_otherwise() {
    for name in ["fracture_a", "fracture_b", "fracture_c", "fracture_d", "het1_skew", "river"] {
        let sc = scenario(name).unwrap();
        let own = fracture(&sc.observer, &sc.observer, sc.gamma()).unwrap();
        assert_eq!(own.phi, 0.0);
        assert!(own.disputed.is_empty());
        let f = fracture(&sc.observer, &sc.mentors[0].world, sc.gamma()).unwrap();
        if !f.disputed.is_empty() {
            assert!(f.phi >= 1.0, "{name}: {}", f.phi);
            assert!(f.distances.iter().all(|&d| d >= 1));
        }
    }
}
