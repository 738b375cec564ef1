mod common;

use parlsvi::agents::{
    polsvi_run, replay_covariances, rf_explore, rf_plan_detailed, rfmg_explore, rfmg_plan_detailed, AlgoParams,
    BetaRule,
};
use parlsvi::envs::{generate_random_mdp, generate_random_mg, Spec};
use parlsvi::matrix_game::{exploitability, solve, MatrixGame, DEFAULT_TOL};
use parlsvi::numerics::{detect_doubling, CovarianceState};
use parlsvi::oracle::{evaluate_policy, optimal_value, DeterministicPolicy, GameOracle, MixedPolicy, MixedPolicyPair};
use parlsvi::par::Execution;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn unit_ball(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, d).prop_map(|v| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1.0 {
            v.iter().map(|x| x / n).collect()
        } else {
            v
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_inverse_and_quadratic_form(
        lambda in 0.1f64..4.0,
        phis in prop::collection::vec(unit_ball(4), 1..80),
        probe in unit_ball(4),
    ) {
        let mut cov = CovarianceState::new(4, lambda).unwrap();
        let mut last = cov.quadratic_form(&probe).unwrap();
        let norm2: f64 = probe.iter().map(|x| x * x).sum();
        prop_assert!(last <= norm2 / lambda + 1e-12);
        for phi in &phis {
            cov.rank1_update(phi).unwrap();
            let q = cov.quadratic_form(&probe).unwrap();
            // more data never widens the bonus
            prop_assert!(q <= last + 1e-12);
            prop_assert!(q >= -1e-12);
            last = q;
        }
        let product = cov.matrix() * cov.inverse();
        let eye = nalgebra::DMatrix::<f64>::identity(4, 4);
        prop_assert!((product - eye).abs().max() < 1e-8);
    }

    #[test]
    fn repeated_direction_never_doubles(phi in unit_ball(3), n in 1usize..50) {
        let prev = CovarianceState::new(3, 1.0).unwrap();
        let mut next = prev.clone();
        for _ in 0..n {
            next.rank1_update(&phi).unwrap();
        }
        prop_assert!(!detect_doubling(&prev, &next).unwrap());
    }

    #[test]
    fn generated_specs_are_valid_and_round_trip(
        s in 2usize..6, a in 2usize..4, h in 2usize..5, seed in 0u64..1000, dfrac in 0.0f64..1.0,
    ) {
        let dim = 2 + ((s * a - 2) as f64 * dfrac) as usize;
        let spec = generate_random_mdp(s, a, h, dim, seed).unwrap();
        prop_assert!(spec.validate().is_valid());
        let kernel = spec.kernel();
        for hh in 0..h {
            for x in 0..s {
                for act in 0..a {
                    let row = kernel.row(hh, x, act);
                    prop_assert!(row.iter().all(|p| *p >= 0.0));
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-8);
                    let r = spec.reward(hh, x, act);
                    prop_assert!((0.0..=1.0).contains(&r));
                }
            }
        }
        let wrapped = Spec::Mdp(spec.clone());
        let back = Spec::from_json(&wrapped.to_json()).unwrap();
        prop_assert_eq!(back.content_hash(), wrapped.content_hash());
        prop_assert_eq!(back, wrapped);
        prop_assert_eq!(generate_random_mdp(s, a, h, dim, seed).unwrap(), spec);
    }

    #[test]
    fn optimal_value_dominates_every_policy(seed in 0u64..500, pseed in 0u64..500) {
        let spec = generate_random_mdp(4, 3, 3, 5, seed).unwrap();
        let reward = spec.reward_table();
        let (vstar, _) = optimal_value(&spec, &reward).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(pseed);
        let probs: Vec<f64> = (0..3 * 4).flat_map(|_| common::random_simplex(3, &mut rng)).collect();
        let pi = MixedPolicy::new(3, 4, 3, probs).unwrap();
        let v = evaluate_policy(&spec, &pi, &reward).unwrap();
        for h in 0..3 {
            for x in 0..4 {
                prop_assert!(vstar.get(h, x) + 1e-12 >= v.get(h, x));
                prop_assert!(vstar.get(h, x) <= (3 - h) as f64 + 1e-12);
                prop_assert!(v.get(h, x) >= -1e-12);
            }
        }
        let det = DeterministicPolicy::constant(3, 4, 3, (pseed % 3) as usize).unwrap();
        prop_assert!(vstar.get(0, 0) + 1e-12 >= evaluate_policy(&spec, &det, &reward).unwrap().get(0, 0));
    }

    #[test]
    fn best_responses_sandwich_any_pair(seed in 0u64..300, pseed in 0u64..300) {
        let mg = generate_random_mg(3, 2, 3, 3, 5, seed).unwrap();
        let reward = mg.joint().reward_table();
        let oracle = GameOracle::new(&mg);
        let (vnash, _) = oracle.nash(&reward, DEFAULT_TOL).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(pseed);
        let pi = MixedPolicy::new(3, 3, 2, (0..9).flat_map(|_| common::random_simplex(2, &mut rng)).collect()).unwrap();
        let nu = MixedPolicy::new(3, 3, 3, (0..9).flat_map(|_| common::random_simplex(3, &mut rng)).collect()).unwrap();
        let upper = oracle.best_response_p1(&nu, &reward).unwrap().1;
        let lower = oracle.best_response_p2(&pi, &reward).unwrap().1;
        let joint = oracle.evaluate(&MixedPolicyPair { pi, nu }, &reward).unwrap();
        for x in 0..3 {
            prop_assert!(upper.get(0, x) + 1e-9 >= vnash.get(0, x));
            prop_assert!(vnash.get(0, x) + 1e-9 >= lower.get(0, x));
            prop_assert!(upper.get(0, x) + 1e-9 >= joint.get(0, x));
            prop_assert!(joint.get(0, x) + 1e-9 >= lower.get(0, x));
        }
    }

    #[test]
    fn matrix_game_affine_and_antisymmetric_maps(
        entries in prop::collection::vec(-5.0f64..5.0, 12),
        scale in 0.1f64..10.0,
        shift in -10.0f64..10.0,
    ) {
        let game = MatrixGame::new(3, 4, entries.clone()).unwrap();
        let base = solve(&game, DEFAULT_TOL).unwrap();
        prop_assert!(base.exploitability <= DEFAULT_TOL * 10.0);
        prop_assert!(exploitability(&game, &base.row_strategy, &base.col_strategy).unwrap() >= 0.0);
        let affine = MatrixGame::new(3, 4, entries.iter().map(|v| scale * v + shift).collect()).unwrap();
        let a = solve(&affine, DEFAULT_TOL).unwrap();
        prop_assert!((a.value - (scale * base.value + shift)).abs() < 1e-6 * scale.max(1.0));
        // −Mᵀ swaps the players
        let mut neg_t = vec![0.0; 12];
        for i in 0..3 {
            for j in 0..4 {
                neg_t[j * 3 + i] = -entries[i * 4 + j];
            }
        }
        let swapped = solve(&MatrixGame::new(4, 3, neg_t).unwrap(), DEFAULT_TOL).unwrap();
        prop_assert!((swapped.value + base.value).abs() < 1e-6);
    }

    #[test]
    fn exploration_respects_clip_ranges_and_replays(
        seed in 0u64..100, beta in 0.0f64..3.0, k in 1usize..12, p in 1usize..6,
    ) {
        let spec = generate_random_mdp(4, 3, 3, 5, seed).unwrap();
        let params = AlgoParams::new(k, p, BetaRule::Fixed(beta), seed);
        let (ds, _) = rf_explore(&spec, &params).unwrap();
        let q = rf_plan_detailed(&ds, spec.features(), &spec.reward_table(), &ds.planning.unwrap()).unwrap();
        for h in 0..3 {
            for x in 0..4 {
                prop_assert!(q.q_row(h, x).iter().all(|v| *v <= 3.0));
            }
        }
        // Λ is a function of the data only: replay it in (k, p) order
        let replayed = replay_covariances(&ds, spec.features(), 1.0, k).unwrap();
        for (h, cov) in replayed.iter().enumerate() {
            let mut direct = nalgebra::DMatrix::<f64>::identity(5, 5);
            for t in ds.step(h) {
                let phi = nalgebra::DVector::from_column_slice(spec.phi(t.x, t.a));
                direct += &phi * phi.transpose();
            }
            prop_assert!((cov.matrix() - direct).abs().max() < 1e-9);
        }

        let mg = generate_random_mg(3, 2, 2, 3, 5, seed).unwrap();
        let (ds, _) = rfmg_explore(&mg, &params).unwrap();
        let plan = rfmg_plan_detailed(&ds, mg.joint().features(), &mg.joint().reward_table(), &ds.planning.unwrap()).unwrap();
        for h in 0..3 {
            prop_assert!(plan.q_upper[h].iter().chain(&plan.q_lower[h]).all(|v| (0.0..=3.0).contains(v)));
        }
    }

    #[test]
    fn sequential_and_parallel_runs_agree(seed in 0u64..50, p in 1usize..9) {
        let spec = generate_random_mdp(5, 3, 4, 6, seed).unwrap();
        let mut params = AlgoParams::new(6, p, BetaRule::Fixed(0.8), seed);
        params.execution = Execution::Sequential;
        let (log_s, ds_s) = polsvi_run(&spec, &params).unwrap();
        params.execution = Execution::Parallel;
        let (log_p, ds_p) = polsvi_run(&spec, &params).unwrap();
        prop_assert_eq!(log_s.to_csv().unwrap(), log_p.to_csv().unwrap());
        prop_assert_eq!(ds_s.to_json(), ds_p.to_json());
    }
}
