mod common;

use common::*;
use nalgebra::DMatrix;
use parlsvi::agents::BetaRule;
use parlsvi::envs::{generate_random_mdp, LinearMdpSpec, RewardTable};
use parlsvi::matrix_game::{exploitability, solve, MatrixGame, DEFAULT_TOL};
use parlsvi::numerics::{doubling_count_bound, CovarianceState};
use parlsvi::oracle::{evaluate_policy, nash_value_backward, optimal_value, subopt_mg, DeterministicPolicy, GameOracle, MixedPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn solver_matches_vertex_enumeration_on_real_games() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let rows = rng.random_range(1..=4);
        let cols = rng.random_range(1..=5);
        let m: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let game = MatrixGame::from_rows(&m).unwrap();
        let sol = solve(&game, DEFAULT_TOL).unwrap();
        let reference = vertex_enumeration_value(&m);
        assert!((sol.value - reference).abs() < 1e-7, "{m:?}: {} vs {reference}", sol.value);
        assert!(exploitability(&game, &sol.row_strategy, &sol.col_strategy).unwrap() <= 1e-7);
    }
}

#[test]
fn optimal_value_matches_policy_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let (s, a, hz) = (rng.random_range(2..=3), 2, rng.random_range(2..=3));
        let (t, r) = random_tabular(s, a, hz, &mut rng);
        let spec = LinearMdpSpec::tabular(s, a, hz, &t, &r, 0).unwrap();
        let reward = spec.reward_table();
        let (v, policy) = optimal_value(&spec, &reward).unwrap();
        for x0 in 0..s {
            let brute = brute_force_optimum(&spec, &reward, x0);
            assert!((v.get(0, x0) - brute).abs() < 1e-12);
        }
        // the returned argmax policy attains the optimum
        let attained = forward_value(&spec, &reward, 0, |h, x| {
            let mut e = vec![0.0; a];
            e[policy.action(h, x)] = 1.0;
            e
        });
        assert!((attained - v.get(0, 0)).abs() < 1e-12);
    }
}

#[test]
fn evaluation_matches_forward_propagation_on_linear_specs() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for seed in 0..10 {
        let spec = generate_random_mdp(5, 3, 4, 6, seed).unwrap();
        let reward = spec.reward_table();
        let probs: Vec<f64> = (0..4 * 5).flat_map(|_| random_simplex(3, &mut rng)).collect();
        let pi = MixedPolicy::new(4, 5, 3, probs).unwrap();
        let v = evaluate_policy(&spec, &pi, &reward).unwrap();
        for x0 in 0..5 {
            let fwd = forward_value(&spec, &reward, x0, |h, x| pi.dist(h, x).to_vec());
            assert!((v.get(0, x0) - fwd).abs() < 1e-12);
        }
    }
}

#[test]
fn best_responses_match_brute_force_over_pure_opponents() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let (s, na, nb, hz) = (2, 2, 2, 2);
        let mg = random_tabular_mg(s, na, nb, hz, &mut rng);
        let reward = mg.joint().reward_table();
        let pi = MixedPolicy::new(hz, s, na, (0..hz * s).flat_map(|_| random_simplex(na, &mut rng)).collect()).unwrap();
        let oracle = GameOracle::new(&mg);
        let (_, v) = oracle.best_response_p2(&pi, &reward).unwrap();
        // enumerate every deterministic Player 2 policy
        let mut worst = f64::INFINITY;
        for code in 0..nb.pow((s * hz) as u32) {
            let nu = DeterministicPolicy::new(hz, s, nb, (0..s * hz).map(|i| (code >> i) & 1).collect()).unwrap();
            let val = forward_value(mg.joint(), &reward, 0, |h, x| {
                let mut e = vec![0.0; nb];
                e[nu.action(h, x)] = 1.0;
                product(pi.dist(h, x), &e)
            });
            worst = worst.min(val);
        }
        assert!((v.get(0, 0) - worst).abs() < 1e-12);
    }
}

#[test]
fn one_step_nash_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let mg = random_tabular_mg(3, 3, 2, 1, &mut rng);
        let reward = mg.joint().reward_table();
        let (v, pair) = nash_value_backward(&mg, &reward).unwrap();
        for x in 0..3 {
            let m: Vec<Vec<f64>> = (0..3).map(|a| (0..2).map(|b| reward.get(0, x, a * 2 + b)).collect()).collect();
            assert!((v.get(0, x) - vertex_enumeration_value(&m)).abs() < 1e-8);
        }
        assert!(subopt_mg(&mg, &pair, &reward).unwrap() <= 1e-7);
    }
}

#[test]
fn maintained_inverse_matches_direct_inversion() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let d = 5;
    let mut cov = CovarianceState::new(d, 0.5).unwrap();
    let mut direct = DMatrix::identity(d, d) * 0.5;
    for _ in 0..600 {
        let mut phi: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = phi.iter().map(|v| v * v).sum::<f64>().sqrt();
        phi.iter_mut().for_each(|v| *v /= n.max(1.0));
        cov.rank1_update(&phi).unwrap();
        let col = DMatrix::from_column_slice(d, 1, &phi);
        direct += &col * col.transpose();
    }
    let inv = direct.clone().try_inverse().unwrap();
    assert!((cov.inverse() - &inv).abs().max() < 1e-9);
    assert!((cov.logdet() - direct.determinant().ln()).abs() < 1e-9);
}

#[test]
fn closed_form_constants() {
    let iota = (6.0f64 * 100.0 * 4.0 * 16.0 / 0.05).ln();
    let beta = BetaRule::Derived { c_beta: 0.5, delta: 0.05 }.resolve(6, 4, 100, 16).unwrap();
    assert!((beta - 0.5 * 6.0 * 4.0 * iota.sqrt()).abs() < 1e-12);
    let bound = doubling_count_bound(6, 4, 1600, 1.0);
    assert!((bound - 24.0 * (1.0 + 1600.0 / 6.0f64).log2()).abs() < 1e-9);
}

#[test]
fn reward_linearity_of_evaluation() {
    let spec = generate_random_mdp(4, 2, 3, 5, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r1: Vec<f64> = (0..3 * 4 * 2).map(|_| rng.random_range(0.0..0.5)).collect();
    let r2: Vec<f64> = (0..3 * 4 * 2).map(|_| rng.random_range(0.0..0.5)).collect();
    let sum: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| a + b).collect();
    let t = |v: Vec<f64>| RewardTable::new(3, 4, 2, v).unwrap();
    let pi = MixedPolicy::uniform(3, 4, 2);
    let v1 = evaluate_policy(&spec, &pi, &t(r1)).unwrap();
    let v2 = evaluate_policy(&spec, &pi, &t(r2)).unwrap();
    let vs = evaluate_policy(&spec, &pi, &t(sum)).unwrap();
    for x in 0..4 {
        assert!((vs.get(0, x) - v1.get(0, x) - v2.get(0, x)).abs() < 1e-12);
    }
}
