use super::runlog::metric;
use super::{
    agent_rng, backward_pass, AlgoParams, ClipMode, DatasetKind, PlanningParams, QEstimate, RunLog, StepStats,
    TrajectoryDataset, Transition, Variant,
};
use crate::envs::{FeatureMap, LinearMdpSpec, LinearMgSpec, RewardTable, TransitionKernel};
use crate::error::{Error, Result};
use crate::numerics::{detect_doubling, CovarianceState};
use crate::oracle::{clamp_gap, Oracle};

/// Slack allowed on the optimism event `V₁*(s₀, r^k) ≤ V₁^k(s₀)`.
pub const OPTIMISM_SLACK: f64 = 1e-9;

/// Online parallel optimistic LSVI. Every agent rolls out the greedy policy
/// of the same `Q^k`; the log carries per-`(k, p)` gaps, cumulative regret
/// and per-`(k, h)` doubling flags.
pub fn polsvi_run(spec: &LinearMdpSpec, params: &AlgoParams) -> Result<(RunLog, TrajectoryDataset)> {
    explore(spec, None, Variant::Online, params)
}

/// Reward-free exploration on a linear MDP.
pub fn rf_explore(spec: &LinearMdpSpec, params: &AlgoParams) -> Result<(TrajectoryDataset, RunLog)> {
    let (log, ds) = explore(spec, None, Variant::RewardFree(ClipMode::Upper), params)?;
    Ok((ds, log))
}

/// Reward-free exploration on a linear Markov game; the greedy step is over
/// joint actions and Q-values are clipped to `[0, H]`.
pub fn rfmg_explore(spec: &LinearMgSpec, params: &AlgoParams) -> Result<(TrajectoryDataset, RunLog)> {
    let split = Some((spec.n_actions_p1(), spec.n_actions_p2()));
    let (log, ds) = explore(spec.joint(), split, Variant::RewardFree(ClipMode::TwoSided), params)?;
    Ok((ds, log))
}

struct Rollout<'a> {
    features: &'a FeatureMap,
    kernel: &'a TransitionKernel,
    env_reward: &'a RewardTable,
    q: &'a QEstimate,
    initial_state: usize,
    split: Option<(usize, usize)>,
}

impl Rollout<'_> {
    fn run(&self, seed: u64, k: usize, p: usize) -> Vec<Transition> {
        let mut rng = agent_rng(seed, k, p);
        let mut x = self.initial_state;
        (0..self.q.horizon())
            .map(|h| {
                let a = self.q.greedy(h, x);
                let x_next = self.kernel.sample(h, x, a, &mut rng);
                let r = self.q.reward(h, x, a).unwrap_or_else(|| self.env_reward.get(h, x, a));
                let (a1, b) = match self.split {
                    Some((_, nb)) => (a / nb, Some(a % nb)),
                    None => (a, None),
                };
                let t = Transition {
                    x,
                    a: a1,
                    b,
                    r,
                    x_next,
                };
                x = x_next;
                t
            })
            .collect()
    }
}

fn explore(
    spec: &LinearMdpSpec,
    split: Option<(usize, usize)>,
    variant: Variant,
    params: &AlgoParams,
) -> Result<(RunLog, TrajectoryDataset)> {
    params.validate()?;
    let (horizon, s0) = (spec.horizon(), spec.initial_state());
    let features = spec.features();
    let beta = params.resolve_beta(spec.dim(), horizon)?;
    let kernel = spec.kernel();
    let env_reward = spec.reward_table();
    let oracle = params.oracle_eval.then(|| Oracle::new(spec));
    let v_star = match (&oracle, variant) {
        (Some(o), Variant::Online) => Some(o.optimal_value_at(&env_reward, s0)?),
        _ => None,
    };

    let (kind, n_actions, n_actions_p2) = match split {
        Some((na, nb)) => (DatasetKind::Mg, na, Some(nb)),
        None => (DatasetKind::Mdp, spec.n_actions(), None),
    };
    let mut dataset = TrajectoryDataset::new(
        kind,
        params.episodes,
        params.agents,
        horizon,
        spec.n_states(),
        n_actions,
        n_actions_p2,
    )?;
    dataset.features = Some(features.clone());
    dataset.planning = Some(PlanningParams {
        beta,
        lambda: params.lambda,
    });

    let mut stats = (0..horizon)
        .map(|_| StepStats::new(features, params.lambda))
        .collect::<Result<Vec<_>>>()?;
    let mut log = RunLog::default();
    let mut regret = 0.0;
    let mut doublings = 0usize;

    for k in 0..params.episodes {
        let q = backward_pass(features, &stats, beta, variant, None).map_err(|e| e.context(format!("episode k={k}")))?;

        if let Some(oracle) = &oracle {
            match variant {
                Variant::Online => {
                    let value = oracle.evaluate(&q.greedy_policy(), &env_reward)?.get(0, s0);
                    let gap = clamp_gap(v_star.unwrap_or(0.0) - value, "per-episode regret term")?;
                    for p in 0..params.agents {
                        log.push(k, Some(p), None, metric::GAP, gap);
                    }
                    regret += gap * params.agents as f64;
                    log.push(k, None, None, metric::REGRET, regret);
                }
                Variant::RewardFree(_) => {
                    let internal = exploration_reward(&q, spec)?;
                    let v_int = q.value(0, s0);
                    let v_star_k = oracle.optimal_value_at(&internal, s0)?;
                    log.push(k, None, None, metric::V_INTERNAL, v_int);
                    log.push(k, None, None, metric::V_STAR_INTERNAL, v_star_k);
                    let held = v_star_k <= v_int + OPTIMISM_SLACK;
                    log.push(k, None, None, metric::OPTIMISTIC, if held { 1.0 } else { 0.0 });
                }
            }
        } else if variant != Variant::Online {
            log.push(k, None, None, metric::V_INTERNAL, q.value(0, s0));
        }

        let rollout = Rollout {
            features,
            kernel: &kernel,
            env_reward: &env_reward,
            q: &q,
            initial_state: s0,
            split,
        };
        let trajectories = params.execution.map(params.agents, |p| rollout.run(params.seed, k, p));

        let previous: Vec<CovarianceState> = stats.iter().map(|s| s.cov.clone()).collect();
        for (p, traj) in trajectories.into_iter().enumerate() {
            for (h, t) in traj.into_iter().enumerate() {
                let joint = match t.b {
                    Some(b) => t.a * n_actions_p2.unwrap_or(1) + b,
                    None => t.a,
                };
                stats[h]
                    .add(rollout.features, t.x, joint, t.r, t.x_next)
                    .map_err(|e| e.context(format!("episode k={k} step h={h}")))?;
                dataset.set(k, p, h, t)?;
            }
        }
        for h in 0..horizon {
            let doubled = detect_doubling(&previous[h], &stats[h].cov)?;
            doublings += doubled as usize;
            log.push(k, None, Some(h), metric::DOUBLING, if doubled { 1.0 } else { 0.0 });
        }
    }
    log.push(params.episodes, None, None, metric::DOUBLING_TOTAL, doublings as f64);
    Ok((log, dataset))
}

/// `r^k_h = u^k_h / H` as a reward table over the (joint) action index.
fn exploration_reward(q: &QEstimate, spec: &LinearMdpSpec) -> Result<RewardTable> {
    RewardTable::from_fn(spec.horizon(), spec.n_states(), spec.n_actions(), |h, x, a| {
        q.reward(h, x, a).unwrap_or(0.0)
    })
}

/// `Λ_h` rebuilt from the first `episodes` episodes of a dataset, summing
/// rank-1 terms in `(k, p)` order.
pub fn replay_covariances(
    dataset: &TrajectoryDataset,
    features: &FeatureMap,
    lambda: f64,
    episodes: usize,
) -> Result<Vec<CovarianceState>> {
    if episodes > dataset.episodes() {
        return Err(Error::param("replay beyond the recorded episodes"));
    }
    (0..dataset.horizon())
        .map(|h| {
            let mut cov = CovarianceState::new(features.dim(), lambda)?;
            for k in 0..episodes {
                for p in 0..dataset.agents() {
                    let t = dataset
                        .get(k, p, h)
                        .ok_or_else(|| Error::param(format!("dataset is missing entry (k={k}, p={p}, h={h})")))?;
                    cov.rank1_update(features.phi(t.x, dataset.joint_action(t)))?;
                }
            }
            Ok(cov)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::BetaRule;
    use crate::envs::generate_random_mdp;

    fn tabular() -> LinearMdpSpec {
        generate_random_mdp(2, 2, 3, 4, 0).unwrap()
    }

    #[test]
    fn first_episode_is_pure_bonus() {
        let spec = tabular();
        let params = AlgoParams::new(1, 2, BetaRule::Fixed(0.7), 0);
        let stats: Vec<_> = (0..3).map(|_| StepStats::new(spec.features(), 1.0).unwrap()).collect();
        let q = backward_pass(spec.features(), &stats, 0.7, Variant::Online, None).unwrap();
        for h in 0..3 {
            for x in 0..2 {
                for a in 0..2 {
                    // one-hot φ, Λ = I: β·√1
                    assert!((q.q(h, x, a) - 0.7).abs() < 1e-15);
                }
                assert_eq!(q.greedy(h, x), 0);
            }
        }
        let (log, ds) = polsvi_run(&spec, &params).unwrap();
        assert!(ds.is_complete());
        assert!(ds.step(0).all(|t| t.a == 0 && t.x == 0));
        assert_eq!(log.values(metric::GAP).count(), 2);
    }

    #[test]
    fn large_bonus_is_clipped_at_horizon() {
        let spec = tabular();
        let stats: Vec<_> = (0..3).map(|_| StepStats::new(spec.features(), 1.0).unwrap()).collect();
        let q = backward_pass(spec.features(), &stats, 10.0, Variant::Online, None).unwrap();
        assert_eq!(q.q(0, 0, 0), 3.0);
        let q = backward_pass(spec.features(), &stats, 1.5, Variant::RewardFree(ClipMode::Upper), None).unwrap();
        // u = min(1.5, 3), r = u / 3, Q = min(r + u, 3)
        assert!((q.q(1, 1, 1) - 2.0).abs() < 1e-15);
        assert!((q.reward(1, 1, 1).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_bonus_explores_action_zero_only() {
        let spec = generate_random_mdp(4, 3, 4, 5, 7).unwrap();
        let params = AlgoParams::new(5, 3, BetaRule::Fixed(0.0), 9);
        let (ds, log) = rf_explore(&spec, &params).unwrap();
        for h in 0..4 {
            assert!(ds.step(h).all(|t| t.a == 0 && t.r == 0.0));
        }
        assert!(log.values(metric::V_INTERNAL).all(|r| r.value == 0.0));
    }

    #[test]
    fn single_action_zero_beta_has_zero_regret() {
        let t: Vec<f64> = (0..3 * 3 * 3).map(|i| [0.2, 0.5, 0.3][i % 3]).collect();
        let r = vec![0.4, 0.9, 0.1, 0.3, 0.8, 0.6, 0.2, 0.5, 0.7];
        let spec = LinearMdpSpec::tabular(3, 1, 3, &t, &r, 0).unwrap();
        let params = AlgoParams::new(6, 4, BetaRule::Fixed(0.0), 2);
        let (log, _) = polsvi_run(&spec, &params).unwrap();
        assert_eq!(log.last(metric::REGRET), Some(0.0));
    }

    #[test]
    fn incremental_matches_replay() {
        let spec = generate_random_mdp(4, 3, 4, 5, 3).unwrap();
        let params = AlgoParams::new(12, 5, BetaRule::Fixed(0.5), 4);
        let (ds, _) = rf_explore(&spec, &params).unwrap();
        let replayed = replay_covariances(&ds, spec.features(), 1.0, 12).unwrap();
        // a second run whose stats we can inspect
        let mut stats: Vec<_> = (0..4).map(|_| StepStats::new(spec.features(), 1.0).unwrap()).collect();
        for k in 0..12 {
            for p in 0..5 {
                for (h, st) in stats.iter_mut().enumerate() {
                    let t = ds.get(k, p, h).unwrap();
                    st.add(spec.features(), t.x, t.a, t.r, t.x_next).unwrap();
                }
            }
        }
        for h in 0..4 {
            let diff = (replayed[h].matrix() - stats[h].cov.matrix()).abs().max();
            assert!(diff < 1e-10);
        }
    }
}
