use super::{backward_pass, ClipMode, DatasetKind, PlanningParams, QEstimate, StepStats, TrajectoryDataset, Variant};
use crate::envs::{dot, FeatureMap, RewardTable};
use crate::error::{Error, Result};
use crate::matrix_game::{self, MatrixGame, PLANNING_TOL};
use crate::oracle::{DeterministicPolicy, MixedPolicy, MixedPolicyPair};

fn collect_stats(dataset: &TrajectoryDataset, features: &FeatureMap, lambda: f64) -> Result<Vec<StepStats>> {
    dataset.check_complete()?;
    if features.n_states() != dataset.n_states() || features.n_actions() != dataset.n_joint_actions() {
        return Err(Error::param(format!(
            "feature table covers {}x{} pairs, dataset has {}x{}",
            features.n_states(),
            features.n_actions(),
            dataset.n_states(),
            dataset.n_joint_actions()
        )));
    }
    (0..dataset.horizon())
        .map(|h| {
            let mut st = StepStats::new(features, lambda)?;
            for t in dataset.step(h) {
                st.add(features, t.x, dataset.joint_action(t), 0.0, t.x_next)?;
            }
            Ok(st)
        })
        .collect()
}

fn check_reward(dataset: &TrajectoryDataset, reward: &RewardTable) -> Result<()> {
    if reward.horizon() != dataset.horizon()
        || reward.n_states() != dataset.n_states()
        || reward.n_actions() != dataset.n_joint_actions()
    {
        return Err(Error::param("reward table shape does not match the dataset"));
    }
    Ok(())
}

/// Greedy policy for `reward` from one optimistic pass over all exploration data.
pub fn rf_plan(
    dataset: &TrajectoryDataset,
    features: &FeatureMap,
    reward: &RewardTable,
    params: &PlanningParams,
) -> Result<DeterministicPolicy> {
    Ok(rf_plan_detailed(dataset, features, reward, params)?.greedy_policy())
}

pub fn rf_plan_detailed(
    dataset: &TrajectoryDataset,
    features: &FeatureMap,
    reward: &RewardTable,
    params: &PlanningParams,
) -> Result<QEstimate> {
    if dataset.kind() != DatasetKind::Mdp {
        return Err(Error::param("single-agent planning needs an MDP dataset"));
    }
    check_reward(dataset, reward)?;
    let stats = collect_stats(dataset, features, params.lambda)?;
    backward_pass(
        features,
        &stats,
        params.beta,
        Variant::RewardFree(ClipMode::Upper),
        Some(reward),
    )
}

/// Upper and lower game Q-functions together with the extracted policy pair.
#[derive(Clone, Debug)]
pub struct GamePlan {
    pub pair: MixedPolicyPair,
    /// `Q̄_h(x, a, b)`, `[h][x][a·|B| + b]`.
    pub q_upper: Vec<Vec<f64>>,
    pub q_lower: Vec<Vec<f64>>,
    /// `V̄_h(x)` and `V̲_h(x)`, `[h][x]`.
    pub v_upper: Vec<Vec<f64>>,
    pub v_lower: Vec<Vec<f64>>,
}

pub fn rfmg_plan(
    dataset: &TrajectoryDataset,
    features: &FeatureMap,
    reward: &RewardTable,
    params: &PlanningParams,
) -> Result<MixedPolicyPair> {
    Ok(rfmg_plan_detailed(dataset, features, reward, params)?.pair)
}

/// Player 1 plays the max-player half of the equilibrium of `Q̄_h(x)` and
/// Player 2 the min-player half of the one of `Q̲_h(x)`.
pub fn rfmg_plan_detailed(
    dataset: &TrajectoryDataset,
    features: &FeatureMap,
    reward: &RewardTable,
    params: &PlanningParams,
) -> Result<GamePlan> {
    let nb = match (dataset.kind(), dataset.n_actions_p2()) {
        (DatasetKind::Mg, Some(nb)) => nb,
        _ => return Err(Error::param("game planning needs a Markov-game dataset")),
    };
    check_reward(dataset, reward)?;
    let stats = collect_stats(dataset, features, params.lambda)?;
    let (hz, s, na) = (dataset.horizon(), dataset.n_states(), dataset.n_actions());
    let joint = na * nb;
    let cap = hz as f64;

    let mut pi = vec![0.0; hz * s * na];
    let mut nu = vec![0.0; hz * s * nb];
    let mut q_upper = vec![Vec::new(); hz];
    let mut q_lower = vec![Vec::new(); hz];
    let mut v_upper = vec![vec![0.0; s]; hz];
    let mut v_lower = vec![vec![0.0; s]; hz];
    let mut next_upper = vec![0.0; s];
    let mut next_lower = vec![0.0; s];

    for h in (0..hz).rev() {
        let ctx = |e: Error| e.context(format!("step h={h}"));
        let w_up = stats[h].regress(features, &next_upper, false).map_err(ctx)?;
        let w_lo = stats[h].regress(features, &next_lower, false).map_err(ctx)?;
        let r = reward.step(h);
        let mut qu = Vec::with_capacity(s * joint);
        let mut ql = Vec::with_capacity(s * joint);
        for pair in 0..s * joint {
            let phi = features.phi_pair(pair);
            let u = (params.beta * stats[h].cov.quadratic_form_unchecked(phi).sqrt()).min(cap);
            qu.push(ClipMode::TwoSided.apply(dot(&w_up, phi) + r[pair] + u, cap));
            ql.push(ClipMode::TwoSided.apply(dot(&w_lo, phi) + r[pair] - u, cap));
        }
        if qu.iter().chain(&ql).any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite game Q value at step h={h}")));
        }
        for x in 0..s {
            let loc = |e: Error| e.context(format!("stage game h={h} x={x}"));
            let upper = MatrixGame::new(na, nb, qu[x * joint..(x + 1) * joint].to_vec()).map_err(loc)?;
            let lower = MatrixGame::new(na, nb, ql[x * joint..(x + 1) * joint].to_vec()).map_err(loc)?;
            let su = matrix_game::solve(&upper, PLANNING_TOL).map_err(loc)?;
            let sl = matrix_game::solve(&lower, PLANNING_TOL).map_err(loc)?;
            let off = h * s + x;
            pi[off * na..(off + 1) * na].copy_from_slice(&su.row_strategy);
            nu[off * nb..(off + 1) * nb].copy_from_slice(&sl.col_strategy);
            v_upper[h][x] = su.value;
            v_lower[h][x] = sl.value;
        }
        next_upper.clone_from(&v_upper[h]);
        next_lower.clone_from(&v_lower[h]);
        q_upper[h] = qu;
        q_lower[h] = ql;
    }

    Ok(GamePlan {
        pair: MixedPolicyPair {
            pi: MixedPolicy::new(hz, s, na, pi)?,
            nu: MixedPolicy::new(hz, s, nb, nu)?,
        },
        q_upper,
        q_lower,
        v_upper,
        v_lower,
    })
}
