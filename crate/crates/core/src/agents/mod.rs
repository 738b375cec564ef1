//! Parallel optimistic least-squares value iteration.
//!
//! * [`polsvi_run`]: online learning, every agent follows one greedy policy.
//! * [`rf_explore`] / [`rf_plan`]: reward-free exploration and planning on
//!   linear MDPs.
//! * [`rfmg_explore`] / [`rfmg_plan`]: the same protocol for zero-sum
//!   linear Markov games.
//!
//! Each episode alternates a single-threaded central pass, which builds the
//! optimistic Q-functions from all data so far, with a rollout phase where
//! the `P` agents act in parallel on an immutable snapshot of those Q-functions.

mod dataset;
mod explore;
mod plan;
mod runlog;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::FeatureMap;
use crate::error::{Error, Result};
use crate::numerics::CovarianceState;
use crate::par::Execution;

pub use dataset::{DatasetKind, TrajectoryDataset, Transition};
pub use explore::{polsvi_run, rf_explore, rfmg_explore, replay_covariances};
pub use plan::{rf_plan, rf_plan_detailed, rfmg_plan, rfmg_plan_detailed, GamePlan};
pub use runlog::{metric, RunLog, RunRecord};

/// How the bonus scale `β` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaRule {
    Fixed(f64),
    /// `β = c_β · d · H · √ι` with `ι = log(d K H P / δ)`.
    Derived { c_beta: f64, delta: f64 },
}

impl Default for BetaRule {
    fn default() -> Self {
        BetaRule::Derived {
            c_beta: 1.0,
            delta: 0.05,
        }
    }
}

impl BetaRule {
    pub fn resolve(&self, dim: usize, horizon: usize, episodes: usize, agents: usize) -> Result<f64> {
        match *self {
            BetaRule::Fixed(b) => {
                if !(b >= 0.0 && b.is_finite()) {
                    return Err(Error::param(format!("beta must be non-negative, got {b}")));
                }
                Ok(b)
            }
            BetaRule::Derived { c_beta, delta } => {
                if !(delta > 0.0 && delta < 1.0) {
                    return Err(Error::param(format!("delta must lie in (0, 1), got {delta}")));
                }
                if !(c_beta >= 0.0 && c_beta.is_finite()) {
                    return Err(Error::param(format!("c_beta must be non-negative, got {c_beta}")));
                }
                let iota = ((dim * episodes * horizon * agents) as f64 / delta).ln();
                Ok(c_beta * (dim * horizon) as f64 * iota.max(0.0).sqrt())
            }
        }
    }

    /// The same rule with its scale multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            BetaRule::Fixed(b) => BetaRule::Fixed(b * factor),
            BetaRule::Derived { c_beta, delta } => BetaRule::Derived {
                c_beta: c_beta * factor,
                delta,
            },
        }
    }
}

/// Episodes `K`, agents `P`, ridge `λ`, bonus rule and base seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgoParams {
    pub episodes: usize,
    pub agents: usize,
    pub lambda: f64,
    pub beta: BetaRule,
    pub seed: u64,
    /// Exact per-episode oracle values in the run log.
    pub oracle_eval: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl AlgoParams {
    pub fn new(episodes: usize, agents: usize, beta: BetaRule, seed: u64) -> Self {
        Self {
            episodes,
            agents,
            lambda: 1.0,
            beta,
            seed,
            oracle_eval: true,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.agents == 0 {
            return Err(Error::param("episodes and agents must be at least 1"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::param(format!("lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }

    pub fn resolve_beta(&self, dim: usize, horizon: usize) -> Result<f64> {
        self.beta.resolve(dim, horizon, self.episodes, self.agents)
    }

    pub fn planning(&self, dim: usize, horizon: usize) -> Result<PlanningParams> {
        self.validate()?;
        Ok(PlanningParams {
            beta: self.resolve_beta(dim, horizon)?,
            lambda: self.lambda,
        })
    }
}

/// Bonus scale and ridge used by the planning passes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanningParams {
    pub beta: f64,
    pub lambda: f64,
}

/// Independent random stream for agent `p` in episode `k`.
pub fn agent_rng(seed: u64, episode: usize, agent: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((episode as u64) << 32) | agent as u64);
    rng
}

/// Upper-only `min{·, H}` or two-sided `Π_[0,H]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipMode {
    Upper,
    TwoSided,
}

impl ClipMode {
    pub fn apply(self, v: f64, cap: f64) -> f64 {
        match self {
            ClipMode::Upper => v.min(cap),
            ClipMode::TwoSided => v.clamp(0.0, cap),
        }
    }
}

/// Optimistic linear Q-functions for every step, evaluated on all pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct QEstimate {
    horizon: usize,
    n_states: usize,
    n_actions: usize,
    beta: f64,
    clip: ClipMode,
    weights: Vec<Vec<f64>>,
    /// `β·√(φᵀΛ⁻¹φ)` before clipping, `[h][pair]`.
    widths: Vec<Vec<f64>>,
    /// Additive reward component, `[h][pair]`, if any.
    rewards: Option<Vec<Vec<f64>>>,
    q: Vec<Vec<f64>>,
}

impl QEstimate {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn clip_mode(&self) -> ClipMode {
        self.clip
    }

    pub fn weights(&self, h: usize) -> &[f64] {
        &self.weights[h]
    }

    pub fn width(&self, h: usize, x: usize, a: usize) -> f64 {
        self.widths[h][x * self.n_actions + a]
    }

    pub fn reward(&self, h: usize, x: usize, a: usize) -> Option<f64> {
        self.rewards.as_ref().map(|r| r[h][x * self.n_actions + a])
    }

    pub fn q(&self, h: usize, x: usize, a: usize) -> f64 {
        self.q[h][x * self.n_actions + a]
    }

    pub fn q_row(&self, h: usize, x: usize) -> &[f64] {
        &self.q[h][x * self.n_actions..(x + 1) * self.n_actions]
    }

    /// Lowest-index greedy action.
    pub fn greedy(&self, h: usize, x: usize) -> usize {
        crate::oracle::argmax(self.q_row(h, x)).0
    }

    /// `max_a Q_h(x, a)`, zero past the horizon.
    pub fn value(&self, h: usize, x: usize) -> f64 {
        if h >= self.horizon {
            0.0
        } else {
            crate::oracle::argmax(self.q_row(h, x)).1
        }
    }

    pub fn greedy_policy(&self) -> crate::oracle::DeterministicPolicy {
        let actions = (0..self.horizon)
            .flat_map(|h| (0..self.n_states).map(move |x| (h, x)))
            .map(|(h, x)| self.greedy(h, x))
            .collect();
        crate::oracle::DeterministicPolicy::new(self.horizon, self.n_states, self.n_actions, actions)
            .expect("greedy actions are in range")
    }
}

/// How one backward step turns regression output into Q-values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Variant {
    /// `min{wᵀφ + β‖φ‖_{Λ⁻¹}, H}`, targets include the observed reward.
    Online,
    /// `min{wᵀφ + u/H + u, H}` with `u = min{β‖φ‖_{Λ⁻¹}, H}`.
    RewardFree(ClipMode),
}

/// Per-step sufficient statistics: covariance plus next-state counts, so
/// regression targets can be re-evaluated against any value function.
#[derive(Clone, Debug)]
pub(crate) struct StepStats {
    pub cov: CovarianceState,
    /// `[pair][x']` visit counts.
    pub counts: Vec<f64>,
    /// Observed reward summed per pair.
    pub reward_sums: Vec<f64>,
}

impl StepStats {
    pub fn new(features: &FeatureMap, lambda: f64) -> Result<Self> {
        Ok(Self {
            cov: CovarianceState::new(features.dim(), lambda)?,
            counts: vec![0.0; features.n_pairs() * features.n_states()],
            reward_sums: vec![0.0; features.n_pairs()],
        })
    }

    pub fn add(&mut self, features: &FeatureMap, x: usize, a: usize, r: f64, x_next: usize) -> Result<()> {
        let pair = features.pair(x, a);
        self.cov.rank1_update(features.phi_pair(pair))?;
        self.counts[pair * features.n_states() + x_next] += 1.0;
        self.reward_sums[pair] += r;
        Ok(())
    }

    /// `Λ⁻¹ Σ φ(x,a) [r·include_reward + V(x')]`.
    pub fn regress(&self, features: &FeatureMap, next_value: &[f64], include_reward: bool) -> Result<Vec<f64>> {
        let (d, s) = (features.dim(), features.n_states());
        let mut rhs = vec![0.0; d];
        for pair in 0..features.n_pairs() {
            let counts = &self.counts[pair * s..(pair + 1) * s];
            let mut target: f64 = counts.iter().zip(next_value).map(|(c, v)| c * v).sum();
            if include_reward {
                target += self.reward_sums[pair];
            }
            if target != 0.0 {
                for (acc, f) in rhs.iter_mut().zip(features.phi_pair(pair)) {
                    *acc += f * target;
                }
            }
        }
        let w = self.cov.solve(&rhs)?;
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite regression weights".into()));
        }
        Ok(w)
    }
}

/// Backward pass over `stats` producing the optimistic Q-functions.
/// `extra_reward` supplies a user reward `[h][pair]` for planning.
pub(crate) fn backward_pass(
    features: &FeatureMap,
    stats: &[StepStats],
    beta: f64,
    variant: Variant,
    extra_reward: Option<&crate::envs::RewardTable>,
) -> Result<QEstimate> {
    let horizon = stats.len();
    let (n_states, n_actions, pairs) = (features.n_states(), features.n_actions(), features.n_pairs());
    let cap = horizon as f64;
    let mut weights = vec![Vec::new(); horizon];
    let mut widths = vec![Vec::new(); horizon];
    let mut q = vec![Vec::new(); horizon];
    let mut rewards = match variant {
        Variant::RewardFree(_) => Some(vec![Vec::new(); horizon]),
        Variant::Online => None,
    };
    let mut next_value = vec![0.0; n_states];

    for h in (0..horizon).rev() {
        let include_reward = variant == Variant::Online;
        let w = stats[h]
            .regress(features, &next_value, include_reward)
            .map_err(|e| e.context(format!("step h={h}")))?;
        let mut wid = Vec::with_capacity(pairs);
        let mut qh = Vec::with_capacity(pairs);
        let mut rh = Vec::with_capacity(pairs);
        for pair in 0..pairs {
            let phi = features.phi_pair(pair);
            let width = beta * stats[h].cov.quadratic_form_unchecked(phi).sqrt();
            let fit = crate::envs::dot(&w, phi);
            let value = match variant {
                Variant::Online => ClipMode::Upper.apply(fit + width, cap),
                Variant::RewardFree(clip) => {
                    let u = width.min(cap);
                    let r = match extra_reward {
                        Some(table) => table.step(h)[pair],
                        None => u / cap,
                    };
                    rh.push(r);
                    clip.apply(fit + r + u, cap)
                }
            };
            if !value.is_finite() {
                return Err(Error::Numeric(format!("non-finite Q value at step h={h}")));
            }
            wid.push(width);
            qh.push(value);
        }
        for (x, v) in next_value.iter_mut().enumerate() {
            *v = crate::oracle::argmax(&qh[x * n_actions..(x + 1) * n_actions]).1;
        }
        weights[h] = w;
        widths[h] = wid;
        q[h] = qh;
        if let Some(r) = rewards.as_mut() {
            r[h] = rh;
        }
    }

    let clip = match variant {
        Variant::Online => ClipMode::Upper,
        Variant::RewardFree(c) => c,
    };
    Ok(QEstimate {
        horizon,
        n_states,
        n_actions,
        beta,
        clip,
        weights,
        widths,
        rewards,
        q,
    })
}
