//! Exact backward dynamic programming on finite specs.
//!
//! Steps are 0-based throughout: `V[h]` for `h in 0..H` is the value with
//! `H − h` steps to go, and the terminal value `V[H]` is identically zero.

use serde::{Deserialize, Serialize};

use crate::envs::{LinearMdpSpec, LinearMgSpec, RewardTable, TransitionKernel};
use crate::error::{Error, Result};
use crate::matrix_game::{self, MatrixGame};

/// Noise floor below zero that a suboptimality may reach before it is a bug.
pub const SUBOPT_NOISE: f64 = 1e-9;
const DIST_TOL: f64 = 1e-9;

/// Per-step state → action table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    horizon: usize,
    n_states: usize,
    n_actions: usize,
    actions: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn new(horizon: usize, n_states: usize, n_actions: usize, actions: Vec<usize>) -> Result<Self> {
        if actions.len() != horizon * n_states {
            return Err(Error::param(format!(
                "policy has {} entries, expected {}",
                actions.len(),
                horizon * n_states
            )));
        }
        if let Some(a) = actions.iter().find(|&&a| a >= n_actions) {
            return Err(Error::param(format!("policy action {a} out of range")));
        }
        Ok(Self {
            horizon,
            n_states,
            n_actions,
            actions,
        })
    }

    /// The policy that plays `action` everywhere.
    pub fn constant(horizon: usize, n_states: usize, n_actions: usize, action: usize) -> Result<Self> {
        Self::new(horizon, n_states, n_actions, vec![action; horizon * n_states])
    }

    pub fn action(&self, h: usize, x: usize) -> usize {
        self.actions[h * self.n_states + x]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }
}

/// Per-step, per-state distribution over one player's actions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedPolicy {
    horizon: usize,
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl MixedPolicy {
    /// `probs` is `[h][x][a]` flattened; every distribution must sum to one.
    pub fn new(horizon: usize, n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != horizon * n_states * n_actions {
            return Err(Error::param(format!(
                "mixed policy has {} entries, expected {}",
                probs.len(),
                horizon * n_states * n_actions
            )));
        }
        for (i, chunk) in probs.chunks(n_actions).enumerate() {
            let total: f64 = chunk.iter().sum();
            if chunk.iter().any(|p| !(*p >= -DIST_TOL)) || (total - 1.0).abs() > DIST_TOL {
                return Err(Error::param(format!(
                    "distribution at (h={}, x={}) is not a probability vector",
                    i / n_states,
                    i % n_states
                )));
            }
        }
        Ok(Self {
            horizon,
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(horizon: usize, n_states: usize, n_actions: usize) -> Self {
        Self {
            horizon,
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; horizon * n_states * n_actions],
        }
    }

    pub fn from_deterministic(policy: &DeterministicPolicy) -> Self {
        let mut probs = vec![0.0; policy.horizon * policy.n_states * policy.n_actions];
        for h in 0..policy.horizon {
            for x in 0..policy.n_states {
                probs[(h * policy.n_states + x) * policy.n_actions + policy.action(h, x)] = 1.0;
            }
        }
        Self {
            horizon: policy.horizon,
            n_states: policy.n_states,
            n_actions: policy.n_actions,
            probs,
        }
    }

    pub fn dist(&self, h: usize, x: usize) -> &[f64] {
        let off = (h * self.n_states + x) * self.n_actions;
        &self.probs[off..off + self.n_actions]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Player 1's `π` and Player 2's `ν`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedPolicyPair {
    pub pi: MixedPolicy,
    pub nu: MixedPolicy,
}

/// Anything that assigns a distribution over actions to each `(h, x)`.
pub trait Policy {
    /// `E_{a ~ π_h(x)} q[a]`.
    fn expect(&self, h: usize, x: usize, q: &[f64]) -> f64;
    fn shape(&self) -> (usize, usize, usize);
}

impl Policy for DeterministicPolicy {
    fn expect(&self, h: usize, x: usize, q: &[f64]) -> f64 {
        q[self.action(h, x)]
    }

    fn shape(&self) -> (usize, usize, usize) {
        (self.horizon, self.n_states, self.n_actions)
    }
}

impl Policy for MixedPolicy {
    fn expect(&self, h: usize, x: usize, q: &[f64]) -> f64 {
        self.dist(h, x).iter().zip(q).map(|(p, v)| p * v).sum()
    }

    fn shape(&self) -> (usize, usize, usize) {
        (self.horizon, self.n_states, self.n_actions)
    }
}

/// A policy as stored on disk, tagged by `"kind"`. Loading re-runs the
/// constructors' validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyFile {
    Deterministic(DeterministicPolicy),
    Mixed(MixedPolicy),
    Pair(MixedPolicyPair),
}

impl PolicyFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("policy serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: PolicyFile = serde_json::from_str(text).map_err(|e| Error::Format {
            path: "<policy>".into(),
            message: e.to_string(),
        })?;
        let mixed = |m: MixedPolicy| MixedPolicy::new(m.horizon, m.n_states, m.n_actions, m.probs);
        Ok(match raw {
            PolicyFile::Deterministic(d) => {
                PolicyFile::Deterministic(DeterministicPolicy::new(d.horizon, d.n_states, d.n_actions, d.actions)?)
            }
            PolicyFile::Mixed(m) => PolicyFile::Mixed(mixed(m)?),
            PolicyFile::Pair(p) => PolicyFile::Pair(MixedPolicyPair {
                pi: mixed(p.pi)?,
                nu: mixed(p.nu)?,
            }),
        })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Format { message, .. } => Error::Format {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// `V[h][x]` for `h in 0..H`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    horizon: usize,
    n_states: usize,
    values: Vec<f64>,
}

impl ValueTable {
    fn zeros(horizon: usize, n_states: usize) -> Self {
        Self {
            horizon,
            n_states,
            values: vec![0.0; horizon * n_states],
        }
    }

    pub fn get(&self, h: usize, x: usize) -> f64 {
        if h >= self.horizon {
            0.0
        } else {
            self.values[h * self.n_states + x]
        }
    }

    /// Row `V[h]`, with `V[H] = 0`.
    pub fn step(&self, h: usize) -> Vec<f64> {
        (0..self.n_states).map(|x| self.get(h, x)).collect()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    fn set(&mut self, h: usize, x: usize, v: f64) {
        self.values[h * self.n_states + x] = v;
    }
}

fn check_policy_shape(policy: &impl Policy, horizon: usize, n_states: usize, n_actions: usize) -> Result<()> {
    if policy.shape() != (horizon, n_states, n_actions) {
        return Err(Error::param(format!(
            "policy shape {:?} does not match (H={horizon}, S={n_states}, A={n_actions})",
            policy.shape()
        )));
    }
    Ok(())
}

/// Reusable DP engine that owns the clipped kernel of one spec.
#[derive(Clone, Debug)]
pub struct Oracle {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    kernel: TransitionKernel,
}

impl Oracle {
    pub fn new(spec: &LinearMdpSpec) -> Self {
        Self {
            n_states: spec.n_states(),
            n_actions: spec.n_actions(),
            horizon: spec.horizon(),
            kernel: spec.kernel(),
        }
    }

    /// `Q_h(x, ·) = r_h(x, ·) + P_h V_{h+1}` as a vector over actions.
    fn q_row(&self, reward: &RewardTable, next: &[f64], h: usize, x: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.n_actions).map(|a| reward.get(h, x, a) + self.kernel.expect(h, x, a, next)));
    }

    pub fn evaluate(&self, policy: &impl Policy, reward: &RewardTable) -> Result<ValueTable> {
        reward.matches(self.horizon, self.n_states, self.n_actions)?;
        check_policy_shape(policy, self.horizon, self.n_states, self.n_actions)?;
        let mut v = ValueTable::zeros(self.horizon, self.n_states);
        let mut q = Vec::with_capacity(self.n_actions);
        for h in (0..self.horizon).rev() {
            let next = v.step(h + 1);
            for x in 0..self.n_states {
                self.q_row(reward, &next, h, x, &mut q);
                v.set(h, x, policy.expect(h, x, &q));
            }
        }
        Ok(v)
    }

    /// Optimal values and the lowest-index greedy policy.
    pub fn optimal(&self, reward: &RewardTable) -> Result<(ValueTable, DeterministicPolicy)> {
        reward.matches(self.horizon, self.n_states, self.n_actions)?;
        let mut v = ValueTable::zeros(self.horizon, self.n_states);
        let mut actions = vec![0; self.horizon * self.n_states];
        let mut q = Vec::with_capacity(self.n_actions);
        for h in (0..self.horizon).rev() {
            let next = v.step(h + 1);
            for x in 0..self.n_states {
                self.q_row(reward, &next, h, x, &mut q);
                let (best, val) = argmax(&q);
                actions[h * self.n_states + x] = best;
                v.set(h, x, val);
            }
        }
        let policy = DeterministicPolicy::new(self.horizon, self.n_states, self.n_actions, actions)?;
        Ok((v, policy))
    }

    pub fn optimal_value_at(&self, reward: &RewardTable, x: usize) -> Result<f64> {
        Ok(self.optimal(reward)?.0.get(0, x))
    }
}

/// Lowest index among maximizers.
pub(crate) fn argmax(v: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    (best, v[best])
}

/// Lowest index among minimizers.
pub(crate) fn argmin(v: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x < v[best] {
            best = i;
        }
    }
    (best, v[best])
}

/// Clamps float noise at zero and rejects anything more negative.
pub fn clamp_gap(gap: f64, what: &str) -> Result<f64> {
    if gap < -SUBOPT_NOISE {
        return Err(Error::Consistency(format!("{what} is negative: {gap:e}")));
    }
    Ok(gap.max(0.0))
}

pub fn evaluate_policy(spec: &LinearMdpSpec, policy: &impl Policy, reward: &RewardTable) -> Result<ValueTable> {
    Oracle::new(spec).evaluate(policy, reward)
}

pub fn optimal_value(spec: &LinearMdpSpec, reward: &RewardTable) -> Result<(ValueTable, DeterministicPolicy)> {
    Oracle::new(spec).optimal(reward)
}

/// `V₁*(s₀; r) − V₁^π(s₀; r)`.
pub fn subopt_mdp(spec: &LinearMdpSpec, policy: &impl Policy, reward: &RewardTable) -> Result<f64> {
    let oracle = Oracle::new(spec);
    let s0 = spec.initial_state();
    let best = oracle.optimal(reward)?.0.get(0, s0);
    let value = oracle.evaluate(policy, reward)?.get(0, s0);
    clamp_gap(best - value, "MDP suboptimality")
}

/// Game-side DP over the joint-action kernel.
#[derive(Clone, Debug)]
pub struct GameOracle {
    na: usize,
    nb: usize,
    inner: Oracle,
}

impl GameOracle {
    pub fn new(spec: &LinearMgSpec) -> Self {
        Self {
            na: spec.n_actions_p1(),
            nb: spec.n_actions_p2(),
            inner: Oracle::new(spec.joint()),
        }
    }

    fn check(&self, reward: &RewardTable) -> Result<()> {
        reward.matches(self.inner.horizon, self.inner.n_states, self.na * self.nb)
    }

    fn check_side(&self, p: &MixedPolicy, n_actions: usize, who: &str) -> Result<()> {
        check_policy_shape(p, self.inner.horizon, self.inner.n_states, n_actions)
            .map_err(|e| e.context(format!("{who} policy")))
    }

    /// `Q_h(x, a, b)` laid out row-major over `(a, b)`.
    fn q_matrix(&self, reward: &RewardTable, next: &[f64], h: usize, x: usize, out: &mut Vec<f64>) {
        self.inner.q_row(reward, next, h, x, out);
    }

    pub fn evaluate(&self, pair: &MixedPolicyPair, reward: &RewardTable) -> Result<ValueTable> {
        self.check(reward)?;
        self.check_side(&pair.pi, self.na, "player 1")?;
        self.check_side(&pair.nu, self.nb, "player 2")?;
        let (s, hz) = (self.inner.n_states, self.inner.horizon);
        let mut v = ValueTable::zeros(hz, s);
        let mut q = Vec::new();
        for h in (0..hz).rev() {
            let next = v.step(h + 1);
            for x in 0..s {
                self.q_matrix(reward, &next, h, x, &mut q);
                let (p, nu) = (pair.pi.dist(h, x), pair.nu.dist(h, x));
                let mut val = 0.0;
                for a in 0..self.na {
                    for b in 0..self.nb {
                        val += p[a] * nu[b] * q[a * self.nb + b];
                    }
                }
                v.set(h, x, val);
            }
        }
        Ok(v)
    }

    /// Pure minimizing response to a fixed Player 1 policy.
    pub fn best_response_p2(&self, pi: &MixedPolicy, reward: &RewardTable) -> Result<(MixedPolicy, ValueTable)> {
        self.check(reward)?;
        self.check_side(pi, self.na, "player 1")?;
        let (s, hz) = (self.inner.n_states, self.inner.horizon);
        let mut v = ValueTable::zeros(hz, s);
        let mut probs = vec![0.0; hz * s * self.nb];
        let mut q = Vec::new();
        let mut cols = vec![0.0; self.nb];
        for h in (0..hz).rev() {
            let next = v.step(h + 1);
            for x in 0..s {
                self.q_matrix(reward, &next, h, x, &mut q);
                let p = pi.dist(h, x);
                for (b, c) in cols.iter_mut().enumerate() {
                    *c = (0..self.na).map(|a| p[a] * q[a * self.nb + b]).sum();
                }
                let (b, val) = argmin(&cols);
                probs[(h * s + x) * self.nb + b] = 1.0;
                v.set(h, x, val);
            }
        }
        Ok((MixedPolicy::new(hz, s, self.nb, probs)?, v))
    }

    /// Pure maximizing response to a fixed Player 2 policy.
    pub fn best_response_p1(&self, nu: &MixedPolicy, reward: &RewardTable) -> Result<(MixedPolicy, ValueTable)> {
        self.check(reward)?;
        self.check_side(nu, self.nb, "player 2")?;
        let (s, hz) = (self.inner.n_states, self.inner.horizon);
        let mut v = ValueTable::zeros(hz, s);
        let mut probs = vec![0.0; hz * s * self.na];
        let mut q = Vec::new();
        let mut rows = vec![0.0; self.na];
        for h in (0..hz).rev() {
            let next = v.step(h + 1);
            for x in 0..s {
                self.q_matrix(reward, &next, h, x, &mut q);
                let n = nu.dist(h, x);
                for (a, r) in rows.iter_mut().enumerate() {
                    *r = (0..self.nb).map(|b| n[b] * q[a * self.nb + b]).sum();
                }
                let (a, val) = argmax(&rows);
                probs[(h * s + x) * self.na + a] = 1.0;
                v.set(h, x, val);
            }
        }
        Ok((MixedPolicy::new(hz, s, self.na, probs)?, v))
    }

    /// Duality gap `V^{br₁(ν),ν} − V^{π,br₂(π)}` at `x`.
    pub fn subopt_at(&self, pair: &MixedPolicyPair, reward: &RewardTable, x: usize) -> Result<f64> {
        let upper = self.best_response_p1(&pair.nu, reward)?.1.get(0, x);
        let lower = self.best_response_p2(&pair.pi, reward)?.1.get(0, x);
        clamp_gap(upper - lower, "Markov-game duality gap")
    }

    /// Nash values by solving the stage matrix game at every `(h, x)`.
    pub fn nash(&self, reward: &RewardTable, tol: f64) -> Result<(ValueTable, MixedPolicyPair)> {
        self.check(reward)?;
        let (s, hz) = (self.inner.n_states, self.inner.horizon);
        let mut v = ValueTable::zeros(hz, s);
        let mut pi = vec![0.0; hz * s * self.na];
        let mut nu = vec![0.0; hz * s * self.nb];
        let mut q = Vec::new();
        for h in (0..hz).rev() {
            let next = v.step(h + 1);
            for x in 0..s {
                self.q_matrix(reward, &next, h, x, &mut q);
                let game = MatrixGame::new(self.na, self.nb, q.clone())?;
                let sol = matrix_game::solve(&game, tol).map_err(|e| e.context(format!("stage game h={h} x={x}")))?;
                let off = h * s + x;
                pi[off * self.na..(off + 1) * self.na].copy_from_slice(&sol.row_strategy);
                nu[off * self.nb..(off + 1) * self.nb].copy_from_slice(&sol.col_strategy);
                v.set(h, x, sol.value);
            }
        }
        let pair = MixedPolicyPair {
            pi: MixedPolicy::new(hz, s, self.na, pi)?,
            nu: MixedPolicy::new(hz, s, self.nb, nu)?,
        };
        Ok((v, pair))
    }
}

pub fn evaluate_joint_policy(spec: &LinearMgSpec, pair: &MixedPolicyPair, reward: &RewardTable) -> Result<ValueTable> {
    GameOracle::new(spec).evaluate(pair, reward)
}

pub fn best_response_p1(spec: &LinearMgSpec, nu: &MixedPolicy, reward: &RewardTable) -> Result<(MixedPolicy, ValueTable)> {
    GameOracle::new(spec).best_response_p1(nu, reward)
}

pub fn best_response_p2(spec: &LinearMgSpec, pi: &MixedPolicy, reward: &RewardTable) -> Result<(MixedPolicy, ValueTable)> {
    GameOracle::new(spec).best_response_p2(pi, reward)
}

/// `V₁^{br₁(ν),ν}(s₀) − V₁^{π,br₂(π)}(s₀)`; zero exactly at Nash equilibria.
pub fn subopt_mg(spec: &LinearMgSpec, pair: &MixedPolicyPair, reward: &RewardTable) -> Result<f64> {
    GameOracle::new(spec).subopt_at(pair, reward, spec.initial_state())
}

pub fn nash_value_backward(spec: &LinearMgSpec, reward: &RewardTable) -> Result<(ValueTable, MixedPolicyPair)> {
    GameOracle::new(spec).nash(reward, matrix_game::DEFAULT_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two states, two actions, deterministic chain, H = 3.
    /// Action 0 stays, action 1 switches. Rewards: state 1 pays 1 on
    /// action 0, state 0 pays 0.5 on action 1, everything else 0.
    fn chain() -> LinearMdpSpec {
        let mut t = Vec::new();
        for _ in 0..3 {
            t.extend_from_slice(&[1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        }
        let mut r = Vec::new();
        for _ in 0..3 {
            r.extend_from_slice(&[0.0, 0.5, 1.0, 0.0]);
        }
        LinearMdpSpec::tabular(2, 2, 3, &t, &r, 0).unwrap()
    }

    #[test]
    fn constant_reward_telescopes() {
        let spec = LinearMdpSpec::tabular(1, 2, 3, &[1.0; 6], &[1.0; 6], 0).unwrap();
        let r = spec.reward_table();
        let pol = DeterministicPolicy::constant(3, 1, 2, 1).unwrap();
        let v = evaluate_policy(&spec, &pol, &r).unwrap();
        assert!((v.get(0, 0) - 3.0).abs() < 1e-12);
        assert!((optimal_value(&spec, &r).unwrap().0.get(0, 0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_reward_gives_zero() {
        let spec = chain();
        let r = RewardTable::zeros(3, 2, 2);
        let pol = DeterministicPolicy::constant(3, 2, 2, 1).unwrap();
        let v = evaluate_policy(&spec, &pol, &r).unwrap();
        assert!((0..3).all(|h| v.step(h).iter().all(|&x| x == 0.0)));
        assert_eq!(subopt_mdp(&spec, &pol, &r).unwrap(), 0.0);
    }

    #[test]
    fn chain_hand_dp() {
        // Hand backward induction:
        // h=3: V(0) = 0.5 (switch), V(1) = 1 (stay)
        // h=2: Q(0,0)=0+0.5, Q(0,1)=0.5+1=1.5 → 1.5; Q(1,0)=1+1=2, Q(1,1)=0+0.5 → 2
        // h=1: Q(0,0)=1.5, Q(0,1)=0.5+2=2.5 → 2.5; V(1)=1+2=3
        let spec = chain();
        let r = spec.reward_table();
        let (v, pol) = optimal_value(&spec, &r).unwrap();
        assert!((v.get(0, 0) - 2.5).abs() < 1e-12);
        assert!((v.get(0, 1) - 3.0).abs() < 1e-12);
        assert!((v.get(2, 0) - 0.5).abs() < 1e-12);
        assert_eq!(pol.action(0, 0), 1);
        assert_eq!(pol.action(0, 1), 0);

        // always-stay policy from state 0 earns nothing
        let stay = DeterministicPolicy::constant(3, 2, 2, 0).unwrap();
        let vs = evaluate_policy(&spec, &stay, &r).unwrap();
        assert_eq!(vs.get(0, 0), 0.0);
        assert!((subopt_mdp(&spec, &stay, &r).unwrap() - 2.5).abs() < 1e-12);
        // always-switch: 0.5 (0→1) + 0 (1→0) + 0.5 = 1.0
        let switch = DeterministicPolicy::constant(3, 2, 2, 1).unwrap();
        assert!((subopt_mdp(&spec, &switch, &r).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(subopt_mdp(&spec, &pol, &r).unwrap(), 0.0);
    }

    #[test]
    fn single_action_optimal_equals_evaluation() {
        let t = [0.2, 0.8, 0.6, 0.4, 0.5, 0.5, 0.1, 0.9];
        let r = [0.3, 0.9, 0.4, 0.2];
        let spec = LinearMdpSpec::tabular(2, 1, 2, &t, &r, 0).unwrap();
        let rt = spec.reward_table();
        let only = DeterministicPolicy::constant(2, 2, 1, 0).unwrap();
        let a = optimal_value(&spec, &rt).unwrap().0;
        let b = evaluate_policy(&spec, &only, &rt).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        assert_eq!(argmax(&[1.0, 2.0, 2.0]), (1, 2.0));
        assert_eq!(argmin(&[1.0, 0.0, 0.0]), (1, 0.0));
    }

    #[test]
    fn clamp_gap_rules() {
        assert_eq!(clamp_gap(-1e-12, "x").unwrap(), 0.0);
        assert!(matches!(clamp_gap(-1e-6, "x"), Err(Error::Consistency(_))));
    }

    fn one_step_game(payoff: &[f64], na: usize, nb: usize) -> LinearMgSpec {
        // single state, H = 1, reward = payoff
        let t = vec![1.0; na * nb];
        LinearMgSpec::tabular(1, na, nb, 1, &t, payoff, 0).unwrap()
    }

    #[test]
    fn matching_pennies_nash() {
        // payoff ±1 rescaled to [0, 1]
        let spec = one_step_game(&[1.0, 0.0, 0.0, 1.0], 2, 2);
        let r = spec.joint().reward_table();
        let (v, pair) = nash_value_backward(&spec, &r).unwrap();
        assert!((v.get(0, 0) - 0.5).abs() < 1e-9);
        assert!((pair.pi.dist(0, 0)[0] - 0.5).abs() < 1e-6);
        assert!((pair.nu.dist(0, 0)[0] - 0.5).abs() < 1e-6);
        assert!(subopt_mg(&spec, &pair, &r).unwrap() <= 1e-7);
    }

    #[test]
    fn rps_uniform_value_is_mean_payoff() {
        let payoff = [0.5, 0.0, 1.0, 1.0, 0.5, 0.0, 0.0, 1.0, 0.5];
        let spec = one_step_game(&payoff, 3, 3);
        let r = spec.joint().reward_table();
        let pair = MixedPolicyPair {
            pi: MixedPolicy::uniform(1, 1, 3),
            nu: MixedPolicy::uniform(1, 1, 3),
        };
        let v = evaluate_joint_policy(&spec, &pair, &r).unwrap();
        assert!((v.get(0, 0) - 0.5).abs() < 1e-12);
        assert!(subopt_mg(&spec, &pair, &r).unwrap() < 1e-12);
    }

    #[test]
    fn one_step_best_response_is_column_minimizer() {
        let payoff = [0.9, 0.2, 0.4, 0.1, 0.8, 0.3];
        let spec = one_step_game(&payoff, 2, 3);
        let r = spec.joint().reward_table();
        let pure_row0 = MixedPolicy::new(1, 1, 2, vec![1.0, 0.0]).unwrap();
        let (nu, v) = best_response_p2(&spec, &pure_row0, &r).unwrap();
        assert_eq!(nu.dist(0, 0), &[0.0, 1.0, 0.0]);
        assert!((v.get(0, 0) - 0.2).abs() < 1e-12);
        let pure_col2 = MixedPolicy::new(1, 1, 3, vec![0.0, 0.0, 1.0]).unwrap();
        let (pi, v) = best_response_p1(&spec, &pure_col2, &r).unwrap();
        assert_eq!(pi.dist(0, 0), &[1.0, 0.0]);
        assert!((v.get(0, 0) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn exploitable_pair_has_hand_computed_gap() {
        // matching pennies in [0,1]; P1 always plays 0, P2 uniform
        // br₁(uniform) = 0.5, br₂(row 0) = 0 → gap 0.5
        let spec = one_step_game(&[1.0, 0.0, 0.0, 1.0], 2, 2);
        let r = spec.joint().reward_table();
        let pair = MixedPolicyPair {
            pi: MixedPolicy::new(1, 1, 2, vec![1.0, 0.0]).unwrap(),
            nu: MixedPolicy::uniform(1, 1, 2),
        };
        assert!((subopt_mg(&spec, &pair, &r).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn two_step_game_hand_dp() {
        // two states, 2x2 actions, H = 2. Joint action (a, b) moves to state
        // a XOR b deterministically. Stage rewards at state 0 are matching
        // pennies, at state 1 constant 1.
        let mut t = Vec::new();
        for _h in 0..2 {
            for _x in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        if a == b {
                            t.extend_from_slice(&[1.0, 0.0]);
                        } else {
                            t.extend_from_slice(&[0.0, 1.0]);
                        }
                    }
                }
            }
        }
        let mut r = Vec::new();
        for _h in 0..2 {
            r.extend_from_slice(&[1.0, 0.0, 0.0, 1.0]);
            r.extend_from_slice(&[1.0, 1.0, 1.0, 1.0]);
        }
        let spec = LinearMgSpec::tabular(2, 2, 2, 2, &t, &r, 0).unwrap();
        let rt = spec.joint().reward_table();
        // h=2: V(0) = 0.5, V(1) = 1.
        // h=1 at x=0: Q = [[1+0.5, 0+1], [0+1, 1+0.5]] → value 1.25.
        let (v, pair) = nash_value_backward(&spec, &rt).unwrap();
        assert!((v.get(1, 0) - 0.5).abs() < 1e-9);
        assert!((v.get(1, 1) - 1.0).abs() < 1e-9);
        assert!((v.get(0, 0) - 1.25).abs() < 1e-9);
        assert!(subopt_mg(&spec, &pair, &rt).unwrap() <= 1e-6);
    }

    #[test]
    fn mixed_policy_validation() {
        assert!(MixedPolicy::new(1, 1, 2, vec![0.6, 0.6]).is_err());
        assert!(MixedPolicy::new(1, 1, 2, vec![0.5]).is_err());
        assert!(DeterministicPolicy::new(1, 2, 2, vec![0, 2]).is_err());
    }

    #[test]
    fn policy_files_round_trip_and_revalidate() {
        let d = PolicyFile::Deterministic(DeterministicPolicy::new(2, 2, 3, vec![0, 2, 1, 1]).unwrap());
        assert_eq!(PolicyFile::from_json(&d.to_json()).unwrap(), d);
        let m = PolicyFile::Pair(MixedPolicyPair {
            pi: MixedPolicy::uniform(1, 2, 2),
            nu: MixedPolicy::new(1, 2, 3, vec![0.2, 0.3, 0.5, 1.0, 0.0, 0.0]).unwrap(),
        });
        let text = m.to_json();
        assert!(text.contains("\"kind\":\"pair\""));
        assert_eq!(PolicyFile::from_json(&text).unwrap(), m);
        let bad = text.replace("0.2", "0.9");
        assert!(matches!(PolicyFile::from_json(&bad), Err(Error::Param(_))));
        let bad = d.to_json().replace("[0,2,1,1]", "[0,3,1,1]");
        assert!(PolicyFile::from_json(&bad).is_err());
    }
}
