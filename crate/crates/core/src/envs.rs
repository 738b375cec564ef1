//! Finite linear MDPs and zero-sum linear Markov games.
//!
//! A game over `|A| × |B|` joint actions is stored as an MDP over the joint
//! index `a·|B| + b`; [`LinearMgSpec::joint`] exposes that view so the
//! dynamic-programming and learning code is shared.

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Slack on `‖φ‖ ≤ 1`.
pub const FEATURE_TOL: f64 = 1e-9;
/// Smallest kernel entry accepted before it counts as negative.
pub const NEGATIVE_PROB_TOL: f64 = 1e-10;
/// Slack on kernel rows summing to one.
pub const ROW_SUM_TOL: f64 = 1e-8;
/// Slack on rewards lying in `[0, 1]` and on the `√d` norm bounds.
pub const RANGE_TOL: f64 = 1e-9;

/// Known feature map `φ(x, a) ∈ ℝᵈ` over a finite state-action set.
///
/// This is everything planning is allowed to see about the environment.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    n_states: usize,
    n_actions: usize,
    dim: usize,
    features: Vec<f64>,
}

impl FeatureMap {
    /// `features` is `[x][a][i]` flattened row-major.
    pub fn new(n_states: usize, n_actions: usize, dim: usize, features: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || dim == 0 {
            return Err(Error::param("feature map sizes must be positive"));
        }
        if features.len() != n_states * n_actions * dim {
            return Err(Error::param(format!(
                "feature table has {} entries, expected {}",
                features.len(),
                n_states * n_actions * dim
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("feature table contains non-finite entries"));
        }
        Ok(Self {
            n_states,
            n_actions,
            dim,
            features,
        })
    }

    /// One-hot features over every state-action pair.
    pub fn one_hot(n_states: usize, n_actions: usize) -> Result<Self> {
        let d = n_states * n_actions;
        let mut features = vec![0.0; d * d];
        for i in 0..d {
            features[i * d + i] = 1.0;
        }
        Self::new(n_states, n_actions, d, features)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn pair(&self, x: usize, a: usize) -> usize {
        x * self.n_actions + a
    }

    pub fn phi(&self, x: usize, a: usize) -> &[f64] {
        self.phi_pair(self.pair(x, a))
    }

    pub fn phi_pair(&self, pair: usize) -> &[f64] {
        &self.features[pair * self.dim..(pair + 1) * self.dim]
    }

    pub fn check_index(&self, x: usize, a: usize) -> Result<()> {
        if x >= self.n_states {
            return Err(Error::param(format!("state {x} out of range (|S| = {})", self.n_states)));
        }
        if a >= self.n_actions {
            return Err(Error::param(format!("action {a} out of range (|A| = {})", self.n_actions)));
        }
        Ok(())
    }
}

/// Per-step reward table over `(x, a)` (joint index for games), values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardTable {
    horizon: usize,
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl RewardTable {
    pub fn new(horizon: usize, n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != horizon * n_states * n_actions {
            return Err(Error::param(format!(
                "reward table has {} entries, expected {}",
                values.len(),
                horizon * n_states * n_actions
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= -RANGE_TOL && **v <= 1.0 + RANGE_TOL))
        {
            return Err(Error::param(format!("reward entry {i} = {v} outside [0, 1]")));
        }
        let values = values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Self {
            horizon,
            n_states,
            n_actions,
            values,
        })
    }

    pub fn constant(horizon: usize, n_states: usize, n_actions: usize, value: f64) -> Result<Self> {
        Self::new(horizon, n_states, n_actions, vec![value; horizon * n_states * n_actions])
    }

    pub fn zeros(horizon: usize, n_states: usize, n_actions: usize) -> Self {
        Self {
            horizon,
            n_states,
            n_actions,
            values: vec![0.0; horizon * n_states * n_actions],
        }
    }

    pub fn from_fn(
        horizon: usize,
        n_states: usize,
        n_actions: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(horizon * n_states * n_actions);
        for h in 0..horizon {
            for x in 0..n_states {
                for a in 0..n_actions {
                    values.push(f(h, x, a));
                }
            }
        }
        Self::new(horizon, n_states, n_actions, values)
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

    /// Reward at step `h` (0-based).
    pub fn get(&self, h: usize, x: usize, a: usize) -> f64 {
        self.values[(h * self.n_states + x) * self.n_actions + a]
    }

    pub fn step(&self, h: usize) -> &[f64] {
        let w = self.n_states * self.n_actions;
        &self.values[h * w..(h + 1) * w]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn matches(&self, horizon: usize, n_states: usize, n_actions: usize) -> Result<()> {
        if self.horizon != horizon || self.n_states != n_states || self.n_actions != n_actions {
            return Err(Error::param(format!(
                "reward shape (H={}, S={}, A={}) does not match (H={horizon}, S={n_states}, A={n_actions})",
                self.horizon, self.n_states, self.n_actions
            )));
        }
        Ok(())
    }
}

/// Finite linear MDP: `P_h(x'|x,a) = ⟨φ(x,a), μ_h(x')⟩`, `r_h(x,a) = ⟨φ(x,a), θ_h⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMdpSpec {
    features: FeatureMap,
    horizon: usize,
    /// `[h][x'][i]` flattened.
    measures: Vec<f64>,
    /// `[h][i]` flattened.
    theta: Vec<f64>,
    initial_state: usize,
}

impl LinearMdpSpec {
    pub fn new(
        features: FeatureMap,
        horizon: usize,
        measures: Vec<f64>,
        theta: Vec<f64>,
        initial_state: usize,
    ) -> Result<Self> {
        let (s, d) = (features.n_states(), features.dim());
        if horizon == 0 {
            return Err(Error::param("horizon must be positive"));
        }
        if measures.len() != horizon * s * d {
            return Err(Error::param(format!(
                "measure table has {} entries, expected {}",
                measures.len(),
                horizon * s * d
            )));
        }
        if theta.len() != horizon * d {
            return Err(Error::param(format!(
                "theta table has {} entries, expected {}",
                theta.len(),
                horizon * d
            )));
        }
        if measures.iter().chain(theta.iter()).any(|v| !v.is_finite()) {
            return Err(Error::param("measures or theta contain non-finite entries"));
        }
        if initial_state >= s {
            return Err(Error::param(format!("initial state {initial_state} out of range")));
        }
        Ok(Self {
            features,
            horizon,
            measures,
            theta,
            initial_state,
        })
    }

    /// One-hot embedding of a tabular MDP. `transitions` is `[h][x][a][x']`,
    /// `rewards` is `[h][x][a]`, both flattened.
    pub fn tabular(
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        transitions: &[f64],
        rewards: &[f64],
        initial_state: usize,
    ) -> Result<Self> {
        let pairs = n_states * n_actions;
        if transitions.len() != horizon * pairs * n_states {
            return Err(Error::param("transition table has the wrong size"));
        }
        if rewards.len() != horizon * pairs {
            return Err(Error::param("reward table has the wrong size"));
        }
        let features = FeatureMap::one_hot(n_states, n_actions)?;
        // μ_h(x')_i = P_h(x' | pair i), θ_h,i = r_h(pair i)
        let mut measures = vec![0.0; horizon * n_states * pairs];
        for h in 0..horizon {
            for i in 0..pairs {
                for xn in 0..n_states {
                    measures[(h * n_states + xn) * pairs + i] =
                        transitions[(h * pairs + i) * n_states + xn];
                }
            }
        }
        Self::new(features, horizon, measures, rewards.to_vec(), initial_state)
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    pub fn n_states(&self) -> usize {
        self.features.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.features.n_actions()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn phi(&self, x: usize, a: usize) -> &[f64] {
        self.features.phi(x, a)
    }

    pub fn measure(&self, h: usize, next: usize) -> &[f64] {
        let d = self.dim();
        let off = (h * self.n_states() + next) * d;
        &self.measures[off..off + d]
    }

    pub fn theta(&self, h: usize) -> &[f64] {
        let d = self.dim();
        &self.theta[h * d..(h + 1) * d]
    }

    /// Unclipped `⟨φ(x,a), μ_h(x')⟩` for every `x'`.
    pub fn raw_kernel_row(&self, h: usize, x: usize, a: usize) -> Vec<f64> {
        let phi = self.phi(x, a);
        (0..self.n_states())
            .map(|xn| dot(phi, self.measure(h, xn)))
            .collect()
    }

    /// Kernel row with float-noise negatives clipped and the row renormalized.
    pub fn kernel_row(&self, h: usize, x: usize, a: usize) -> Vec<f64> {
        let mut row: Vec<f64> = self.raw_kernel_row(h, x, a).into_iter().map(|p| p.max(0.0)).collect();
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|p| *p /= total);
        }
        row
    }

    /// Deterministic reward `⟨φ(x,a), θ_h⟩` clamped to `[0, 1]`.
    pub fn reward(&self, h: usize, x: usize, a: usize) -> f64 {
        dot(self.phi(x, a), self.theta(h)).clamp(0.0, 1.0)
    }

    /// The environment's own reward as a table.
    pub fn reward_table(&self) -> RewardTable {
        let (hz, s, a) = (self.horizon, self.n_states(), self.n_actions());
        let mut values = Vec::with_capacity(hz * s * a);
        for h in 0..hz {
            for x in 0..s {
                for act in 0..a {
                    values.push(self.reward(h, x, act));
                }
            }
        }
        RewardTable {
            horizon: hz,
            n_states: s,
            n_actions: a,
            values,
        }
    }

    /// Full clipped kernel for all steps, used by the oracle and the simulators.
    pub fn kernel(&self) -> TransitionKernel {
        let (s, a) = (self.n_states(), self.n_actions());
        let mut probs = Vec::with_capacity(self.horizon * s * a * s);
        for h in 0..self.horizon {
            for x in 0..s {
                for act in 0..a {
                    probs.extend(self.kernel_row(h, x, act));
                }
            }
        }
        TransitionKernel {
            n_states: s,
            n_actions: a,
            horizon: self.horizon,
            probs,
        }
    }

    /// Draws `x' ~ P_h(·|x,a)` and returns it with the deterministic reward.
    pub fn sample_transition<R: Rng + ?Sized>(
        &self,
        x: usize,
        a: usize,
        h: usize,
        rng: &mut R,
    ) -> Result<(usize, f64)> {
        self.features.check_index(x, a)?;
        if h >= self.horizon {
            return Err(Error::param(format!("step {h} out of range (H = {})", self.horizon)));
        }
        let row = self.kernel_row(h, x, a);
        Ok((sample_categorical(&row, rng), self.reward(h, x, a)))
    }

    pub fn validate(&self) -> ValidationReport {
        validate_model(self, None)
    }

    /// SHA-256 of the canonical JSON rendering.
    pub fn content_hash(&self) -> String {
        hash_json(&SpecFile::from_mdp(self))
    }
}

/// Zero-sum linear Markov game with features over joint actions.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMgSpec {
    n_actions_p1: usize,
    n_actions_p2: usize,
    joint: LinearMdpSpec,
}

impl LinearMgSpec {
    /// Wraps a joint-action MDP whose action index is `a·|B| + b`.
    pub fn from_joint(n_actions_p1: usize, n_actions_p2: usize, joint: LinearMdpSpec) -> Result<Self> {
        if n_actions_p1 == 0 || n_actions_p2 == 0 {
            return Err(Error::param("action sets must be non-empty"));
        }
        if joint.n_actions() != n_actions_p1 * n_actions_p2 {
            return Err(Error::param(format!(
                "joint MDP has {} actions, expected {}·{}",
                joint.n_actions(),
                n_actions_p1,
                n_actions_p2
            )));
        }
        Ok(Self {
            n_actions_p1,
            n_actions_p2,
            joint,
        })
    }

    /// One-hot embedding of a tabular game, tables indexed `[h][x][a][b][x']`
    /// and `[h][x][a][b]`.
    pub fn tabular(
        n_states: usize,
        n_actions_p1: usize,
        n_actions_p2: usize,
        horizon: usize,
        transitions: &[f64],
        rewards: &[f64],
        initial_state: usize,
    ) -> Result<Self> {
        let joint = LinearMdpSpec::tabular(
            n_states,
            n_actions_p1 * n_actions_p2,
            horizon,
            transitions,
            rewards,
            initial_state,
        )?;
        Self::from_joint(n_actions_p1, n_actions_p2, joint)
    }

    pub fn joint(&self) -> &LinearMdpSpec {
        &self.joint
    }

    pub fn n_states(&self) -> usize {
        self.joint.n_states()
    }

    pub fn n_actions_p1(&self) -> usize {
        self.n_actions_p1
    }

    pub fn n_actions_p2(&self) -> usize {
        self.n_actions_p2
    }

    pub fn horizon(&self) -> usize {
        self.joint.horizon()
    }

    pub fn dim(&self) -> usize {
        self.joint.dim()
    }

    pub fn initial_state(&self) -> usize {
        self.joint.initial_state()
    }

    pub fn joint_index(&self, a: usize, b: usize) -> usize {
        a * self.n_actions_p2 + b
    }

    pub fn split_index(&self, joint: usize) -> (usize, usize) {
        (joint / self.n_actions_p2, joint % self.n_actions_p2)
    }

    pub fn phi(&self, x: usize, a: usize, b: usize) -> &[f64] {
        self.joint.phi(x, self.joint_index(a, b))
    }

    pub fn reward(&self, h: usize, x: usize, a: usize, b: usize) -> f64 {
        self.joint.reward(h, x, self.joint_index(a, b))
    }

    pub fn sample_transition<R: Rng + ?Sized>(
        &self,
        x: usize,
        a: usize,
        b: usize,
        h: usize,
        rng: &mut R,
    ) -> Result<(usize, f64)> {
        if a >= self.n_actions_p1 || b >= self.n_actions_p2 {
            return Err(Error::param(format!("joint action ({a}, {b}) out of range")));
        }
        self.joint.sample_transition(x, self.joint_index(a, b), h, rng)
    }

    pub fn validate(&self) -> ValidationReport {
        validate_model(&self.joint, Some((self.n_actions_p1, self.n_actions_p2)))
    }

    pub fn content_hash(&self) -> String {
        hash_json(&SpecFile::from_mg(self))
    }
}

/// Clipped, renormalized transition probabilities `[h][x][a][x']`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionKernel {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    probs: Vec<f64>,
}

impl TransitionKernel {
    pub fn row(&self, h: usize, x: usize, a: usize) -> &[f64] {
        let off = ((h * self.n_states + x) * self.n_actions + a) * self.n_states;
        &self.probs[off..off + self.n_states]
    }

    /// `Σ_{x'} P_h(x'|x,a) v(x')`.
    pub fn expect(&self, h: usize, x: usize, a: usize, v: &[f64]) -> f64 {
        dot(self.row(h, x, a), v)
    }

    pub fn sample<R: Rng + ?Sized>(&self, h: usize, x: usize, a: usize, rng: &mut R) -> usize {
        sample_categorical(self.row(h, x, a), rng)
    }
}

/// Inverse-CDF draw; the last positive entry absorbs rounding slack.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Which structural constraint a spec violates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    HorizonTooShort,
    DimensionTooSmall,
    FeatureNorm,
    NegativeProbability,
    KernelNormalization,
    RewardRange,
    MeasureNorm,
    ThetaNorm,
}

/// One violated constraint with where it happened and the measured value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub location: String,
    pub measured: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {}: measured {}", self.kind, self.location, self.measured)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

fn validate_model(spec: &LinearMdpSpec, split: Option<(usize, usize)>) -> ValidationReport {
    let mut out = Vec::new();
    let (s, a, d, hz) = (spec.n_states(), spec.n_actions(), spec.dim(), spec.horizon());
    let sqrt_d = (d as f64).sqrt();
    let loc = |x: usize, act: usize| match split {
        Some((_, nb)) => format!("(x={x}, a={}, b={})", act / nb, act % nb),
        None => format!("(x={x}, a={act})"),
    };

    if hz < 2 {
        out.push(Violation {
            kind: ViolationKind::HorizonTooShort,
            location: "horizon".into(),
            measured: hz as f64,
        });
    }
    if d < 2 {
        out.push(Violation {
            kind: ViolationKind::DimensionTooSmall,
            location: "dim".into(),
            measured: d as f64,
        });
    }
    for x in 0..s {
        for act in 0..a {
            let n = norm(spec.phi(x, act));
            if n > 1.0 + FEATURE_TOL {
                out.push(Violation {
                    kind: ViolationKind::FeatureNorm,
                    location: loc(x, act),
                    measured: n,
                });
            }
        }
    }
    for h in 0..hz {
        for x in 0..s {
            for act in 0..a {
                let row = spec.raw_kernel_row(h, x, act);
                for (xn, &p) in row.iter().enumerate() {
                    if p < -NEGATIVE_PROB_TOL {
                        out.push(Violation {
                            kind: ViolationKind::NegativeProbability,
                            location: format!("h={h} {} -> x'={xn}", loc(x, act)),
                            measured: p,
                        });
                    }
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > ROW_SUM_TOL {
                    out.push(Violation {
                        kind: ViolationKind::KernelNormalization,
                        location: format!("h={h} {}", loc(x, act)),
                        measured: total,
                    });
                }
                let r = dot(spec.phi(x, act), spec.theta(h));
                if !(-RANGE_TOL..=1.0 + RANGE_TOL).contains(&r) {
                    out.push(Violation {
                        kind: ViolationKind::RewardRange,
                        location: format!("h={h} {}", loc(x, act)),
                        measured: r,
                    });
                }
            }
        }
        // ‖μ_h(S)‖: Euclidean norm of the vector of total coordinate measures
        let mut total_measure = vec![0.0; d];
        for xn in 0..s {
            for (t, m) in total_measure.iter_mut().zip(spec.measure(h, xn)) {
                *t += m.abs();
            }
        }
        let mn = norm(&total_measure);
        if mn > sqrt_d * (1.0 + RANGE_TOL) {
            out.push(Violation {
                kind: ViolationKind::MeasureNorm,
                location: format!("h={h}"),
                measured: mn,
            });
        }
        let tn = norm(spec.theta(h));
        if tn > sqrt_d * (1.0 + RANGE_TOL) {
            out.push(Violation {
                kind: ViolationKind::ThetaNorm,
                location: format!("h={h}"),
                measured: tn,
            });
        }
    }
    ValidationReport { violations: out }
}

fn random_simplex_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|p| *p /= total);
    v
}

fn check_generator_sizes(n_states: usize, n_actions: usize, horizon: usize, dim: usize) -> Result<()> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::param("state and action counts must be positive"));
    }
    if horizon < 2 {
        return Err(Error::param(format!("horizon must be at least 2, got {horizon}")));
    }
    if dim < 2 {
        return Err(Error::param(format!("dimension must be at least 2, got {dim}")));
    }
    let pairs = n_states * n_actions;
    if dim > pairs {
        return Err(Error::Generation(format!(
            "dimension {dim} exceeds the {pairs} state-action pairs available as anchors"
        )));
    }
    Ok(())
}

/// Simplex-feature construction: `d` anchor pairs carry the basis vectors,
/// the remaining pairs get random convex combinations of them; each basis
/// coordinate's measure is a random next-state distribution and `θ_h` is a
/// random reward per anchor. `dim = n_states·n_actions` yields the one-hot
/// tabular embedding with random tables.
fn generate_model(n_states: usize, n_actions: usize, horizon: usize, dim: usize, seed: u64) -> Result<LinearMdpSpec> {
    check_generator_sizes(n_states, n_actions, horizon, dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = n_states * n_actions;

    let features = if dim == pairs {
        FeatureMap::one_hot(n_states, n_actions)?
    } else {
        let mut order: Vec<usize> = (0..pairs).collect();
        order.shuffle(&mut rng);
        let mut table = vec![0.0; pairs * dim];
        let mut anchor_of = vec![None; pairs];
        for (j, &pair) in order.iter().take(dim).enumerate() {
            anchor_of[pair] = Some(j);
        }
        for pair in 0..pairs {
            let row = &mut table[pair * dim..(pair + 1) * dim];
            match anchor_of[pair] {
                Some(j) => row[j] = 1.0,
                None => row.copy_from_slice(&random_simplex_point(&mut rng, dim)),
            }
        }
        FeatureMap::new(n_states, n_actions, dim, table)?
    };

    let mut measures = vec![0.0; horizon * n_states * dim];
    let mut theta = vec![0.0; horizon * dim];
    for h in 0..horizon {
        for j in 0..dim {
            let dist = random_simplex_point(&mut rng, n_states);
            for (xn, p) in dist.into_iter().enumerate() {
                measures[(h * n_states + xn) * dim + j] = p;
            }
        }
        for j in 0..dim {
            theta[h * dim + j] = rng.random::<f64>().clamp(0.0, 1.0);
        }
    }
    let spec = LinearMdpSpec::new(features, horizon, measures, theta, 0)?;
    let report = spec.validate();
    if !report.is_valid() {
        return Err(Error::Generation(format!(
            "generated instance failed validation: {}",
            report.violations[0]
        )));
    }
    Ok(spec)
}

/// Random valid linear MDP; identical seeds give bit-identical specs.
pub fn generate_random_mdp(
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    dim: usize,
    seed: u64,
) -> Result<LinearMdpSpec> {
    generate_model(n_states, n_actions, horizon, dim, seed)
}

/// Random valid linear Markov game over joint actions.
pub fn generate_random_mg(
    n_states: usize,
    n_actions_p1: usize,
    n_actions_p2: usize,
    horizon: usize,
    dim: usize,
    seed: u64,
) -> Result<LinearMgSpec> {
    let joint = generate_model(n_states, n_actions_p1 * n_actions_p2, horizon, dim, seed)?;
    LinearMgSpec::from_joint(n_actions_p1, n_actions_p2, joint)
}

/// Either kind of environment, as loaded from a spec file.
#[derive(Clone, Debug, PartialEq)]
pub enum Spec {
    Mdp(LinearMdpSpec),
    Mg(LinearMgSpec),
}

impl Spec {
    pub fn validate(&self) -> ValidationReport {
        match self {
            Spec::Mdp(s) => s.validate(),
            Spec::Mg(s) => s.validate(),
        }
    }

    pub fn joint(&self) -> &LinearMdpSpec {
        match self {
            Spec::Mdp(s) => s,
            Spec::Mg(s) => s.joint(),
        }
    }

    pub fn content_hash(&self) -> String {
        match self {
            Spec::Mdp(s) => s.content_hash(),
            Spec::Mg(s) => s.content_hash(),
        }
    }

    pub fn to_json(&self) -> String {
        let file = match self {
            Spec::Mdp(s) => SpecFile::from_mdp(s),
            Spec::Mg(s) => SpecFile::from_mg(s),
        };
        serde_json::to_string_pretty(&file).expect("spec serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SpecFile = serde_json::from_str(text).map_err(|e| Error::Format {
            path: "<spec>".into(),
            message: e.to_string(),
        })?;
        file.into_spec()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
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

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum SpecFile {
    Mdp {
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        dim: usize,
        initial_state: usize,
        /// `[x][a][i]`
        features: Vec<Vec<Vec<f64>>>,
        /// `[h][x'][i]`
        measures: Vec<Vec<Vec<f64>>>,
        /// `[h][i]`
        theta: Vec<Vec<f64>>,
    },
    Mg {
        n_states: usize,
        n_actions_p1: usize,
        n_actions_p2: usize,
        horizon: usize,
        dim: usize,
        initial_state: usize,
        /// `[x][a][b][i]`
        features: Vec<Vec<Vec<Vec<f64>>>>,
        measures: Vec<Vec<Vec<f64>>>,
        theta: Vec<Vec<f64>>,
    },
}

fn nest_measures(spec: &LinearMdpSpec) -> Vec<Vec<Vec<f64>>> {
    (0..spec.horizon())
        .map(|h| (0..spec.n_states()).map(|xn| spec.measure(h, xn).to_vec()).collect())
        .collect()
}

fn nest_theta(spec: &LinearMdpSpec) -> Vec<Vec<f64>> {
    (0..spec.horizon()).map(|h| spec.theta(h).to_vec()).collect()
}

fn flatten_checked<'a>(
    rows: impl Iterator<Item = &'a Vec<f64>>,
    expected_rows: usize,
    width: usize,
    what: &str,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(expected_rows * width);
    let mut count = 0;
    for row in rows {
        if row.len() != width {
            return Err(Error::Format {
                path: "<spec>".into(),
                message: format!("{what}: row of length {} where {width} expected", row.len()),
            });
        }
        out.extend_from_slice(row);
        count += 1;
    }
    if count != expected_rows {
        return Err(Error::Format {
            path: "<spec>".into(),
            message: format!("{what}: {count} rows where {expected_rows} expected"),
        });
    }
    Ok(out)
}

impl SpecFile {
    fn from_mdp(spec: &LinearMdpSpec) -> Self {
        let (s, a) = (spec.n_states(), spec.n_actions());
        SpecFile::Mdp {
            n_states: s,
            n_actions: a,
            horizon: spec.horizon(),
            dim: spec.dim(),
            initial_state: spec.initial_state(),
            features: (0..s)
                .map(|x| (0..a).map(|act| spec.phi(x, act).to_vec()).collect())
                .collect(),
            measures: nest_measures(spec),
            theta: nest_theta(spec),
        }
    }

    fn from_mg(spec: &LinearMgSpec) -> Self {
        let (s, na, nb) = (spec.n_states(), spec.n_actions_p1(), spec.n_actions_p2());
        SpecFile::Mg {
            n_states: s,
            n_actions_p1: na,
            n_actions_p2: nb,
            horizon: spec.horizon(),
            dim: spec.dim(),
            initial_state: spec.initial_state(),
            features: (0..s)
                .map(|x| {
                    (0..na)
                        .map(|a| (0..nb).map(|b| spec.phi(x, a, b).to_vec()).collect())
                        .collect()
                })
                .collect(),
            measures: nest_measures(spec.joint()),
            theta: nest_theta(spec.joint()),
        }
    }

    fn into_spec(self) -> Result<Spec> {
        let build = |n_states: usize,
                     n_actions: usize,
                     horizon: usize,
                     dim: usize,
                     initial_state: usize,
                     flat_features: Vec<f64>,
                     measures: Vec<Vec<Vec<f64>>>,
                     theta: Vec<Vec<f64>>|
         -> Result<LinearMdpSpec> {
            if measures.len() != horizon || measures.iter().any(|m| m.len() != n_states) {
                return Err(Error::Format {
                    path: "<spec>".into(),
                    message: "measures must be [horizon][n_states][dim]".into(),
                });
            }
            let m = flatten_checked(measures.iter().flatten(), horizon * n_states, dim, "measures")?;
            let t = flatten_checked(theta.iter(), horizon, dim, "theta")?;
            let fm = FeatureMap::new(n_states, n_actions, dim, flat_features)?;
            LinearMdpSpec::new(fm, horizon, m, t, initial_state)
        };
        match self {
            SpecFile::Mdp {
                n_states,
                n_actions,
                horizon,
                dim,
                initial_state,
                features,
                measures,
                theta,
            } => {
                if features.len() != n_states || features.iter().any(|r| r.len() != n_actions) {
                    return Err(Error::Format {
                        path: "<spec>".into(),
                        message: "features must be [n_states][n_actions][dim]".into(),
                    });
                }
                let flat = flatten_checked(features.iter().flatten(), n_states * n_actions, dim, "features")?;
                Ok(Spec::Mdp(build(n_states, n_actions, horizon, dim, initial_state, flat, measures, theta)?))
            }
            SpecFile::Mg {
                n_states,
                n_actions_p1,
                n_actions_p2,
                horizon,
                dim,
                initial_state,
                features,
                measures,
                theta,
            } => {
                if features.len() != n_states
                    || features
                        .iter()
                        .any(|r| r.len() != n_actions_p1 || r.iter().any(|c| c.len() != n_actions_p2))
                {
                    return Err(Error::Format {
                        path: "<spec>".into(),
                        message: "features must be [n_states][n_actions_p1][n_actions_p2][dim]".into(),
                    });
                }
                let flat = flatten_checked(
                    features.iter().flatten().flatten(),
                    n_states * n_actions_p1 * n_actions_p2,
                    dim,
                    "features",
                )?;
                let joint = build(
                    n_states,
                    n_actions_p1 * n_actions_p2,
                    horizon,
                    dim,
                    initial_state,
                    flat,
                    measures,
                    theta,
                )?;
                Ok(Spec::Mg(LinearMgSpec::from_joint(n_actions_p1, n_actions_p2, joint)?))
            }
        }
    }
}

pub(crate) fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serialization is infallible");
    hex::encode(Sha256::digest(&bytes))
}

/// Reward file: `{"values": [h][x][a]}` with the joint index for games.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RewardFile {
    values: Vec<Vec<Vec<f64>>>,
}

impl RewardTable {
    pub fn to_json(&self) -> String {
        let values = (0..self.horizon)
            .map(|h| {
                (0..self.n_states)
                    .map(|x| (0..self.n_actions).map(|a| self.get(h, x, a)).collect())
                    .collect()
            })
            .collect();
        serde_json::to_string_pretty(&RewardFile { values }).expect("reward serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: RewardFile = serde_json::from_str(text).map_err(|e| Error::Format {
            path: "<reward>".into(),
            message: e.to_string(),
        })?;
        let horizon = file.values.len();
        let n_states = file.values.first().map_or(0, |v| v.len());
        let n_actions = file.values.first().and_then(|v| v.first()).map_or(0, |v| v.len());
        if horizon == 0 || n_states == 0 || n_actions == 0 {
            return Err(Error::Format {
                path: "<reward>".into(),
                message: "reward table must be non-empty".into(),
            });
        }
        let mut flat = Vec::with_capacity(horizon * n_states * n_actions);
        for step in &file.values {
            if step.len() != n_states {
                return Err(Error::Format {
                    path: "<reward>".into(),
                    message: "ragged reward table".into(),
                });
            }
            flat.extend(flatten_checked(step.iter(), n_states, n_actions, "reward")?);
        }
        Self::new(horizon, n_states, n_actions, flat)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}
