use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::BetaRule;
use crate::envs::{generate_random_mdp, generate_random_mg, hash_json, RewardTable, Spec};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Polsvi,
    Rf,
    Rfmg,
}

impl Algorithm {
    /// Name of the final per-run metric.
    pub fn metric(self) -> &'static str {
        match self {
            Algorithm::Polsvi => crate::agents::metric::REGRET,
            Algorithm::Rf | Algorithm::Rfmg => crate::agents::metric::SUBOPT,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Mdp,
    Mg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    pub kind: EnvKind,
    pub n_states: usize,
    pub n_actions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_actions_p2: Option<usize>,
    pub horizon: usize,
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentSource {
    Generate(GeneratorParams),
    SpecFile(PathBuf),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardSource {
    /// The environment's own reward.
    #[default]
    Env,
    File(PathBuf),
    /// Reward 1 in `state` at every step, 0 elsewhere.
    SingleGoal { state: usize },
    /// `clip(⟨φ(x,a), θ_h⟩, 0, 1)` with `θ_h ~ U[0,1]^d`.
    RandomLinear { seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub episodes: Vec<usize>,
    pub agents: Vec<usize>,
    #[serde(default = "default_betas")]
    pub beta: Vec<BetaRule>,
    /// Overrides for generated environments only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub horizon: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dim: Vec<usize>,
}

fn default_betas() -> Vec<BetaRule> {
    vec![BetaRule::default()]
}

fn default_lambda() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_replications() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSource,
    pub algorithm: Algorithm,
    pub grid: Grid,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub planning_reward: RewardSource,
    pub output_dir: PathBuf,
    #[serde(default = "default_true")]
    pub oracle_eval: bool,
    /// Runs per grid point; replication `r` uses seed `seed + r`.
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub save_datasets: bool,
    /// Worker threads; not part of the config hash since outputs never depend on it.
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
}

/// One cell of the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub episodes: usize,
    pub agents: usize,
    pub beta: BetaRule,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

impl std::fmt::Display for GridPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "grid point K={} P={} beta={:?}", self.episodes, self.agents, self.beta)?;
        if let Some(h) = self.horizon {
            write!(f, " H={h}")?;
        }
        if let Some(d) = self.dim {
            write!(f, " d={d}")?;
        }
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| e.context(path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization is infallible")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hash_json(self)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.episodes.is_empty() || g.agents.is_empty() || g.beta.is_empty() {
            return Err(Error::Config("grid lists must be non-empty".into()));
        }
        if g.episodes.contains(&0) || g.agents.contains(&0) {
            return Err(Error::Config("episodes and agents must be at least 1".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        for b in &g.beta {
            b.resolve(2, 2, 1, 1).map_err(|e| Error::Config(e.to_string()))?;
        }
        let kind = match &self.environment {
            EnvironmentSource::Generate(p) => {
                if p.kind == EnvKind::Mg && p.n_actions_p2.is_none() {
                    return Err(Error::Config("generated games need n_actions_p2".into()));
                }
                if p.kind == EnvKind::Mdp && p.n_actions_p2.is_some() {
                    return Err(Error::Config("n_actions_p2 is only meaningful for games".into()));
                }
                Some(p.kind)
            }
            EnvironmentSource::SpecFile(_) => {
                if !g.horizon.is_empty() || !g.dim.is_empty() {
                    return Err(Error::Config("horizon/dim grids require a generated environment".into()));
                }
                None
            }
        };
        if let Some(kind) = kind {
            check_pairing(self.algorithm, kind)?;
        }
        Ok(())
    }

    /// Cartesian product in `(horizon, dim, beta, episodes, agents)` order.
    pub fn grid_points(&self) -> Vec<GridPoint> {
        let opt = |v: &[usize]| -> Vec<Option<usize>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().copied().map(Some).collect()
            }
        };
        let mut out = Vec::new();
        for horizon in opt(&self.grid.horizon) {
            for dim in opt(&self.grid.dim) {
                for beta in &self.grid.beta {
                    for &episodes in &self.grid.episodes {
                        for &agents in &self.grid.agents {
                            out.push(GridPoint {
                                episodes,
                                agents,
                                beta: *beta,
                                horizon,
                                dim,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Environment for one grid point.
    pub fn build_environment(&self, point: &GridPoint) -> Result<Spec> {
        let spec = match &self.environment {
            EnvironmentSource::Generate(p) => {
                let horizon = point.horizon.unwrap_or(p.horizon);
                let dim = point.dim.unwrap_or(p.dim);
                match p.kind {
                    EnvKind::Mdp => Spec::Mdp(generate_random_mdp(p.n_states, p.n_actions, horizon, dim, p.seed)?),
                    EnvKind::Mg => Spec::Mg(generate_random_mg(
                        p.n_states,
                        p.n_actions,
                        p.n_actions_p2.unwrap_or(1),
                        horizon,
                        dim,
                        p.seed,
                    )?),
                }
            }
            EnvironmentSource::SpecFile(path) => Spec::load(path)?,
        };
        let kind = match spec {
            Spec::Mdp(_) => EnvKind::Mdp,
            Spec::Mg(_) => EnvKind::Mg,
        };
        check_pairing(self.algorithm, kind)?;
        Ok(spec)
    }

    pub fn planning_reward(&self, spec: &Spec) -> Result<RewardTable> {
        let joint = spec.joint();
        let (hz, s, a) = (joint.horizon(), joint.n_states(), joint.n_actions());
        match &self.planning_reward {
            RewardSource::Env => Ok(joint.reward_table()),
            RewardSource::File(path) => {
                let r = RewardTable::load(path)?;
                if r.horizon() != hz || r.n_states() != s || r.n_actions() != a {
                    return Err(Error::Config(format!("reward file {} does not match the environment", path.display())));
                }
                Ok(r)
            }
            RewardSource::SingleGoal { state } => {
                if *state >= s {
                    return Err(Error::Config(format!("goal state {state} out of range")));
                }
                RewardTable::from_fn(hz, s, a, |_, x, _| if x == *state { 1.0 } else { 0.0 })
            }
            RewardSource::RandomLinear { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let thetas: Vec<Vec<f64>> = (0..hz)
                    .map(|_| (0..joint.dim()).map(|_| rng.random::<f64>()).collect())
                    .collect();
                RewardTable::from_fn(hz, s, a, |h, x, act| {
                    crate::envs::dot(joint.phi(x, act), &thetas[h]).clamp(0.0, 1.0)
                })
            }
        }
    }
}

fn check_pairing(algorithm: Algorithm, kind: EnvKind) -> Result<()> {
    match (algorithm, kind) {
        (Algorithm::Rfmg, EnvKind::Mg) | (Algorithm::Polsvi | Algorithm::Rf, EnvKind::Mdp) => Ok(()),
        (Algorithm::Rfmg, EnvKind::Mdp) => Err(Error::Config("rfmg requires a Markov-game environment".into())),
        _ => Err(Error::Config(format!("{algorithm:?} requires an MDP environment"))),
    }
}
