use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PlanningParams;
use crate::envs::FeatureMap;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Mdp,
    Mg,
}

/// One `(x, a[, b], r, x')` tuple. For reward-free runs `r` is the
/// exploration reward the central server assigned, not an environment reward.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub x: usize,
    pub a: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<usize>,
    pub r: f64,
    pub x_next: usize,
}

/// Trajectories indexed by `(episode k, agent p, step h)`, all 0-based.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    kind: DatasetKind,
    episodes: usize,
    agents: usize,
    horizon: usize,
    n_states: usize,
    n_actions: usize,
    n_actions_p2: Option<usize>,
    slots: Vec<Option<Transition>>,
    /// Feature table the data was collected under, carried for standalone planning.
    pub features: Option<FeatureMap>,
    /// Bonus scale and ridge used during exploration.
    pub planning: Option<PlanningParams>,
}

impl TrajectoryDataset {
    pub fn new(
        kind: DatasetKind,
        episodes: usize,
        agents: usize,
        horizon: usize,
        n_states: usize,
        n_actions: usize,
        n_actions_p2: Option<usize>,
    ) -> Result<Self> {
        if (kind == DatasetKind::Mg) != n_actions_p2.is_some() {
            return Err(Error::param("second-player action count must be given exactly for games"));
        }
        Ok(Self {
            kind,
            episodes,
            agents,
            horizon,
            n_states,
            n_actions,
            n_actions_p2,
            slots: vec![None; episodes * agents * horizon],
            features: None,
            planning: None,
        })
    }

    pub fn kind(&self) -> DatasetKind {
        self.kind
    }

    pub fn episodes(&self) -> usize {
        self.episodes
    }

    pub fn agents(&self) -> usize {
        self.agents
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

    pub fn n_actions_p2(&self) -> Option<usize> {
        self.n_actions_p2
    }

    /// Number of actions in the (joint) action index.
    pub fn n_joint_actions(&self) -> usize {
        self.n_actions * self.n_actions_p2.unwrap_or(1)
    }

    fn slot(&self, k: usize, p: usize, h: usize) -> usize {
        (k * self.agents + p) * self.horizon + h
    }

    pub fn set(&mut self, k: usize, p: usize, h: usize, t: Transition) -> Result<()> {
        if k >= self.episodes || p >= self.agents || h >= self.horizon {
            return Err(Error::param(format!("dataset index (k={k}, p={p}, h={h}) out of range")));
        }
        if t.x >= self.n_states || t.x_next >= self.n_states || t.a >= self.n_actions {
            return Err(Error::param(format!("transition {t:?} out of range")));
        }
        match (self.n_actions_p2, t.b) {
            (Some(nb), Some(b)) if b < nb => {}
            (None, None) => {}
            _ => return Err(Error::param(format!("transition {t:?} does not match the dataset kind"))),
        }
        let i = self.slot(k, p, h);
        if self.slots[i].is_some() {
            return Err(Error::param(format!("duplicate dataset entry (k={k}, p={p}, h={h})")));
        }
        self.slots[i] = Some(t);
        Ok(())
    }

    pub fn get(&self, k: usize, p: usize, h: usize) -> Option<&Transition> {
        self.slots.get(self.slot(k, p, h)).and_then(|s| s.as_ref())
    }

    pub fn is_complete(&self) -> bool {
        self.slots.iter().all(Option::is_some)
    }

    pub fn check_complete(&self) -> Result<()> {
        match self.slots.iter().position(Option::is_none) {
            None => Ok(()),
            Some(i) => {
                let h = i % self.horizon;
                let p = (i / self.horizon) % self.agents;
                let k = i / (self.horizon * self.agents);
                Err(Error::param(format!("dataset is missing entry (k={k}, p={p}, h={h})")))
            }
        }
    }

    /// Joint action index `a·|B| + b` (plain `a` for MDP data).
    pub fn joint_action(&self, t: &Transition) -> usize {
        match (self.n_actions_p2, t.b) {
            (Some(nb), Some(b)) => t.a * nb + b,
            _ => t.a,
        }
    }

    /// Entries at step `h` in `(k, p)` order.
    pub fn step(&self, h: usize) -> impl Iterator<Item = &Transition> + '_ {
        (0..self.episodes)
            .flat_map(move |k| (0..self.agents).map(move |p| (k, p)))
            .filter_map(move |(k, p)| self.get(k, p, h))
    }

    pub fn to_json(&self) -> String {
        let file = DatasetFile::from(self);
        serde_json::to_string(&file).expect("dataset serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DatasetFile = serde_json::from_str(text).map_err(|e| Error::Format {
            path: "<dataset>".into(),
            message: e.to_string(),
        })?;
        file.into_dataset()
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

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordFile {
    k: usize,
    p: usize,
    h: usize,
    x: usize,
    a: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<usize>,
    r: f64,
    x_next: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetFile {
    #[serde(rename = "K")]
    episodes: usize,
    #[serde(rename = "P")]
    agents: usize,
    #[serde(rename = "H")]
    horizon: usize,
    kind: DatasetKind,
    n_states: usize,
    n_actions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_actions_p2: Option<usize>,
    /// `[x][joint action][i]`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    planning: Option<PlanningParams>,
    records: Vec<RecordFile>,
}

impl From<&TrajectoryDataset> for DatasetFile {
    fn from(ds: &TrajectoryDataset) -> Self {
        let mut records = Vec::with_capacity(ds.slots.len());
        for k in 0..ds.episodes {
            for p in 0..ds.agents {
                for h in 0..ds.horizon {
                    if let Some(t) = ds.get(k, p, h) {
                        records.push(RecordFile {
                            k,
                            p,
                            h,
                            x: t.x,
                            a: t.a,
                            b: t.b,
                            r: t.r,
                            x_next: t.x_next,
                        });
                    }
                }
            }
        }
        let features = ds.features.as_ref().map(|fm| {
            (0..fm.n_states())
                .map(|x| (0..fm.n_actions()).map(|a| fm.phi(x, a).to_vec()).collect())
                .collect()
        });
        DatasetFile {
            episodes: ds.episodes,
            agents: ds.agents,
            horizon: ds.horizon,
            kind: ds.kind,
            n_states: ds.n_states,
            n_actions: ds.n_actions,
            n_actions_p2: ds.n_actions_p2,
            features,
            planning: ds.planning,
            records,
        }
    }
}

impl DatasetFile {
    fn into_dataset(self) -> Result<TrajectoryDataset> {
        let mut ds = TrajectoryDataset::new(
            self.kind,
            self.episodes,
            self.agents,
            self.horizon,
            self.n_states,
            self.n_actions,
            self.n_actions_p2,
        )?;
        for r in self.records {
            ds.set(
                r.k,
                r.p,
                r.h,
                Transition {
                    x: r.x,
                    a: r.a,
                    b: r.b,
                    r: r.r,
                    x_next: r.x_next,
                },
            )?;
        }
        if let Some(table) = self.features {
            let joint = ds.n_joint_actions();
            let dim = table.first().and_then(|r| r.first()).map_or(0, |v| v.len());
            if table.len() != ds.n_states || table.iter().any(|r| r.len() != joint || r.iter().any(|v| v.len() != dim)) {
                return Err(Error::Format {
                    path: "<dataset>".into(),
                    message: "features must be [n_states][joint actions][dim]".into(),
                });
            }
            let flat = table.into_iter().flatten().flatten().collect();
            ds.features = Some(FeatureMap::new(ds.n_states, joint, dim, flat)?);
        }
        ds.planning = self.planning;
        Ok(ds)
    }
}
