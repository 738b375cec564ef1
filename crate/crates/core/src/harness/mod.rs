//! Config-driven experiment sweeps.
//!
//! A run directory `run-<hash12>[-<millis>]` under the configured output
//! directory receives, per grid point `i` and replication `r`,
//! `point-<i>/rep-<r>.runlog.csv`, `rep-<r>.meta.json` and, optionally,
//! `rep-<r>.dataset.json`; plus `config.json`, `summary.json`, `curve.csv`
//! and `timing.json` at the top level. Everything except `timing.json` is a
//! pure function of the config.

mod config;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agents::{
    metric, polsvi_run, rf_explore, rf_plan, rfmg_explore, rfmg_plan, AlgoParams, BetaRule, RunLog,
};
use crate::envs::Spec;
use crate::error::{Error, Result};
use crate::numerics::doubling_count_bound;
use crate::oracle::{subopt_mdp, subopt_mg};
use crate::par::{with_threads, Execution};

pub use config::{
    Algorithm, EnvKind, EnvironmentSource, ExperimentConfig, GeneratorParams, Grid, GridPoint, RewardSource,
};

/// Aggregates for one grid point over its replications.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub point: GridPoint,
    pub dim: usize,
    pub horizon: usize,
    pub beta_value: f64,
    pub seeds: Vec<u64>,
    /// Final metric per replication, in seed order.
    pub values: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
    pub doubling_total_mean: f64,
    pub doubling_total_max: usize,
    pub doubling_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimism_rate: Option<f64>,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config_hash: String,
    pub algorithm: Algorithm,
    pub metric: String,
    pub replications: usize,
    pub points: Vec<PointSummary>,
    #[serde(skip)]
    pub run_dir: PathBuf,
}

impl SweepSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serialization is infallible")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Per-replication sidecar written next to each run log.
#[derive(Serialize)]
struct RunMeta<'a> {
    config_hash: &'a str,
    spec_hash: String,
    point: &'a GridPoint,
    replication: usize,
    params: &'a AlgoParams,
    beta_value: f64,
    final_metric: f64,
}

struct RepOutcome {
    value: f64,
    doublings: usize,
    optimism: Option<f64>,
}

/// Mean and standard error (sample standard deviation over `√n`).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Executes the sweep and writes its artifacts. Grid points run concurrently;
/// on failure, completed points are still summarized in `partial_summary.json`
/// and the first failing point's error is returned with its coordinates.
pub fn run_experiment(config: &ExperimentConfig, overwrite: bool) -> Result<SweepSummary> {
    config.validate()?;
    let hash = config.hash();
    let run_dir = create_run_dir(&config.output_dir, &hash, overwrite)?;
    write(&run_dir.join("config.json"), &config.to_json())?;

    let points = config.grid_points();
    let started = Instant::now();
    let results: Vec<Result<PointSummary>> = with_threads(config.threads, || {
        Execution::Parallel.map(points.len(), |i| {
            run_point(config, &hash, &run_dir, i, &points[i]).map_err(|e| e.context(format!("{}", points[i])))
        })
    });

    let mut done = Vec::new();
    let mut first_err = None;
    for r in results {
        match r {
            Ok(p) => done.push(p),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let summary = SweepSummary {
        config_hash: hash,
        algorithm: config.algorithm,
        metric: config.algorithm.metric().to_string(),
        replications: config.replications,
        points: done,
        run_dir: run_dir.clone(),
    };
    if let Some(e) = first_err {
        write(&run_dir.join("partial_summary.json"), &summary.to_json())?;
        return Err(e);
    }
    write(&run_dir.join("summary.json"), &summary.to_json())?;
    write(&run_dir.join("curve.csv"), &curve_csv(&summary))?;
    let timing = serde_json::json!({
        "total_secs": started.elapsed().as_secs_f64(),
        "points": summary.points.iter().map(|p| p.wall_time_secs).collect::<Vec<_>>(),
    });
    write(&run_dir.join("timing.json"), &timing.to_string())?;
    Ok(summary)
}

fn run_point(config: &ExperimentConfig, hash: &str, run_dir: &Path, index: usize, point: &GridPoint) -> Result<PointSummary> {
    let started = Instant::now();
    let spec = config.build_environment(point)?;
    let reward = config.planning_reward(&spec)?;
    let joint = spec.joint();
    let (dim, horizon) = (joint.dim(), joint.horizon());
    let point_dir = run_dir.join(format!("point-{index:03}"));
    std::fs::create_dir_all(&point_dir).map_err(|e| Error::io(&point_dir, e))?;

    let seeds: Vec<u64> = (0..config.replications as u64).map(|r| config.seed.wrapping_add(r)).collect();
    let mut outcomes = Vec::with_capacity(seeds.len());
    let mut beta_value = 0.0;
    for (rep, &seed) in seeds.iter().enumerate() {
        let mut params = AlgoParams::new(point.episodes, point.agents, point.beta, seed);
        params.lambda = config.lambda;
        params.oracle_eval = config.oracle_eval;
        beta_value = params.resolve_beta(dim, horizon)?;
        let rep_result = run_replication(config, &spec, &reward, &params).map_err(|e| e.context(format!("replication {rep}")))?;
        let (mut log, dataset, outcome) = rep_result;
        log.push(point.episodes, None, None, config.algorithm.metric(), outcome.value);

        let stem = point_dir.join(format!("rep-{rep:02}"));
        log.save_csv(stem.with_extension("runlog.csv"))?;
        if config.save_datasets {
            if let Some(ds) = dataset {
                ds.save(stem.with_extension("dataset.json"))?;
            }
        }
        let meta = RunMeta {
            config_hash: hash,
            spec_hash: spec.content_hash(),
            point,
            replication: rep,
            params: &params,
            beta_value,
            final_metric: outcome.value,
        };
        write(
            &stem.with_extension("meta.json"),
            &serde_json::to_string_pretty(&meta).expect("meta serialization is infallible"),
        )?;
        outcomes.push(outcome);
    }

    let values: Vec<f64> = outcomes.iter().map(|o| o.value).collect();
    let (mean, stderr) = mean_stderr(&values);
    let doublings: Vec<f64> = outcomes.iter().map(|o| o.doublings as f64).collect();
    let rates: Vec<f64> = outcomes.iter().filter_map(|o| o.optimism).collect();
    Ok(PointSummary {
        point: point.clone(),
        dim,
        horizon,
        beta_value,
        seeds,
        values,
        mean,
        stderr,
        doubling_total_mean: mean_stderr(&doublings).0,
        doubling_total_max: outcomes.iter().map(|o| o.doublings).max().unwrap_or(0),
        doubling_bound: doubling_count_bound(dim, horizon, point.episodes * point.agents, config.lambda),
        optimism_rate: (!rates.is_empty()).then(|| mean_stderr(&rates).0),
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

type RepResult = (RunLog, Option<crate::agents::TrajectoryDataset>, RepOutcome);

fn run_replication(
    config: &ExperimentConfig,
    spec: &Spec,
    reward: &crate::envs::RewardTable,
    params: &AlgoParams,
) -> Result<RepResult> {
    let (log, dataset, value) = match (config.algorithm, spec) {
        (Algorithm::Polsvi, Spec::Mdp(mdp)) => {
            let (log, ds) = polsvi_run(mdp, params)?;
            let value = log
                .last(metric::REGRET)
                .ok_or_else(|| Error::Config("polsvi regret needs oracle_eval".into()))?;
            (log, ds, value)
        }
        (Algorithm::Rf, Spec::Mdp(mdp)) => {
            let (ds, log) = rf_explore(mdp, params)?;
            let planning = ds.planning.expect("exploration records planning parameters");
            let policy = rf_plan(&ds, mdp.features(), reward, &planning)?;
            (log, ds, subopt_mdp(mdp, &policy, reward)?)
        }
        (Algorithm::Rfmg, Spec::Mg(mg)) => {
            let (ds, log) = rfmg_explore(mg, params)?;
            let planning = ds.planning.expect("exploration records planning parameters");
            let pair = rfmg_plan(&ds, mg.joint().features(), reward, &planning)?;
            (log, ds, subopt_mg(mg, &pair, reward)?)
        }
        _ => return Err(Error::Config("algorithm and environment kind do not match".into())),
    };
    let outcome = RepOutcome {
        value,
        doublings: log.doubling_count(),
        optimism: log.optimism_rate(),
    };
    Ok((log, Some(dataset), outcome))
}

fn curve_csv(summary: &SweepSummary) -> String {
    let mut out = String::from("K,P,KP,beta,dim,horizon,mean,stderr,doubling_total_mean,optimism_rate\n");
    for p in &summary.points {
        out.push_str(&format!(
            "{},{},{},{:?},{},{},{:?},{:?},{:?},{}\n",
            p.point.episodes,
            p.point.agents,
            p.point.episodes * p.point.agents,
            p.beta_value,
            p.dim,
            p.horizon,
            p.mean,
            p.stderr,
            p.doubling_total_mean,
            p.optimism_rate.map(|r| format!("{r:?}")).unwrap_or_default(),
        ));
    }
    out
}

fn create_run_dir(base: &Path, hash: &str, overwrite: bool) -> Result<PathBuf> {
    std::fs::create_dir_all(base).map_err(|e| Error::io(base, e))?;
    let stem = format!("run-{}", &hash[..12]);
    if overwrite {
        let dir = base.join(&stem);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        std::fs::create_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        return Ok(dir);
    }
    let millis = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    for n in 0.. {
        let name = if n == 0 {
            format!("{stem}-{millis}")
        } else {
            format!("{stem}-{millis}-{n}")
        };
        let dir = base.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    unreachable!()
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Fitted exponent of `metric ∝ (K·P)^slope`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub points: usize,
}

/// OLS of `log(metric)` on `log(K·P)` over the summary's grid points.
/// `metric` is the summary's final metric name or `doubling_total`.
pub fn fit_speedup_slope(summary: &SweepSummary, metric_name: &str) -> Result<SlopeFit> {
    let pick = |p: &PointSummary| -> Result<f64> {
        if metric_name == summary.metric {
            Ok(p.mean)
        } else if metric_name == metric::DOUBLING_TOTAL {
            Ok(p.doubling_total_mean)
        } else {
            Err(Error::param(format!("summary has no metric {metric_name:?}")))
        }
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for p in &summary.points {
        let m = pick(p)?;
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Numeric(format!("cannot take log of {metric_name} = {m} at {}", p.point)));
        }
        xs.push(((p.point.episodes * p.point.agents) as f64).ln());
        ys.push(m.ln());
    }
    fit_log_log(&xs, &ys)
}

fn fit_log_log(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    let n = xs.len();
    if n < 3 {
        return Err(Error::param(format!("slope fit needs at least 3 grid points, got {n}")));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::param("slope fit needs at least two distinct K·P values"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = (ssr / (n - 2) as f64 / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        stderr,
        points: n,
    })
}

/// The default `(K, P)` ladder used for speedup sweeps.
pub fn speedup_grid(episodes: usize, agents: &[usize], beta: BetaRule) -> Grid {
    Grid {
        episodes: vec![episodes],
        agents: agents.to_vec(),
        beta: vec![beta],
        horizon: Vec::new(),
        dim: Vec::new(),
    }
}
