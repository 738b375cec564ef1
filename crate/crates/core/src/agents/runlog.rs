use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One metric observation. Absent agent/step means the value is
/// episode-level (or run-level, for the summary metrics).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub episode: usize,
    pub agent: Option<usize>,
    pub step: Option<usize>,
    pub metric: String,
    pub value: f64,
}

/// Flat metric log of one run, written as CSV.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub records: Vec<RunRecord>,
}

pub mod metric {
    /// `V₁*(s₀) − V₁^{π^{k,p}}(s₀)` per `(k, p)`.
    pub const GAP: &str = "gap";
    /// Cumulative parallel regret through episode `k`.
    pub const REGRET: &str = "regret";
    /// 1 when `Λ_h^{k+1} ≻ 2Λ_h^k`, per `(k, h)`.
    pub const DOUBLING: &str = "doubling";
    /// `max_a Q₁^k(s₀, a)`, the learner's optimistic value.
    pub const V_INTERNAL: &str = "v_internal";
    /// Exact optimal value at `s₀` for the exploration reward `r^k`.
    pub const V_STAR_INTERNAL: &str = "v_star_internal";
    /// 1 when `V₁*(s₀, r^k) ≤ V₁^k(s₀) + 1e-9`.
    pub const OPTIMISTIC: &str = "optimistic";
    pub const DOUBLING_TOTAL: &str = "doubling_total";
    pub const SUBOPT: &str = "subopt";
}

impl RunLog {
    pub fn push(&mut self, episode: usize, agent: Option<usize>, step: Option<usize>, metric: &str, value: f64) {
        self.records.push(RunRecord {
            episode,
            agent,
            step,
            metric: metric.to_string(),
            value,
        });
    }

    pub fn values<'a>(&'a self, metric: &'a str) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.records.iter().filter(move |r| r.metric == metric)
    }

    pub fn last(&self, metric: &str) -> Option<f64> {
        self.values(metric).last().map(|r| r.value)
    }

    pub fn doubling_count(&self) -> usize {
        self.values(metric::DOUBLING).filter(|r| r.value > 0.5).count()
    }

    /// Fraction of episodes where the optimism event held.
    pub fn optimism_rate(&self) -> Option<f64> {
        let flags: Vec<f64> = self.values(metric::OPTIMISTIC).map(|r| r.value).collect();
        if flags.is_empty() {
            None
        } else {
            Some(flags.iter().sum::<f64>() / flags.len() as f64)
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["episode", "agent", "step", "metric", "value"])
            .map_err(csv_err)?;
        for r in &self.records {
            w.write_record([
                r.episode.to_string(),
                r.agent.map(|a| a.to_string()).unwrap_or_default(),
                r.step.map(|s| s.to_string()).unwrap_or_default(),
                r.metric.clone(),
                format_value(r.value),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Numeric(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut records = Vec::new();
        for row in reader.records() {
            let row = row.map_err(csv_err)?;
            if row.len() != 5 {
                return Err(Error::Format {
                    path: "<runlog>".into(),
                    message: format!("expected 5 columns, found {}", row.len()),
                });
            }
            let opt = |s: &str| -> Result<Option<usize>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad_field(s))
                }
            };
            records.push(RunRecord {
                episode: row[0].parse().map_err(|_| bad_field(&row[0]))?,
                agent: opt(&row[1])?,
                step: opt(&row[2])?,
                metric: row[3].to_string(),
                value: row[4].parse().map_err(|_| bad_field(&row[4]))?,
            });
        }
        Ok(Self { records })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// Shortest decimal that parses back to the same `f64`.
fn format_value(v: f64) -> String {
    format!("{v:?}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format {
        path: "<runlog>".into(),
        message: e.to_string(),
    }
}

fn bad_field(s: &str) -> Error {
    Error::Format {
        path: "<runlog>".into(),
        message: format!("unparseable field {s:?}"),
    }
}
