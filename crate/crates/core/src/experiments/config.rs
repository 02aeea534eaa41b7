//! Scenario configuration files.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::engine::EngineKind;
use crate::error::{Error, Result};
use crate::model::{unit_e1, InitSpec, Params, ScoreFunction};

/// Score selection as written in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScoreSpec {
    /// Linear score along `direction`, normalised on load; the first axis
    /// when omitted.
    Linear {
        #[serde(default)]
        direction: Option<Vec<f64>>,
    },
    Euclidean,
}

impl Default for ScoreSpec {
    fn default() -> Self {
        ScoreSpec::Linear { direction: None }
    }
}

impl ScoreSpec {
    pub fn build(&self, d: usize) -> Result<ScoreFunction> {
        match self {
            ScoreSpec::Linear { direction: None } => Ok(ScoreFunction::Linear(unit_e1(d))),
            ScoreSpec::Linear { direction: Some(v) } => {
                if v.len() != d {
                    return Err(Error::Config(format!(
                        "score direction has {} coordinates but d = {d}",
                        v.len()
                    )));
                }
                ScoreFunction::linear_normalized(v).map_err(|e| Error::Config(e.to_string()))
            }
            ScoreSpec::Euclidean => Ok(ScoreFunction::Euclidean),
        }
    }
}

/// Which files a run writes, relative to the output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// File stem; the scenario name when omitted.
    #[serde(default)]
    pub stem: Option<String>,
    #[serde(default = "yes")]
    pub csv: bool,
    #[serde(default = "yes")]
    pub json: bool,
    #[serde(default = "yes")]
    pub svg: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            stem: None,
            csv: true,
            json: true,
            svg: true,
        }
    }
}

fn yes() -> bool {
    true
}

fn one_usize() -> usize {
    1
}

fn one_f64() -> f64 {
    1.0
}

fn origin() -> InitSpec {
    InitSpec::AllAtOrigin
}

/// A batch experiment.
///
/// Population sizes come from `n_grid`; scenarios that need no population
/// size accept an empty grid. `replicas_per_n`, when given, overrides
/// `replicas` entry by entry. Scenario specific settings live in `options`
/// and are checked against that scenario's option set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(default = "one_usize")]
    pub d: usize,
    #[serde(default = "one_f64")]
    pub branch_rate: f64,
    #[serde(default)]
    pub score: ScoreSpec,
    #[serde(default = "origin")]
    pub init: InitSpec,
    #[serde(default = "one_usize")]
    pub replicas: usize,
    #[serde(default)]
    pub replicas_per_n: Option<Vec<usize>>,
    #[serde(default)]
    pub seed: u64,
    /// Final time; each scenario has its own default.
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Explicit snapshot times, used for every population size.
    #[serde(default)]
    pub snapshots: Option<Vec<f64>>,
    #[serde(default)]
    pub engine: EngineKind,
    /// Worker threads; all available cores when omitted.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub options: serde_json::Value,
}

impl ScenarioConfig {
    /// Config with defaults for everything but the scenario name.
    pub fn new(scenario: &str) -> Self {
        serde_json::from_value(serde_json::json!({ "scenario": scenario }))
            .expect("defaults deserialize")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.replicas == 0 {
            return bad("replicas must be at least 1".into());
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("n_grid must be strictly increasing, got {:?}", self.n_grid));
        }
        if self.n_grid.contains(&0) {
            return bad("population sizes must be positive".into());
        }
        if let Some(r) = &self.replicas_per_n {
            if r.len() != self.n_grid.len() {
                return bad(format!(
                    "replicas_per_n has {} entries for {} population sizes",
                    r.len(),
                    self.n_grid.len()
                ));
            }
            if r.contains(&0) {
                return bad("replicas_per_n entries must be at least 1".into());
            }
        }
        if self.d == 0 {
            return bad("d must be at least 1".into());
        }
        if !(self.branch_rate > 0.0) || !self.branch_rate.is_finite() {
            return bad(format!("branch_rate must be positive, got {}", self.branch_rate));
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0) || !h.is_finite() {
                return bad(format!("horizon must be positive, got {h}"));
            }
        }
        if let Some(s) = &self.snapshots {
            if s.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) || s.windows(2).any(|w| w[0] >= w[1]) {
                return bad("snapshots must be finite, nonnegative and strictly increasing".into());
            }
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        self.score.build(self.d)?;
        Ok(())
    }

    pub fn replicas_for(&self, index: usize) -> usize {
        self.replicas_per_n
            .as_ref()
            .map_or(self.replicas, |r| r[index])
    }

    pub fn stem(&self) -> &str {
        self.output.stem.as_deref().unwrap_or(&self.scenario)
    }

    pub fn params(&self, n: usize) -> Result<Params> {
        let mut p = Params::new(n, self.d, self.score.build(self.d)?)
            .map_err(|e| Error::Config(e.to_string()))?;
        p.branch_rate = self.branch_rate;
        p.seed = self.seed;
        Ok(p)
    }

    /// Parses `options` into a scenario's option set; `null` gives the
    /// defaults.
    pub fn options<T: DeserializeOwned + Default>(&self) -> Result<T> {
        if self.options.is_null() {
            return Ok(T::default());
        }
        serde_json::from_value(self.options.clone())
            .map_err(|e| Error::Config(format!("options for {}: {e}", self.scenario)))
    }

    /// Explicit snapshots clipped to the horizon, or
    /// `{k log N : k = 1..ceil(T / log N)}` capped at `T`.
    pub fn snapshot_times(&self, n: usize, horizon: f64) -> Vec<f64> {
        if let Some(s) = &self.snapshots {
            return s.iter().copied().filter(|&t| t <= horizon).collect();
        }
        default_snapshots(n, horizon)
    }
}

pub fn default_snapshots(n: usize, horizon: f64) -> Vec<f64> {
    let unit = (n.max(2) as f64).ln();
    let k = (horizon / unit).ceil() as usize;
    let mut out: Vec<f64> = (1..=k).map(|i| (i as f64 * unit).min(horizon)).collect();
    out.dedup();
    out
}
