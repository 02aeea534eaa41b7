//! Batch experiments: scenario registry, replica fan-out and output files.
//!
//! A scenario runs independent replicas for every population size of the
//! grid. Replica `r` uses seed `seed + r`; its streams are keyed by the
//! population size and a per-purpose tag, so results do not depend on the
//! number of worker threads. Rows are merged into one sorted
//! [`OutputTable`].

pub mod config;
pub mod recombination;
mod scenarios;
pub mod svg;
pub mod table;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use config::{default_snapshots, OutputSpec, ScenarioConfig, ScoreSpec};
pub use recombination::{exact_score_sum, recombination_candidates, recombine, recombine_points, RecombiningSystem};
pub use svg::{emit_svg, render_svg, Plot, Series, SeriesKind};
pub use table::{emit_csv, emit_json, OutputTable, Row, COLUMNS};

use crate::error::{Error, Result};
use crate::kernels::RngStream;

pub const SCENARIOS: [&str; 8] = [
    "speed_scaling",
    "shape_scaling",
    "mrca_scaling",
    "equilibrium_shape",
    "direction_convergence",
    "walls_validation",
    "many_to_one_validation",
    "recombination",
];

/// Result of a scenario, including replicas that failed.
#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub table: OutputTable,
    pub plots: Vec<Plot>,
    /// Seeds of failed replicas with their error messages.
    pub failures: Vec<(u64, String)>,
}

impl ScenarioRun {
    /// `Err(PartialFailure)` when any replica failed.
    pub fn check(&self) -> Result<()> {
        if self.failures.is_empty() {
            return Ok(());
        }
        let mut seeds: Vec<u64> = self.failures.iter().map(|f| f.0).collect();
        seeds.sort_unstable();
        seeds.dedup();
        Err(Error::PartialFailure {
            seeds,
            first: self.failures[0].1.clone(),
        })
    }
}

/// Runs a scenario and keeps whatever the successful replicas produced.
pub fn execute(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    cfg.validate()?;
    if !SCENARIOS.contains(&cfg.scenario.as_str()) {
        return Err(Error::Argument(format!(
            "unknown scenario {:?}; expected one of {}",
            cfg.scenario,
            SCENARIOS.join(", ")
        )));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| scenarios::dispatch(cfg))
}

/// Runs a scenario; any failed replica turns into an error listing the
/// failed seeds.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<OutputTable> {
    let run = execute(cfg)?;
    run.check()?;
    Ok(run.table)
}

/// Writes the files selected in `cfg.output` into `dir` and returns their
/// paths.
pub fn write_outputs(run: &ScenarioRun, cfg: &ScenarioConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let stem = cfg.stem();
    let mut out = Vec::new();
    if cfg.output.csv {
        let p = dir.join(format!("{stem}.csv"));
        emit_csv(&run.table, &p)?;
        out.push(p);
    }
    if cfg.output.json {
        let p = dir.join(format!("{stem}.json"));
        emit_json(&run.table, &p)?;
        out.push(p);
    }
    if cfg.output.svg {
        for plot in &run.plots {
            let p = dir.join(format!("{stem}_{}.svg", plot.name));
            emit_svg(plot, &p)?;
            out.push(p);
        }
    }
    Ok(out)
}

/// Identity of one replica.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Replica {
    pub seed: u64,
    pub n: usize,
    pub index: usize,
}

impl Replica {
    /// Stream for one purpose within the replica.
    pub fn stream(&self, purpose: u64) -> RngStream {
        RngStream::new(self.seed, ((self.n as u64) << 16) | purpose)
    }
}

/// Runs `reps` replicas of `f` on the current pool, in replica order.
pub(crate) fn replicate<T, F>(base_seed: u64, n: usize, reps: usize, f: F) -> Vec<(Replica, Result<T>)>
where
    T: Send,
    F: Fn(&Replica) -> Result<T> + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let rep = Replica {
                seed: base_seed.wrapping_add(r as u64),
                n,
                index: r,
            };
            let out = f(&rep);
            (rep, out)
        })
        .collect()
}

/// Row collector for one scenario.
pub(crate) struct Rows {
    pub scenario: String,
    pub rows: Vec<Row>,
    pub failures: Vec<(u64, String)>,
}

impl Rows {
    pub fn new(scenario: &str) -> Self {
        Self {
            scenario: scenario.to_string(),
            rows: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn put(&mut self, n: usize, seed: u64, t: f64, metric: &str, x: Option<f64>, value: f64) {
        self.rows.push(Row {
            scenario: self.scenario.clone(),
            n,
            seed,
            t,
            metric: metric.to_string(),
            x,
            value,
        });
    }

    /// Keeps successful replica outputs and records failures.
    pub fn successes<T>(&mut self, results: Vec<(Replica, Result<T>)>) -> Vec<(Replica, T)> {
        let mut ok = Vec::with_capacity(results.len());
        for (rep, r) in results {
            match r {
                Ok(v) => ok.push((rep, v)),
                Err(e) => self.failures.push((rep.seed, format!("N={}: {e}", rep.n))),
            }
        }
        ok
    }

    pub fn finish(self, plots: Vec<Plot>) -> Result<ScenarioRun> {
        Ok(ScenarioRun {
            table: OutputTable::from_rows(self.rows)?,
            plots,
            failures: self.failures,
        })
    }
}

/// Running count, sum and sum of squares.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct Moments {
    pub count: f64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1.0;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, o: &Moments) {
        self.count += o.count;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.count > 0.0 {
            self.sum / self.count
        } else {
            0.0
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count < 2.0 {
            return 0.0;
        }
        let m = self.mean();
        let var = ((self.sum_sq - self.count * m * m) / (self.count - 1.0)).max(0.0);
        (var / self.count).sqrt()
    }
}

pub(crate) fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub(crate) fn std_error(xs: &[f64]) -> f64 {
    let mut m = Moments::default();
    xs.iter().for_each(|&x| m.push(x));
    m.std_error()
}
