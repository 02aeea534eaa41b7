//! The registered scenarios.

use std::f64::consts::SQRT_2;

use serde::Deserialize;

use super::config::ScenarioConfig;
use super::recombination::RecombiningSystem;
use super::svg::{Plot, Series};
use super::{mean, median, replicate, std_error, Moments, Replica, Rows, ScenarioRun};
use crate::engine::{build_engine, AnyEngine, Engine};
use crate::error::{Error, Result};
use crate::model::{
    initial_satisfying_condition, make_initial, norm, orthonormal_complement, AsymptoticConstants,
    Configuration, InitSpec, Params, ScoreFunction,
};
use crate::observables::{angular_spread, centered_tail_with, diameters, speed_estimate, spherical_distance, wstar, Statistic, TailProfile, TAIL_STEP};
use crate::walls::{
    delta_minus_bound, kill_right_bound, many_to_one_check, max_tail_check, run_free_bbm,
    supermartingale_value, Proportion, Wall, WallExperiment, WallMode, DEFAULT_POPULATION_CAP,
};

const ENGINE: u64 = 0;
const INIT: u64 = 1;
const AUX: u64 = 2;

pub(super) fn dispatch(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    match cfg.scenario.as_str() {
        "speed_scaling" => speed_scaling(cfg),
        "shape_scaling" => shape_scaling(cfg),
        "mrca_scaling" => mrca_scaling(cfg),
        "equilibrium_shape" => equilibrium_shape(cfg),
        "direction_convergence" => direction_convergence(cfg),
        "walls_validation" => walls_validation(cfg),
        "many_to_one_validation" => many_to_one_validation(cfg),
        "recombination" => recombination(cfg),
        other => Err(Error::Argument(format!("unknown scenario {other:?}"))),
    }
}

fn need_grid(cfg: &ScenarioConfig) -> Result<()> {
    if cfg.n_grid.is_empty() {
        return Err(Error::Config(format!("{} needs a nonempty n_grid", cfg.scenario)));
    }
    Ok(())
}

fn log_n(n: usize) -> f64 {
    (n as f64).ln()
}

fn cube_log(n: usize) -> f64 {
    log_n(n).powi(3)
}

fn constants(n: usize) -> Result<AsymptoticConstants> {
    let c = AsymptoticConstants::new(n).map_err(|e| Error::Config(e.to_string()))?;
    Ok(c)
}

fn engine(cfg: &ScenarioConfig, params: &Params, init: &Configuration, rep: &Replica) -> Result<AnyEngine> {
    build_engine(params, init, rep.stream(ENGINE), cfg.engine)
}

fn lambda_of(params: &Params, scenario: &str) -> Result<Vec<f64>> {
    params
        .score
        .direction()
        .map(|l| l.to_vec())
        .ok_or_else(|| Error::Config(format!("{scenario} needs a linear score")))
}

/// Sorted, deduplicated union of time lists.
fn time_grid(parts: &[&[f64]]) -> Vec<f64> {
    let mut v: Vec<f64> = parts.iter().flat_map(|p| p.iter().copied()).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn default_alpha() -> f64 {
    SQRT_2 + 0.5
}

fn check_window(w: [f64; 2], what: &str) -> Result<()> {
    if !(w[0] >= 0.0 && w[1] > w[0] && w[1].is_finite()) {
        return Err(Error::Config(format!("{what} must satisfy 0 <= start < end, got {w:?}")));
    }
    Ok(())
}

// ---------------------------------------------------------------- speed

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SpeedOptions {
    window: [f64; 2],
    statistic: Statistic,
    /// Diameter recorded at `diam_factor * log N`.
    diam_factor: f64,
}

impl Default for SpeedOptions {
    fn default() -> Self {
        Self {
            window: [100.0, 600.0],
            statistic: Statistic::Min,
            diam_factor: 2.0,
        }
    }
}

fn stat_name(s: Statistic) -> &'static str {
    match s {
        Statistic::Min => "min",
        Statistic::Max => "max",
        Statistic::Median => "median",
    }
}

fn speed_scaling(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    need_grid(cfg)?;
    let opt: SpeedOptions = cfg.options()?;
    check_window(opt.window, "window")?;
    let horizon = cfg.horizon.unwrap_or(opt.window[1]);
    if horizon < opt.window[1] {
        return Err(Error::Config("horizon ends before the speed window".into()));
    }
    let name = stat_name(opt.statistic);
    let mut rows = Rows::new(&cfg.scenario);
    let mut means = Vec::new();
    let mut v_pred_pts = Vec::new();
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let params = cfg.params(n)?;
        let t_diam = opt.diam_factor * log_n(n);
        let diam_on = n >= 2 && t_diam > 0.0 && t_diam <= horizon;
        let snaps = cfg.snapshot_times(n, horizon);
        let extra: Vec<f64> = if diam_on { vec![t_diam] } else { vec![] };
        let times = time_grid(&[&snaps, &opt.window, &extra]);
        let out = replicate(cfg.seed, n, cfg.replicas_for(i), |rep| {
            let init = make_initial(&cfg.init, &params, &mut rep.stream(INIT))?;
            let mut eng = engine(cfg, &params, &init, rep)?;
            let mut ts = vec![init.time];
            let mut vs = vec![opt.statistic.of(&init.ranked_scores(&params.score))?];
            let mut diam = None;
            for &t in times.iter().filter(|&&t| t > init.time) {
                let c = eng.run_until(t)?;
                let s = c.ranked_scores(&params.score);
                if diam_on && t == t_diam {
                    diam = Some(s[0] - s[s.len() - 1]);
                }
                ts.push(t);
                vs.push(opt.statistic.of(&s)?);
            }
            let v = speed_estimate(&ts, &vs, opt.window[0], opt.window[1])?;
            Ok((ts, vs, v, diam))
        });
        let ok = rows.successes(out);
        let mut speeds = Vec::new();
        let mut within = 0usize;
        let bound = (3.0 * SQRT_2 + 1.0) * log_n(n);
        for (rep, (ts, vs, v, diam)) in &ok {
            for (t, x) in ts.iter().zip(vs) {
                rows.put(n, rep.seed, *t, name, None, *x);
            }
            rows.put(n, rep.seed, opt.window[1], "speed", None, *v);
            if let Some(d) = diam {
                rows.put(n, rep.seed, t_diam, "diam", None, *d);
                within += (*d <= bound) as usize;
            }
            speeds.push(*v);
        }
        if ok.is_empty() {
            continue;
        }
        let t1 = opt.window[1];
        let m = mean(&speeds);
        rows.put(n, cfg.seed, t1, "speed_mean", None, m);
        rows.put(n, cfg.seed, t1, "speed_se", None, std_error(&speeds));
        means.push((n, m));
        if n >= 2 {
            let c = constants(n)?;
            rows.put(n, cfg.seed, t1, "v_pred", None, c.v_pred);
            if c.v_pred > 0.0 {
                v_pred_pts.push((log_n(n), c.v_pred));
            }
        }
        if diam_on {
            rows.put(n, cfg.seed, t_diam, "diam_bound", None, bound);
            rows.put(n, cfg.seed, t_diam, "diam_within_bound", None, within as f64 / ok.len() as f64);
        }
    }
    if let Some(&(last, _)) = means.last() {
        let inc = means.windows(2).all(|w| w[1].1 > w[0].1);
        rows.put(last, cfg.seed, opt.window[1], "speed_increasing", None, inc as u8 as f64);
    }
    let mut series = vec![Series::line(
        "estimated speed",
        means.iter().map(|&(n, m)| (log_n(n.max(1)), m)).collect(),
    )];
    if !v_pred_pts.is_empty() {
        series.push(Series::line("sqrt2 - pi^2/(sqrt2 log^2 N)", v_pred_pts));
    }
    let plot = Plot {
        name: "speed".into(),
        title: format!("Front speed, window [{}, {}]", opt.window[0], opt.window[1]),
        x_label: "log N".into(),
        y_label: "speed".into(),
        series,
    };
    rows.finish(vec![plot])
}

// ---------------------------------------------------------------- shape

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ShapeOptions {
    /// Final time is `time_factor (log N)^3`.
    time_factor: f64,
    /// Snapshot times as fractions of the final time.
    fractions: Vec<f64>,
    delta: f64,
    alpha: f64,
    /// Transverse direction; the first vector orthogonal to the score
    /// direction when omitted.
    perp: Option<Vec<f64>>,
    max_tries: usize,
}

impl Default for ShapeOptions {
    fn default() -> Self {
        Self {
            time_factor: 0.01,
            fractions: (1..=8).map(|k| k as f64 / 8.0).collect(),
            delta: 0.5,
            alpha: default_alpha(),
            perp: None,
            max_tries: 10_000,
        }
    }
}

fn tail_init(alpha: f64) -> InitSpec {
    InitSpec::IidTail {
        alpha,
        direction: None,
    }
}

fn shape_scaling(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    need_grid(cfg)?;
    let opt: ShapeOptions = cfg.options()?;
    if cfg.d < 2 {
        return Err(Error::Config("shape_scaling needs d >= 2".into()));
    }
    if opt.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(Error::Config("fractions must lie in (0, 1]".into()));
    }
    let mut rows = Rows::new(&cfg.scenario);
    let mut curves = Vec::new();
    let mut finals = Vec::new();
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let params = cfg.params(n)?;
        let lambda = lambda_of(&params, &cfg.scenario)?;
        let perp = match &opt.perp {
            Some(p) => {
                let l = norm(p);
                if p.len() != cfg.d || !(l > 0.0) {
                    return Err(Error::Config("perp must be a nonzero vector of dimension d".into()));
                }
                p.iter().map(|c| c / l).collect()
            }
            None => orthonormal_complement(&lambda).swap_remove(0),
        };
        let t_final = cfg.horizon.unwrap_or(opt.time_factor * cube_log(n));
        let times = match &cfg.snapshots {
            Some(_) => cfg.snapshot_times(n, t_final),
            None => time_grid(&[&opt.fractions.iter().map(|f| f * t_final).collect::<Vec<_>>()]),
        };
        let ln = log_n(n);
        let spec = tail_init(opt.alpha);
        let out = replicate(cfg.seed, n, cfg.replicas_for(i), |rep| {
            let init = initial_satisfying_condition(&spec, &params, opt.delta, &mut rep.stream(INIT), opt.max_tries)?;
            let stat = crate::model::init_condition_stat(&init, &lambda);
            let mut eng = engine(cfg, &params, &init, rep)?;
            let mut snaps = Vec::with_capacity(times.len());
            for &t in &times {
                let c = eng.run_until(t)?;
                snaps.push((t, diameters(&c, &lambda, &perp)?));
            }
            Ok((stat, snaps))
        });
        let ok = rows.successes(out);
        for (rep, (stat, snaps)) in &ok {
            rows.put(n, rep.seed, 0.0, "init_stat", None, *stat);
            for &(t, (d, dp)) in snaps {
                rows.put(n, rep.seed, t, "diam", None, d);
                rows.put(n, rep.seed, t, "diam_perp", None, dp);
                rows.put(n, rep.seed, t, "diam_over_log_n", None, d / ln);
                rows.put(n, rep.seed, t, "diam_perp_over_log_n", None, dp / ln);
            }
        }
        if ok.is_empty() {
            continue;
        }
        let mut curve = Vec::new();
        for (j, &t) in times.iter().enumerate() {
            let dps: Vec<f64> = ok.iter().map(|(_, (_, s))| s[j].1 .1 / ln).collect();
            let ds: Vec<f64> = ok.iter().map(|(_, (_, s))| s[j].1 .0 / ln).collect();
            let m = median(&dps);
            rows.put(n, cfg.seed, t, "median_diam_perp_over_log_n", None, m);
            rows.put(n, cfg.seed, t, "median_diam_over_log_n", None, median(&ds));
            curve.push((t / t_final, m));
        }
        if let Some(&(_, m)) = curve.last() {
            finals.push((n, *times.last().unwrap(), m));
        }
        curves.push(Series::line(format!("N = {n}"), curve));
    }
    if let (Some(first), Some(last)) = (finals.first(), finals.last()) {
        if finals.len() >= 2 && first.2 > 0.0 {
            rows.put(last.0, cfg.seed, last.1, "perp_growth_ratio", None, last.2 / first.2);
        }
    }
    let plot = Plot {
        name: "diam_perp".into(),
        title: "Median transverse diameter".into(),
        x_label: "t / (time_factor (log N)^3)".into(),
        y_label: "diam_perp / log N".into(),
        series: curves,
    };
    rows.finish(vec![plot])
}

// ---------------------------------------------------------------- mrca

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MrcaOptions {
    /// First sample at `burn_in_factor (log N)^3`.
    burn_in_factor: f64,
    /// Spacing of samples in units of `(log N)^3`.
    interval_factor: f64,
    samples: usize,
    /// Check the top initial particle's descendants at
    /// `descendant_factor (log N)^3`; skipped when zero.
    descendant_factor: f64,
    delta: f64,
    alpha: f64,
    max_tries: usize,
}

impl Default for MrcaOptions {
    fn default() -> Self {
        Self {
            burn_in_factor: 0.5,
            interval_factor: 0.05,
            samples: 8,
            descendant_factor: 0.02,
            delta: 0.5,
            alpha: default_alpha(),
            max_tries: 10_000,
        }
    }
}

fn mrca_scaling(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    need_grid(cfg)?;
    let opt: MrcaOptions = cfg.options()?;
    if opt.samples == 0 || !(opt.burn_in_factor > 0.0) || !(opt.interval_factor >= 0.0) {
        return Err(Error::Config("mrca_scaling needs samples >= 1 and a positive burn-in".into()));
    }
    let mut rows = Rows::new(&cfg.scenario);
    let mut medians = Vec::new();
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let params = cfg.params(n)?;
        let scale = cube_log(n);
        let times: Vec<f64> = (0..opt.samples)
            .map(|j| (opt.burn_in_factor + j as f64 * opt.interval_factor) * scale)
            .collect();
        let times = time_grid(&[&times]);
        let t_desc = opt.descendant_factor * scale;
        let out = replicate(cfg.seed, n, cfg.replicas_for(i), |rep| {
            let init = make_initial(&cfg.init, &params, &mut rep.stream(INIT))?;
            let mut eng = engine(cfg, &params, &init, rep)?;
            let mut taus = Vec::with_capacity(times.len());
            for &t in &times {
                eng.advance_events_to(t, |_| {})?;
                taus.push(match eng.forest().mrca_age(t) {
                    Some(a) => (a, false),
                    None => (t - init.time, true),
                });
            }
            let desc = if t_desc > 0.0 {
                let spec = tail_init(opt.alpha);
                let init = initial_satisfying_condition(&spec, &params, opt.delta, &mut rep.stream(AUX), opt.max_tries)?;
                let top = init.ids()[init.order()[0]];
                let mut eng = build_engine(&params, &init, rep.stream(AUX + 1), cfg.engine)?;
                eng.advance_events_to(t_desc, |_| {})?;
                Some(eng.forest().has_living_descendant(top)?)
            } else {
                None
            };
            Ok((taus, desc))
        });
        let ok = rows.successes(out);
        let mut all = Vec::new();
        let mut censored = 0usize;
        let mut alive = 0usize;
        for (rep, (taus, desc)) in &ok {
            for (&t, &(a, c)) in times.iter().zip(taus) {
                rows.put(n, rep.seed, t, "tau", None, a);
                if c {
                    rows.put(n, rep.seed, t, "tau_censored", None, 1.0);
                    censored += 1;
                }
                all.push(a);
            }
            if let Some(d) = desc {
                rows.put(n, rep.seed, t_desc, "top_has_descendants", None, *d as u8 as f64);
                alive += *d as usize;
            }
        }
        if ok.is_empty() {
            continue;
        }
        let t_last = *times.last().unwrap();
        let m = median(&all);
        rows.put(n, cfg.seed, t_last, "median_tau", None, m);
        rows.put(n, cfg.seed, t_last, "median_tau_over_log_n_cubed", None, m / scale);
        rows.put(n, cfg.seed, t_last, "censored_fraction", None, censored as f64 / all.len() as f64);
        if t_desc > 0.0 {
            rows.put(n, cfg.seed, t_desc, "descendant_fraction", None, alive as f64 / ok.len() as f64);
        }
        medians.push((n, t_last, m));
    }
    if medians.len() >= 2 {
        let (first, last) = (medians[0], medians[medians.len() - 1]);
        if first.2 > 0.0 {
            rows.put(last.0, cfg.seed, last.1, "tau_ratio", None, last.2 / first.2);
        }
    }
    let plot = Plot {
        name: "tau".into(),
        title: "Median age of the most recent common ancestor".into(),
        x_label: "log N".into(),
        y_label: "median tau / (log N)^3".into(),
        series: vec![Series::line(
            "median tau / (log N)^3",
            medians.iter().map(|&(n, _, m)| (log_n(n), m / cube_log(n))).collect(),
        )],
    };
    rows.finish(vec![plot])
}

// ---------------------------------------------------------------- equilibrium

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EquilibriumOptions {
    window: [f64; 2],
    spacing: f64,
    x_max: f64,
    step: f64,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self {
            window: [200.0, 400.0],
            spacing: 1.0,
            x_max: 8.0,
            step: TAIL_STEP,
        }
    }
}

fn equilibrium_shape(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    need_grid(cfg)?;
    let opt: EquilibriumOptions = cfg.options()?;
    check_window(opt.window, "window")?;
    if !(opt.spacing > 0.0) {
        return Err(Error::Config("spacing must be positive".into()));
    }
    let k = ((opt.window[1] - opt.window[0]) / opt.spacing + 1e-9).floor() as usize;
    let times: Vec<f64> = (0..=k).map(|j| opt.window[0] + j as f64 * opt.spacing).collect();
    let mut rows = Rows::new(&cfg.scenario);
    let mut plots = Vec::new();
    let t1 = *times.last().unwrap();
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let params = cfg.params(n)?;
        let out = replicate(cfg.seed, n, cfg.replicas_for(i), |rep| {
            let init = make_initial(&cfg.init, &params, &mut rep.stream(INIT))?;
            let mut eng = engine(cfg, &params, &init, rep)?;
            let mut profiles = Vec::with_capacity(times.len());
            for &t in &times {
                let c = eng.run_until(t)?;
                profiles.push(centered_tail_with(&c.ranked_scores(&params.score), opt.x_max, opt.step)?);
            }
            TailProfile::average(&profiles)
        });
        let ok = rows.successes(out);
        for (rep, p) in &ok {
            for (&x, &v) in p.grid.iter().zip(&p.values) {
                rows.put(n, rep.seed, t1, "tail", Some(x), v);
            }
            rows.put(n, rep.seed, t1, "sup_distance", None, p.sup_distance(wstar));
        }
        if ok.is_empty() {
            continue;
        }
        let profiles: Vec<TailProfile> = ok.into_iter().map(|(_, p)| p).collect();
        let avg = TailProfile::average(&profiles)?;
        for (&x, &v) in avg.grid.iter().zip(&avg.values) {
            rows.put(n, cfg.seed, t1, "tail_mean", Some(x), v);
            rows.put(n, cfg.seed, t1, "wstar", Some(x), wstar(x));
        }
        rows.put(n, cfg.seed, t1, "sup_distance_of_mean", None, avg.sup_distance(wstar));
        plots.push(Plot {
            name: format!("tail_n{n}"),
            title: format!("Centred tail, N = {n}, t in [{}, {}]", opt.window[0], opt.window[1]),
            x_label: "x".into(),
            y_label: "fraction at least x above the minimum".into(),
            series: vec![
                Series::line("empirical", avg.grid.iter().copied().zip(avg.values.iter().copied()).collect()),
                Series::line("(sqrt2 x + 1) exp(-sqrt2 x)", avg.grid.iter().map(|&x| (x, wstar(x))).collect()),
            ],
        });
    }
    rows.finish(plots)
}

// ---------------------------------------------------------------- direction

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DirectionOptions {
    early: f64,
    late: f64,
    /// Gate for the Euclidean case: spread at `late` at most this fraction
    /// of the spread at `early`.
    spread_ratio: f64,
    /// Gate for the linear case: spherical distance of the leading
    /// direction to the score direction at `late`.
    distance: f64,
    /// Scatter snapshots drawn from the first replica.
    frames: usize,
}

impl Default for DirectionOptions {
    fn default() -> Self {
        Self {
            early: 100.0,
            late: 400.0,
            spread_ratio: 0.5,
            distance: 0.2,
            frames: 5,
        }
    }
}

struct DirectionOut {
    spread: Option<(f64, f64)>,
    drift: f64,
    distance: Option<f64>,
    frames: Vec<(f64, Vec<(f64, f64)>)>,
}

fn direction_convergence(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    need_grid(cfg)?;
    let opt: DirectionOptions = cfg.options()?;
    check_window([opt.early, opt.late], "early/late")?;
    if cfg.d < 2 {
        return Err(Error::Config("direction_convergence needs d >= 2".into()));
    }
    let mut rows = Rows::new(&cfg.scenario);
    let mut plots = Vec::new();
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let params = cfg.params(n)?;
        let lambda = params.score.direction().map(|l| l.to_vec());
        let frame_times: Vec<f64> = (1..=opt.frames)
            .map(|j| opt.late * j as f64 / opt.frames as f64)
            .collect();
        let times = time_grid(&[&[opt.early, opt.late], &frame_times]);
        let out = replicate(cfg.seed, n, cfg.replicas_for(i), |rep| {
            let init = make_initial(&cfg.init, &params, &mut rep.stream(INIT))?;
            let mut eng = engine(cfg, &params, &init, rep)?;
            let mut early = None;
            let mut res = DirectionOut {
                spread: None,
                drift: 0.0,
                distance: None,
                frames: Vec::new(),
            };
            for &t in &times {
                let c = eng.run_until(t)?;
                if rep.index == 0 && frame_times.contains(&t) {
                    res.frames.push((t, c.positions().map(|x| (x[0], x[1])).collect()));
                }
                let lead = c.direction(c.order()[0]);
                if t == opt.early {
                    early = Some((angular_spread(&c)?, lead.clone()));
                }
                if t == opt.late {
                    let (s0, d0) = early.clone().expect("early precedes late");
                    res.spread = Some((s0, angular_spread(&c)?));
                    if let (Some(a), Some(b)) = (&d0, &lead) {
                        res.drift = spherical_distance(a, b)?;
                    }
                    if let (Some(l), Some(b)) = (&lambda, &lead) {
                        res.distance = Some(spherical_distance(b, l)?);
                    }
                }
            }
            Ok(res)
        });
        let ok = rows.successes(out);
        let mut halved = 0usize;
        let mut close = 0usize;
        for (rep, r) in &ok {
            let (s0, s1) = r.spread.expect("late snapshot taken");
            rows.put(n, rep.seed, opt.early, "angular_spread", None, s0);
            rows.put(n, rep.seed, opt.late, "angular_spread", None, s1);
            if s0 > 0.0 {
                rows.put(n, rep.seed, opt.late, "spread_ratio", None, s1 / s0);
            }
            halved += (s1 <= opt.spread_ratio * s0) as usize;
            rows.put(n, rep.seed, opt.late, "direction_drift", None, r.drift);
            if let Some(dist) = r.distance {
                rows.put(n, rep.seed, opt.late, "theta_distance", None, dist);
                close += (dist <= opt.distance) as usize;
            }
            if !r.frames.is_empty() {
                let k = r.frames.len();
                let series = r
                    .frames
                    .iter()
                    .enumerate()
                    .map(|(j, (t, pts))| Series::points(format!("t = {t}"), pts.clone(), 0.25 + 0.75 * (j + 1) as f64 / k as f64))
                    .collect();
                plots.push(Plot {
                    name: format!("scatter_n{n}"),
                    title: format!("Particle positions, N = {n}, seed {}", rep.seed),
                    x_label: "x1".into(),
                    y_label: "x2".into(),
                    series,
                });
            }
        }
        if ok.is_empty() {
            continue;
        }
        let reps = ok.len() as f64;
        rows.put(n, cfg.seed, opt.late, "spread_reduced_fraction", None, halved as f64 / reps);
        if lambda.is_some() {
            rows.put(n, cfg.seed, opt.late, "theta_within_fraction", None, close as f64 / reps);
        }
    }
    rows.finish(plots)
}

// ---------------------------------------------------------------- walls

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct WallsOptions {
    /// Wall slope; `sqrt(2 - 2 pi^2 / (log N)^2)` when omitted.
    mu: Option<f64>,
    /// Right wall offset; `log N / sqrt 2` when omitted.
    l: Option<f64>,
    horizon: f64,
    init: Vec<f64>,
    /// Killing level `-a` for the stopped process.
    a: f64,
    sm_init: Vec<f64>,
    sm_times: Vec<f64>,
    /// Free runs per replica for each estimate.
    samples: usize,
    /// N-BBM check on `X_N(t) - x <= mu t + margin` up to
    /// `ceiling_factor (log N)^3`; skipped when zero.
    ceiling_factor: f64,
    ceiling_step: f64,
    ceiling_margin: f64,
    delta: f64,
    alpha: f64,
    max_tries: usize,
    population_cap: usize,
}

impl Default for WallsOptions {
    fn default() -> Self {
        Self {
            mu: None,
            l: None,
            horizon: 2.0,
            init: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            a: 2.0,
            sm_init: vec![-0.3, -0.8, -1.5],
            sm_times: vec![0.5, 1.0, 2.0],
            samples: 2000,
            ceiling_factor: 0.01,
            ceiling_step: 0.05,
            ceiling_margin: 5.0,
            delta: 0.5,
            alpha: default_alpha(),
            max_tries: 10_000,
            population_cap: DEFAULT_POPULATION_CAP,
        }
    }
}

#[derive(Default)]
struct WallsOut {
    violated: Moments,
    killed_right: Moments,
    delta_plus: Moments,
    delta_minus: Moments,
    delta: Moments,
    w: Moments,
    w1: Moments,
    w2: Moments,
    sm: Vec<Moments>,
    martingale: Moments,
    ceiling: Option<(bool, f64)>,
}

fn walls_validation(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    need_grid(cfg)?;
    let opt: WallsOptions = cfg.options()?;
    if opt.samples == 0 || !(opt.horizon > 0.0) || !(opt.a > 0.0) {
        return Err(Error::Config("walls_validation needs samples >= 1, horizon > 0 and a > 0".into()));
    }
    let mut rows = Rows::new(&cfg.scenario);
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let c = constants(n)?;
        let mu = opt.mu.unwrap_or(c.mu);
        let l = opt.l.unwrap_or(c.l);
        if !(mu > 0.0 && mu < SQRT_2) {
            return Err(Error::Config(format!("wall slope must lie in (0, sqrt 2), got {mu} for N={n}")));
        }
        let walls = WallExperiment {
            mu,
            right: Some(Wall {
                offset: l,
                mode: WallMode::Kill,
            }),
            left: Some(Wall {
                offset: 0.0,
                mode: WallMode::Mark,
            }),
            absorb_level: None,
            horizon: opt.horizon,
            init: opt.init.clone(),
            population_cap: opt.population_cap,
            log_events: false,
        };
        walls.validate().map_err(|e| Error::Config(e.to_string()))?;
        let stopped = |mu: f64, h: f64, stop: bool| WallExperiment {
            mu,
            right: None,
            left: stop.then_some(Wall {
                offset: 0.0,
                mode: WallMode::Stop,
            }),
            absorb_level: Some(-opt.a),
            horizon: h,
            init: opt.sm_init.clone(),
            population_cap: opt.population_cap,
            log_events: false,
        };
        let sm_exps: Vec<WallExperiment> = opt.sm_times.iter().map(|&s| stopped(mu, s, true)).collect();
        for e in &sm_exps {
            e.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        let free_exp = stopped(SQRT_2, 1.0, false);
        let ceiling_t = opt.ceiling_factor * cube_log(n);
        let params = Params::one_dimensional(n)?;
        let ceiling_grid: Vec<f64> = if ceiling_t > 0.0 {
            let k = (ceiling_t / opt.ceiling_step + 1e-9).floor() as usize;
            (1..=k).map(|j| j as f64 * opt.ceiling_step).chain([ceiling_t]).collect()
        } else {
            Vec::new()
        };
        let ceiling_grid = time_grid(&[&ceiling_grid]);
        let out = replicate(cfg.seed, n, cfg.replicas_for(i), |rep| {
            let mut o = WallsOut {
                sm: vec![Moments::default(); sm_exps.len()],
                ..Default::default()
            };
            let mut s = rep.stream(AUX);
            for _ in 0..opt.samples {
                let run = run_free_bbm(&walls, &mut s)?;
                let k = &run.counters;
                o.violated.push(k.v_violated as u8 as f64);
                o.killed_right.push(k.killed_right as f64);
                o.delta_plus.push(k.delta_plus as f64);
                o.delta_minus.push(k.delta_minus as f64);
                o.delta.push(k.delta() as f64);
                o.w.push(k.w as f64);
                o.w1.push(k.w1.unwrap_or(0) as f64);
                o.w2.push(k.w2.unwrap_or(0) as f64);
            }
            let mut s = rep.stream(AUX + 1);
            for (e, m) in sm_exps.iter().zip(o.sm.iter_mut()) {
                for _ in 0..opt.samples {
                    let run = run_free_bbm(e, &mut s)?;
                    let ys: Vec<f64> = run.population.iter().map(|p| p.y).collect();
                    m.push(supermartingale_value(&ys, e.horizon, mu, opt.a)?);
                }
            }
            for _ in 0..opt.samples {
                let run = run_free_bbm(&free_exp, &mut s)?;
                let ys: Vec<f64> = run.population.iter().map(|p| p.y).collect();
                o.martingale.push(supermartingale_value(&ys, free_exp.horizon, SQRT_2, opt.a)?);
            }
            if !ceiling_grid.is_empty() {
                let spec = tail_init(opt.alpha);
                let init = initial_satisfying_condition(&spec, &params, opt.delta, &mut rep.stream(INIT), opt.max_tries)?;
                let x = init.ranked_scores(&params.score)[0];
                let mut eng = engine(cfg, &params, &init, rep)?;
                let mut worst = f64::NEG_INFINITY;
                for &t in &ceiling_grid {
                    let conf = eng.run_until(t)?;
                    let min = *conf.ranked_scores(&params.score).last().unwrap();
                    worst = worst.max(min - x - mu * t);
                }
                o.ceiling = Some((worst <= opt.ceiling_margin, worst));
            }
            Ok(o)
        });
        let ok = rows.successes(out);
        let h = opt.horizon;
        let mut pooled = WallsOut {
            sm: vec![Moments::default(); sm_exps.len()],
            ..Default::default()
        };
        let mut held = 0usize;
        let mut ceilings = 0usize;
        for (rep, o) in &ok {
            rows.put(n, rep.seed, h, "v_violated", None, o.violated.mean());
            rows.put(n, rep.seed, h, "killed_right", None, o.killed_right.mean());
            rows.put(n, rep.seed, h, "delta_plus", None, o.delta_plus.mean());
            rows.put(n, rep.seed, h, "delta_minus", None, o.delta_minus.mean());
            rows.put(n, rep.seed, h, "w", None, o.w.mean());
            rows.put(n, rep.seed, h, "w1", None, o.w1.mean());
            rows.put(n, rep.seed, h, "w2", None, o.w2.mean());
            for (m, &s) in o.sm.iter().zip(&opt.sm_times) {
                rows.put(n, rep.seed, s, "supermartingale", None, m.mean());
            }
            rows.put(n, rep.seed, free_exp.horizon, "martingale", None, o.martingale.mean());
            if let Some((ok_c, worst)) = o.ceiling {
                rows.put(n, rep.seed, ceiling_t, "ceiling_holds", None, ok_c as u8 as f64);
                rows.put(n, rep.seed, ceiling_t, "ceiling_max_excess", None, worst);
                held += ok_c as usize;
                ceilings += 1;
            }
            pooled.violated.merge(&o.violated);
            pooled.killed_right.merge(&o.killed_right);
            pooled.delta_plus.merge(&o.delta_plus);
            pooled.delta_minus.merge(&o.delta_minus);
            pooled.delta.merge(&o.delta);
            pooled.w.merge(&o.w);
            pooled.w1.merge(&o.w1);
            pooled.w2.merge(&o.w2);
            for (p, m) in pooled.sm.iter_mut().zip(&o.sm) {
                p.merge(m);
            }
            pooled.martingale.merge(&o.martingale);
        }
        if ok.is_empty() {
            continue;
        }
        let seed = cfg.seed;
        let eps = 2.0 - mu * mu;
        let put2 = |rows: &mut Rows, t: f64, name: &str, m: &Moments| {
            rows.put(n, seed, t, &format!("{name}_mean"), None, m.mean());
            rows.put(n, seed, t, &format!("{name}_se"), None, m.std_error());
        };
        put2(&mut rows, h, "v_violated", &pooled.violated);
        put2(&mut rows, h, "killed_right", &pooled.killed_right);
        put2(&mut rows, h, "delta_plus", &pooled.delta_plus);
        put2(&mut rows, h, "delta_minus", &pooled.delta_minus);
        put2(&mut rows, h, "w", &pooled.w);
        put2(&mut rows, h, "w1", &pooled.w1);
        put2(&mut rows, h, "w2", &pooled.w2);
        rows.put(n, seed, h, "kill_right_bound", None, kill_right_bound(&opt.init, mu, l, h));
        rows.put(n, seed, h, "delta_minus_bound", None, delta_minus_bound(&opt.init, mu, h));
        rows.put(n, seed, h, "w2_bound", None, (0.5 * eps * h).exp() * pooled.delta.mean());
        let m0 = supermartingale_value(&opt.sm_init, 0.0, mu, opt.a)?;
        for (m, &s) in pooled.sm.iter().zip(&opt.sm_times) {
            put2(&mut rows, s, "supermartingale", m);
            rows.put(n, seed, s, "supermartingale_initial", None, m0);
        }
        put2(&mut rows, free_exp.horizon, "martingale", &pooled.martingale);
        rows.put(
            n,
            seed,
            free_exp.horizon,
            "martingale_initial",
            None,
            supermartingale_value(&opt.sm_init, 0.0, SQRT_2, opt.a)?,
        );
        if ceilings > 0 {
            rows.put(n, seed, ceiling_t, "ceiling_fraction", None, held as f64 / ceilings as f64);
        }
    }
    rows.finish(Vec::new())
}

// ---------------------------------------------------------------- many-to-one

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ManyToOneOptions {
    t: f64,
    a: f64,
    /// Offset of the maximum tail event `max >= sqrt(2) t + k`.
    k: f64,
    samples: u64,
}

impl Default for ManyToOneOptions {
    fn default() -> Self {
        Self {
            t: 1.0,
            a: SQRT_2,
            k: 2.0,
            samples: 10_000,
        }
    }
}

fn many_to_one_validation(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    let opt: ManyToOneOptions = cfg.options()?;
    if opt.samples == 0 {
        return Err(Error::Config("samples must be at least 1".into()));
    }
    let n = cfg.n_grid.first().copied().unwrap_or(1);
    let mut rows = Rows::new(&cfg.scenario);
    let out = replicate(cfg.seed, n, cfg.replicas_for(0), |rep| {
        let m = many_to_one_check(opt.t, opt.a, opt.samples, &mut rep.stream(AUX))?;
        let x = max_tail_check(opt.t, opt.k, opt.samples, &mut rep.stream(AUX + 1))?;
        Ok((m, x))
    });
    let ok = rows.successes(out);
    let mut sum = 0.0;
    let mut var = 0.0;
    let mut hits = 0;
    let mut trials = 0;
    let t = opt.t;
    for (rep, (m, x)) in &ok {
        rows.put(n, rep.seed, t, "count", None, m.monte_carlo.mean);
        rows.put(n, rep.seed, t, "count_se", None, m.monte_carlo.std_error);
        rows.put(n, rep.seed, t, "max_tail_frequency", None, x.frequency.estimate);
        sum += m.monte_carlo.mean;
        var += m.monte_carlo.std_error.powi(2);
        hits += x.frequency.successes;
        trials += x.frequency.trials;
    }
    if let Some((_, (m, x))) = ok.first() {
        let r = ok.len() as f64;
        rows.put(n, cfg.seed, t, "count_pooled_mean", None, sum / r);
        rows.put(n, cfg.seed, t, "count_pooled_se", None, var.sqrt() / r);
        rows.put(n, cfg.seed, t, "count_analytic", None, m.analytic);
        let p = Proportion::new(hits, trials);
        rows.put(n, cfg.seed, t, "max_tail_pooled", None, p.estimate);
        rows.put(n, cfg.seed, t, "max_tail_pooled_se", None, p.std_error());
        rows.put(n, cfg.seed, t, "max_tail_bound", None, x.bound);
    }
    rows.finish(Vec::new())
}

// ---------------------------------------------------------------- recombination

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RecombinationOptions {
    rates: Vec<f64>,
    /// Block split: the child takes coordinates `0..k` from one parent.
    k: usize,
    window: [f64; 2],
    statistic: Statistic,
}

impl Default for RecombinationOptions {
    fn default() -> Self {
        Self {
            rates: vec![0.0, 0.25, 0.5, 1.0, 2.0],
            k: 1,
            window: [20.0, 100.0],
            statistic: Statistic::Min,
        }
    }
}

fn recombination(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    need_grid(cfg)?;
    let opt: RecombinationOptions = cfg.options()?;
    check_window(opt.window, "window")?;
    if cfg.d < 2 {
        return Err(Error::Config("recombination needs d >= 2".into()));
    }
    if opt.rates.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
        return Err(Error::Config("recombination rates must be finite and nonnegative".into()));
    }
    let horizon = cfg.horizon.unwrap_or(opt.window[1]);
    if horizon < opt.window[1] {
        return Err(Error::Config("horizon ends before the speed window".into()));
    }
    let score = match &cfg.score {
        super::config::ScoreSpec::Linear { direction: None } => {
            ScoreFunction::linear_normalized(&vec![1.0; cfg.d])?
        }
        other => other.build(cfg.d)?,
    };
    let mut rows = Rows::new(&cfg.scenario);
    let mut curves = Vec::new();
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let mut params = cfg.params(n)?;
        params.score = score.clone();
        let snaps = cfg.snapshot_times(n, horizon);
        let times = time_grid(&[&snaps, &opt.window]);
        let out = replicate(cfg.seed, n, cfg.replicas_for(i), |rep| {
            let mut speeds = Vec::with_capacity(opt.rates.len());
            for (j, &r) in opt.rates.iter().enumerate() {
                let init = make_initial(&cfg.init, &params, &mut rep.stream(INIT))?;
                let mut sys = RecombiningSystem::new(&init, &params.score, params.branch_rate, r, opt.k, rep.stream(16 + j as u64))?;
                let mut ts = vec![init.time];
                let mut vs = vec![opt.statistic.of(&sys.scores())?];
                for &t in times.iter().filter(|&&t| t > init.time) {
                    sys.run_until(t)?;
                    ts.push(t);
                    vs.push(opt.statistic.of(&sys.scores())?);
                }
                speeds.push(speed_estimate(&ts, &vs, opt.window[0], opt.window[1])?);
            }
            Ok(speeds)
        });
        let ok = rows.successes(out);
        let t1 = opt.window[1];
        for (rep, sp) in &ok {
            for (&r, &v) in opt.rates.iter().zip(sp) {
                rows.put(n, rep.seed, t1, "speed", Some(r), v);
            }
        }
        if ok.is_empty() {
            continue;
        }
        let mut curve = Vec::new();
        for (j, &r) in opt.rates.iter().enumerate() {
            let v: Vec<f64> = ok.iter().map(|(_, sp)| sp[j]).collect();
            rows.put(n, cfg.seed, t1, "speed_mean", Some(r), mean(&v));
            rows.put(n, cfg.seed, t1, "speed_se", Some(r), std_error(&v));
            curve.push((r, mean(&v)));
        }
        curves.push(Series::line(format!("N = {n}"), curve));
    }
    let plot = Plot {
        name: "speed".into(),
        title: "Speed against recombination rate".into(),
        x_label: "recombination rate per particle".into(),
        y_label: "speed".into(),
        series: curves,
    };
    rows.finish(vec![plot])
}
