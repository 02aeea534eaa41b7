//! Free branching Brownian motion with moving linear walls.
//!
//! Particles branch at rate 1 and never interact. Walls move at slope `mu`,
//! so every computation happens in wall-relative coordinates `y = x - mu t`
//! where the walls are fixed levels and the motion has drift `-mu`. Wall
//! touches inside a segment are decided with the exact bridge crossing
//! probability; when two levels are within reach of one segment it is
//! bisected by sampling bridge midpoints until each piece can only touch
//! one of them, which recovers the order of the touches.
//!
//! Lineages are independent, so a run is a depth-first walk over the
//! family tree. This keeps memory proportional to the tree height and lets
//! the survival estimator stop at the first lineage reaching the horizon.

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::kernels::{level_cross_prob, normal_upper_tail, positive_exp, RngStream};

/// Default cap on the number of particles created in one run.
pub const DEFAULT_POPULATION_CAP: usize = 10_000_000;

/// Crossing probabilities below this are treated as zero when ordering
/// touches of different levels.
const NEGLIGIBLE: f64 = 1e-18;
const MAX_DEPTH: u32 = 60;

/// What happens to a particle touching a wall.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallMode {
    /// The particle is removed.
    Kill,
    /// The particle freezes on the wall and stops branching.
    Stop,
    /// The particle and its descendants are flagged and carry on.
    Mark,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    /// Position of the wall at time 0.
    pub offset: f64,
    pub mode: WallMode,
}

/// Boundary a particle ended on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Right,
    Left,
    Absorb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WallExperiment {
    /// Slope of every wall.
    pub mu: f64,
    /// Wall at `offset + mu t`, approached from below.
    pub right: Option<Wall>,
    /// Wall at `offset + mu t` that particles may touch from either side.
    pub left: Option<Wall>,
    /// Killing level `absorb_level + mu t` below everything else.
    pub absorb_level: Option<f64>,
    pub horizon: f64,
    /// Initial positions.
    pub init: Vec<f64>,
    pub population_cap: usize,
    /// Keep one record per particle lifetime.
    #[serde(default)]
    pub log_events: bool,
}

impl WallExperiment {
    /// No walls, default cap.
    pub fn free(init: Vec<f64>, horizon: f64) -> Self {
        Self {
            mu: 0.0,
            right: None,
            left: None,
            absorb_level: None,
            horizon,
            init,
            population_cap: DEFAULT_POPULATION_CAP,
            log_events: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return arg("wall slope must be finite");
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return arg(format!("horizon must be finite and nonnegative, got {}", self.horizon));
        }
        if self.population_cap == 0 {
            return arg("population cap must be positive");
        }
        if self.init.iter().any(|x| !x.is_finite()) {
            return arg("initial positions must be finite");
        }
        let top = self.init.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let bottom = self.init.iter().copied().fold(f64::INFINITY, f64::min);
        if let Some(r) = self.right {
            if !r.offset.is_finite() {
                return arg("right wall offset must be finite");
            }
            if r.mode == WallMode::Mark {
                return arg("the right wall kills or stops");
            }
            if top > r.offset {
                return arg(format!(
                    "right wall at {} lies below the initial particle at {top}",
                    r.offset
                ));
            }
        }
        if let Some(l) = self.left {
            if !l.offset.is_finite() {
                return arg("left wall offset must be finite");
            }
            if let Some(r) = self.right {
                if !(r.offset > l.offset) {
                    return arg("the right wall must lie above the left wall");
                }
            }
        }
        if let Some(a) = self.absorb_level {
            if !a.is_finite() {
                return arg("absorbing level must be finite");
            }
            if !(bottom > a) {
                return arg(format!("initial particle at {bottom} is not above the absorbing level {a}"));
            }
            let above = self.left.map(|l| l.offset).or(self.right.map(|r| r.offset));
            if let Some(w) = above {
                if !(w > a) {
                    return arg("the absorbing level must lie below the walls");
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WallCounters {
    /// First left-wall touches by lineages started at or above the left wall.
    pub delta_plus: u64,
    /// First left-wall touches by lineages started below it.
    pub delta_minus: u64,
    /// Right-wall touches.
    pub killed_right: u64,
    pub absorbed: u64,
    /// Particles alive at the horizon, frozen ones included.
    pub survivors: u64,
    pub w: u64,
    /// Only available when left touches are tracked with [`WallMode::Mark`].
    pub w1: Option<u64>,
    pub w2: Option<u64>,
    pub v_violated: bool,
}

impl WallCounters {
    pub fn delta(&self) -> u64 {
        self.delta_plus + self.delta_minus
    }
}

/// A particle alive at the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeParticle {
    pub id: u64,
    /// Position at the horizon.
    pub x: f64,
    /// Position relative to the walls, `x - mu t`.
    pub y: f64,
    /// Whether the lineage ever touched the left wall; `None` when such
    /// touches are not tracked.
    pub marked: Option<bool>,
    /// Wall the particle is frozen on.
    pub stopped: Option<Boundary>,
}

/// How a particle's lifetime ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Branched,
    Horizon,
    Killed(Boundary),
    Stopped(Boundary),
}

/// One particle lifetime in wall-relative coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub id: u64,
    pub parent: Option<u64>,
    pub t0: f64,
    pub y0: f64,
    pub t1: f64,
    /// Position at `t1`; the wall level for killed or stopped particles.
    pub y1: f64,
    pub outcome: Outcome,
    /// The lineage touched the left wall for the first time in this
    /// lifetime.
    pub first_left_touch: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeRun {
    pub counters: WallCounters,
    /// Survivors sorted by decreasing position, ties by id.
    pub population: Vec<FreeParticle>,
    pub log: Option<Vec<SegmentRecord>>,
}

#[derive(Clone, Copy)]
struct Level {
    y: f64,
    mode: WallMode,
    side: Boundary,
}

#[derive(Clone, Copy)]
struct Lineage {
    id: u64,
    parent: Option<u64>,
    t: f64,
    y: f64,
    marked: bool,
    from_below: bool,
}

/// Walls of an experiment expressed as fixed levels.
struct Levels {
    right: Option<Level>,
    left: Option<Level>,
    absorb: Option<Level>,
}

impl Levels {
    fn of(exp: &WallExperiment) -> Self {
        Self {
            right: exp.right.map(|w| Level {
                y: w.offset,
                mode: w.mode,
                side: Boundary::Right,
            }),
            left: exp.left.map(|w| Level {
                y: w.offset,
                mode: w.mode,
                side: Boundary::Left,
            }),
            absorb: exp.absorb_level.map(|a| Level {
                y: a,
                mode: WallMode::Kill,
                side: Boundary::Absorb,
            }),
        }
    }

    fn active(&self, marked: bool) -> ([Level; 3], usize) {
        let mut out = [Level {
            y: 0.0,
            mode: WallMode::Kill,
            side: Boundary::Absorb,
        }; 3];
        let mut n = 0;
        for l in [self.right, self.left, self.absorb].into_iter().flatten() {
            if l.side == Boundary::Left && marked && l.mode == WallMode::Mark {
                continue;
            }
            out[n] = l;
            n += 1;
        }
        (out, n)
    }
}

/// Result of scanning one lifetime for wall touches.
#[derive(Default)]
struct Scan {
    terminal: Option<Level>,
    first_left_touch: bool,
}

/// Scans the bridge from `(t0, y0)` to `(t1, y1)` for touches in time order.
/// Marking touches update `marked` and the scan continues; the first
/// killing or stopping touch ends it.
fn scan(
    levels: &Levels,
    rng: &mut RngStream,
    (t0, y0): (f64, f64),
    (t1, y1): (f64, f64),
    marked: &mut bool,
    out: &mut Scan,
    depth: u32,
) {
    let dt = t1 - t0;
    let (active, n) = levels.active(*marked);
    let mut reach = [(active[0], 0.0); 3];
    let mut count = 0;
    for &l in &active[..n] {
        let p = if dt > 0.0 {
            level_cross_prob(y0, y1, dt, l.y)
        } else if (y0 - l.y) * (y1 - l.y) <= 0.0 {
            1.0
        } else {
            0.0
        };
        if p > NEGLIGIBLE {
            reach[count] = (l, p);
            count += 1;
        }
    }
    if count == 0 {
        return;
    }
    if count == 1 || depth >= MAX_DEPTH || !(dt > 0.0) {
        for &(l, p) in &reach[..count] {
            if (p >= 1.0 || rng.uniform() < p) && touch(l, marked, out) {
                return;
            }
        }
        return;
    }
    let tm = t0 + 0.5 * dt;
    let ym = 0.5 * (y0 + y1) + 0.5 * dt.sqrt() * rng.normal();
    scan(levels, rng, (t0, y0), (tm, ym), marked, out, depth + 1);
    if out.terminal.is_none() {
        scan(levels, rng, (tm, ym), (t1, y1), marked, out, depth + 1);
    }
}

/// Applies a touch; returns true when it ends the lifetime.
fn touch(l: Level, marked: &mut bool, out: &mut Scan) -> bool {
    if l.side == Boundary::Left && !*marked {
        out.first_left_touch = true;
    }
    match l.mode {
        WallMode::Mark => {
            *marked = true;
            false
        }
        WallMode::Kill | WallMode::Stop => {
            if l.side == Boundary::Left {
                *marked = true;
            }
            out.terminal = Some(l);
            true
        }
    }
}

/// Walks the family tree depth first, calling `visit` for every finished
/// lifetime. `visit` returns false to stop the walk early.
fn walk(
    exp: &WallExperiment,
    rng: &mut RngStream,
    mut visit: impl FnMut(&Lineage, &SegmentRecord, bool) -> bool,
) -> Result<()> {
    exp.validate()?;
    let levels = Levels::of(exp);
    let left_y = exp.left.map(|w| w.offset);
    // roots get ids in initial order and are explored in that order
    let mut stack: Vec<Lineage> = (0..exp.init.len())
        .rev()
        .map(|k| Lineage {
            id: k as u64,
            parent: None,
            t: 0.0,
            y: exp.init[k],
            marked: false,
            from_below: left_y.is_some_and(|l| exp.init[k] < l),
        })
        .collect();
    let mut next_id = exp.init.len() as u64;
    let mut created = exp.init.len();
    if created > exp.population_cap {
        return Err(Error::Capacity {
            cap: exp.population_cap,
        });
    }
    while let Some(mut lin) = stack.pop() {
        let life = positive_exp(rng);
        let end = (lin.t + life).min(exp.horizon);
        let dt = end - lin.t;
        let y_end = lin.y - exp.mu * dt + dt.sqrt() * rng.normal();
        let mut marked = lin.marked;
        let mut sc = Scan::default();
        scan(
            &levels,
            rng,
            (lin.t, lin.y),
            (end, y_end),
            &mut marked,
            &mut sc,
            0,
        );
        let mut rec = SegmentRecord {
            id: lin.id,
            parent: lin.parent,
            t0: lin.t,
            y0: lin.y,
            t1: end,
            y1: y_end,
            outcome: Outcome::Horizon,
            first_left_touch: sc.first_left_touch,
        };
        let branched = sc.terminal.is_none() && lin.t + life < exp.horizon;
        if let Some(l) = sc.terminal {
            rec.y1 = l.y;
            rec.outcome = if l.mode == WallMode::Stop {
                Outcome::Stopped(l.side)
            } else {
                Outcome::Killed(l.side)
            };
        } else if branched {
            rec.outcome = Outcome::Branched;
        }
        lin.marked = marked;
        if !visit(&lin, &rec, branched) {
            return Ok(());
        }
        if branched {
            created += 2;
            if created > exp.population_cap {
                return Err(Error::Capacity {
                    cap: exp.population_cap,
                });
            }
            for _ in 0..2 {
                stack.push(Lineage {
                    id: next_id,
                    parent: Some(lin.id),
                    t: end,
                    y: y_end,
                    ..lin
                });
                next_id += 1;
            }
            // explore the first child first
            let len = stack.len();
            stack.swap(len - 1, len - 2);
        }
    }
    Ok(())
}

/// Runs one replica of free branching Brownian motion with the given walls.
pub fn run_free_bbm(exp: &WallExperiment, stream: &mut RngStream) -> Result<FreeRun> {
    let mut counters = WallCounters::default();
    let mut population = Vec::new();
    let mut log = exp.log_events.then(Vec::new);
    let track = exp.left.is_some_and(|w| w.mode == WallMode::Mark);
    let t = exp.horizon;
    let mu = exp.mu;
    walk(exp, stream, |lin, rec, _| {
        if rec.first_left_touch {
            if lin.from_below {
                counters.delta_minus += 1;
            } else {
                counters.delta_plus += 1;
            }
        }
        match rec.outcome {
            Outcome::Killed(Boundary::Right) | Outcome::Stopped(Boundary::Right) => {
                counters.killed_right += 1
            }
            Outcome::Killed(Boundary::Absorb) => counters.absorbed += 1,
            _ => {}
        }
        let frozen = match rec.outcome {
            Outcome::Stopped(b) => Some(b),
            _ => None,
        };
        if rec.outcome == Outcome::Horizon || frozen.is_some() {
            population.push(FreeParticle {
                id: rec.id,
                x: rec.y1 + mu * t,
                y: rec.y1,
                marked: track.then_some(lin.marked),
                stopped: frozen,
            });
        }
        if let Some(log) = log.as_mut() {
            log.push(rec.clone());
        }
        true
    })?;
    population.sort_by(|a, b| b.x.total_cmp(&a.x).then(a.id.cmp(&b.id)));
    counters.survivors = population.len() as u64;
    counters.v_violated = counters.killed_right > 0;
    match count_w(&population, mu, t) {
        Ok((w, w1, w2)) => {
            counters.w = w;
            counters.w1 = Some(w1);
            counters.w2 = Some(w2);
        }
        Err(_) => {
            counters.w = population
                .iter()
                .filter(|p| p.stopped.is_none() && p.x >= mu * t)
                .count() as u64;
        }
    }
    Ok(FreeRun {
        counters,
        population,
        log,
    })
}

/// Counts moving survivors at or above `mu t`, split into lineages that never
/// touched the left wall (`W1`) and those that did (`W2`).
pub fn count_w(population: &[FreeParticle], mu: f64, t: f64) -> Result<(u64, u64, u64)> {
    let (mut w1, mut w2) = (0, 0);
    for p in population {
        let marked = p
            .marked
            .ok_or_else(|| Error::Query("left-wall touches were not tracked".into()))?;
        if p.stopped.is_some() || p.x < mu * t {
            continue;
        }
        if marked {
            w2 += 1;
        } else {
            w1 += 1;
        }
    }
    Ok((w1 + w2, w1, w2))
}

/// `sum (y + A) exp(mu (y + A) - (2 - mu^2) s / 2)` over wall-relative
/// positions `y`, with frozen particles entered at their wall.
pub fn supermartingale_value(positions: &[f64], s: f64, mu: f64, a: f64) -> Result<f64> {
    if let Some(y) = positions.iter().find(|&&y| !(y >= -a)) {
        return Err(Error::Data(format!("position {y} lies below -A = {}", -a)));
    }
    let decay = -0.5 * (2.0 - mu * mu) * s;
    Ok(positions
        .iter()
        .map(|&y| (y + a) * (mu * (y + a) + decay).exp())
        .sum())
}

/// Proportion with a Wilson score interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Proportion {
    /// Estimate with a 95% Wilson interval.
    pub fn new(successes: u64, trials: u64) -> Self {
        let n = trials as f64;
        let p = successes as f64 / n;
        let z = 1.959963984540054;
        let denom = 1.0 + z * z / n;
        let centre = (p + z * z / (2.0 * n)) / denom;
        let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
        Self {
            successes,
            trials,
            estimate: p,
            lower: (centre - half).max(0.0),
            upper: (centre + half).min(1.0),
        }
    }

    pub fn std_error(&self) -> f64 {
        (self.estimate * (1.0 - self.estimate) / self.trials as f64).sqrt()
    }
}

/// Probability that free branching Brownian motion from one particle at `y`
/// keeps at least one particle above the wall `mu_prime t` up to `horizon`.
///
/// Only meaningful for `mu_prime < sqrt 2`; at or above that slope the
/// population dies out almost surely as the horizon grows. Each replica
/// stops at the first lineage that reaches the horizon.
pub fn survival_probability_estimate(
    y: f64,
    mu_prime: f64,
    horizon: f64,
    reps: u64,
    stream: &mut RngStream,
) -> Result<Proportion> {
    survival_with_cap(y, mu_prime, horizon, reps, DEFAULT_POPULATION_CAP, stream)
}

pub fn survival_with_cap(
    y: f64,
    mu_prime: f64,
    horizon: f64,
    reps: u64,
    cap: usize,
    stream: &mut RngStream,
) -> Result<Proportion> {
    if !(mu_prime < std::f64::consts::SQRT_2) {
        return arg(format!("wall slope {mu_prime} must be below sqrt 2"));
    }
    if !(y >= 0.0) {
        return arg(format!("start height must be nonnegative, got {y}"));
    }
    if reps == 0 {
        return arg("at least one replica is needed");
    }
    let exp = WallExperiment {
        mu: mu_prime,
        right: None,
        left: Some(Wall {
            offset: 0.0,
            mode: WallMode::Kill,
        }),
        absorb_level: None,
        horizon,
        init: vec![y],
        population_cap: cap,
        log_events: false,
    };
    let mut alive = 0;
    for _ in 0..reps {
        let mut survived = false;
        walk(&exp, stream, |_, rec, _| {
            survived = rec.outcome == Outcome::Horizon;
            !survived
        })?;
        alive += survived as u64;
    }
    Ok(Proportion::new(alive, reps))
}

/// Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub reps: u64,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std_error: (var / n).sqrt(),
            reps: xs.len() as u64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManyToOne {
    pub monte_carlo: MeanEstimate,
    /// `e^t P(B_t >= a)`.
    pub analytic: f64,
}

/// Mean number of particles at or above `a` at time `t` for free branching
/// Brownian motion from one particle at 0, against `e^t P(B_t >= a)`.
pub fn many_to_one_check(t: f64, a: f64, reps: u64, stream: &mut RngStream) -> Result<ManyToOne> {
    if !(t > 0.0) {
        return arg(format!("time must be positive, got {t}"));
    }
    if reps == 0 {
        return arg("at least one replica is needed");
    }
    let exp = WallExperiment::free(vec![0.0], t);
    let mut counts = Vec::with_capacity(reps as usize);
    for _ in 0..reps {
        let run = run_free_bbm(&exp, stream)?;
        counts.push(run.population.iter().filter(|p| p.x >= a).count() as f64);
    }
    Ok(ManyToOne {
        monte_carlo: MeanEstimate::from_samples(&counts),
        analytic: t.exp() * normal_upper_tail(a / t.sqrt()),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxTail {
    pub frequency: Proportion,
    /// `e^{-sqrt 2 k}`.
    pub bound: f64,
}

/// Frequency of `max_i X_i(t) >= sqrt(2) t + k` for free branching Brownian
/// motion from one particle at 0.
pub fn max_tail_check(t: f64, k: f64, reps: u64, stream: &mut RngStream) -> Result<MaxTail> {
    if !(t > 0.0) {
        return arg(format!("time must be positive, got {t}"));
    }
    if reps == 0 {
        return arg("at least one replica is needed");
    }
    let exp = WallExperiment::free(vec![0.0], t);
    let level = std::f64::consts::SQRT_2 * t + k;
    let mut hits = 0;
    for _ in 0..reps {
        let run = run_free_bbm(&exp, stream)?;
        hits += run.population.first().is_some_and(|p| p.x >= level) as u64;
    }
    Ok(MaxTail {
        frequency: Proportion::new(hits, reps),
        bound: (-std::f64::consts::SQRT_2 * k).exp(),
    })
}

/// `e^{-mu L} e^{eps t / 2} sum_i e^{mu x_i}` with `eps = 2 - mu^2`, the
/// bound on the probability that some particle reaches `L + mu s` by `t`.
pub fn kill_right_bound(init: &[f64], mu: f64, l: f64, t: f64) -> f64 {
    let eps = 2.0 - mu * mu;
    let sum: f64 = init.iter().map(|&x| (mu * x).exp()).sum();
    (-mu * l + 0.5 * eps * t).exp() * sum
}

/// `e^{eps t / 2} sum_{x_i < 0} e^{mu x_i}`, the bound on the mean number of
/// left-wall touches from below.
pub fn delta_minus_bound(init: &[f64], mu: f64, t: f64) -> f64 {
    let eps = 2.0 - mu * mu;
    let sum: f64 = init.iter().filter(|&&x| x < 0.0).map(|&x| (mu * x).exp()).sum();
    (0.5 * eps * t).exp() * sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_walls(init: Vec<f64>, horizon: f64) -> WallExperiment {
        WallExperiment {
            mu: 1.2595,
            right: Some(Wall {
                offset: 4.884,
                mode: WallMode::Kill,
            }),
            left: Some(Wall {
                offset: 0.0,
                mode: WallMode::Mark,
            }),
            absorb_level: None,
            horizon,
            init,
            population_cap: DEFAULT_POPULATION_CAP,
            log_events: true,
        }
    }

    #[test]
    fn start_on_right_wall_dies_at_once() {
        let exp = WallExperiment {
            right: Some(Wall {
                offset: 0.0,
                mode: WallMode::Kill,
            }),
            ..WallExperiment::free(vec![0.0], 2.0)
        };
        let run = run_free_bbm(&exp, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(run.counters.killed_right, 1);
        assert_eq!(run.counters.survivors, 0);
        assert!(run.counters.v_violated);
        assert_eq!(run.counters.w, 0);
    }

    #[test]
    fn rejects_invalid_walls() {
        let mut exp = WallExperiment::free(vec![1.0], 1.0);
        exp.right = Some(Wall {
            offset: 0.5,
            mode: WallMode::Kill,
        });
        assert!(matches!(run_free_bbm(&exp, &mut RngStream::new(1, 0)), Err(Error::Argument(_))));
        let mut exp = WallExperiment::free(vec![1.0], 1.0);
        exp.absorb_level = Some(2.0);
        assert!(exp.validate().is_err());
        let mut exp = WallExperiment::free(vec![1.0], 1.0);
        exp.population_cap = 0;
        assert!(exp.validate().is_err());
    }

    #[test]
    fn cap_is_enforced() {
        let mut exp = WallExperiment::free(vec![0.0], 20.0);
        exp.population_cap = 1000;
        let r = run_free_bbm(&exp, &mut RngStream::new(3, 0));
        assert!(matches!(r, Err(Error::Capacity { cap: 1000 })));
    }

    #[test]
    fn counters_are_consistent() {
        for seed in 0..20 {
            let run = run_free_bbm(&two_walls(vec![1.0, -0.5, 2.0], 3.0), &mut RngStream::new(seed, 0))
                .unwrap();
            let c = &run.counters;
            assert_eq!(c.w, c.w1.unwrap() + c.w2.unwrap());
            assert_eq!(c.v_violated, c.killed_right > 0);
            let log = run.log.unwrap();
            let lefts = log.iter().filter(|r| r.first_left_touch).count() as u64;
            assert_eq!(lefts, c.delta());
        }
    }

    #[test]
    fn count_w_small_cases() {
        assert_eq!(count_w(&[], 1.0, 1.0).unwrap(), (0, 0, 0));
        let p = FreeParticle {
            id: 0,
            x: 2.0,
            y: 1.0,
            marked: Some(false),
            stopped: None,
        };
        assert_eq!(count_w(std::slice::from_ref(&p), 1.0, 1.0).unwrap(), (1, 1, 0));
        let q = FreeParticle { marked: None, ..p };
        assert!(matches!(count_w(&[q], 1.0, 1.0), Err(Error::Query(_))));
    }

    #[test]
    fn supermartingale_examples() {
        let v = supermartingale_value(&[-1.0], 0.0, 1.25949, 2.0).unwrap();
        assert!((v - 1.25949f64.exp()).abs() < 1e-12);
        assert!((v - 3.52362).abs() < 1e-4);
        assert_eq!(supermartingale_value(&[], 1.0, 1.0, 2.0).unwrap(), 0.0);
        assert!(matches!(supermartingale_value(&[-3.0], 0.0, 1.0, 2.0), Err(Error::Data(_))));
    }

    #[test]
    fn survival_on_the_wall_is_zero() {
        let p = survival_probability_estimate(0.0, 1.0, 5.0, 200, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(p.successes, 0);
        assert!(survival_probability_estimate(1.0, 1.5, 5.0, 10, &mut RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn many_to_one_limits() {
        let r = many_to_one_check(1.0, 100.0, 200, &mut RngStream::new(2, 0)).unwrap();
        assert_eq!(r.monte_carlo.mean, 0.0);
        assert!(r.analytic < 1e-300);
        let r = many_to_one_check(1.0, -10.0, 1, &mut RngStream::new(2, 0)).unwrap();
        assert!((r.analytic - std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn wilson_interval_brackets_estimate() {
        let p = Proportion::new(30, 100);
        assert!(p.lower < 0.3 && p.upper > 0.3);
        assert!((p.lower - 0.2189).abs() < 1e-3 && (p.upper - 0.3958).abs() < 1e-3);
    }
}
