//! Score functions, run parameters, particle configurations and initial
//! conditions.

use std::cmp::Ordering;
use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::kernels::RngStream;

const UNIT_TOL: f64 = 1e-12;

/// Particle identifier; also the genealogy node id.
pub type ParticleId = u64;

/// Fitness evaluator for a particle position.
/// Custom score evaluator.
pub type ScoreFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum ScoreFunction {
    /// `<lambda, x>` for a unit vector `lambda`.
    Linear(Vec<f64>),
    /// `|x|`.
    Euclidean,
    /// Arbitrary evaluator; only the two cases above are exercised by the
    /// scenarios.
    Custom(ScoreFn),
}

impl fmt::Debug for ScoreFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreFunction::Linear(l) => f.debug_tuple("Linear").field(l).finish(),
            ScoreFunction::Euclidean => f.write_str("Euclidean"),
            ScoreFunction::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl ScoreFunction {
    /// Linear score with a validated unit direction.
    pub fn linear(lambda: Vec<f64>) -> Result<Self> {
        check_unit(&lambda, UNIT_TOL, "score direction")?;
        Ok(ScoreFunction::Linear(lambda))
    }

    /// Linear score along the normalisation of `v`.
    pub fn linear_normalized(v: &[f64]) -> Result<Self> {
        let n = norm(v);
        if !(n > 0.0) || !n.is_finite() {
            return arg("cannot normalise a zero or non-finite direction");
        }
        Ok(ScoreFunction::Linear(v.iter().map(|c| c / n).collect()))
    }

    pub fn direction(&self) -> Option<&[f64]> {
        match self {
            ScoreFunction::Linear(l) => Some(l),
            _ => None,
        }
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            ScoreFunction::Linear(l) => dot(l, x),
            ScoreFunction::Euclidean => norm(x),
            ScoreFunction::Custom(f) => f(x),
        }
    }

    pub(crate) fn validate(&self, d: usize) -> Result<()> {
        match self {
            ScoreFunction::Linear(l) => {
                if l.len() != d {
                    return arg(format!("score direction has {} coordinates, expected {d}", l.len()));
                }
                check_unit(l, UNIT_TOL, "score direction")
            }
            _ => Ok(()),
        }
    }
}

/// Fitness of `x`.
pub fn score(sf: &ScoreFunction, x: &[f64]) -> Result<f64> {
    if let ScoreFunction::Linear(l) = sf {
        if l.len() != x.len() {
            return arg(format!(
                "point has {} coordinates but the score direction has {}",
                x.len(),
                l.len()
            ));
        }
    }
    if x.is_empty() {
        return arg("point must have at least one coordinate");
    }
    Ok(sf.eval_unchecked(x))
}

/// Parameters of an N-particle system.
#[derive(Clone, Debug)]
pub struct Params {
    pub n: usize,
    pub d: usize,
    pub branch_rate: f64,
    pub score: ScoreFunction,
    pub horizon: f64,
    pub seed: u64,
}

impl Params {
    pub fn new(n: usize, d: usize, score: ScoreFunction) -> Result<Self> {
        let p = Self {
            n,
            d,
            branch_rate: 1.0,
            score,
            horizon: 0.0,
            seed: 0,
        };
        p.validate()?;
        Ok(p)
    }

    /// One-dimensional system with the identity score.
    pub fn one_dimensional(n: usize) -> Result<Self> {
        Self::new(n, 1, ScoreFunction::Linear(vec![1.0]))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        // N = 1 is accepted: selection is vacuous and the particle is a
        // plain Brownian motion, which the single-particle checks rely on.
        if self.n == 0 {
            return arg("population size must be positive");
        }
        if self.d == 0 {
            return arg("dimension must be at least 1");
        }
        if !(self.branch_rate > 0.0) || !self.branch_rate.is_finite() {
            return arg(format!("branch rate must be positive, got {}", self.branch_rate));
        }
        self.score.validate(self.d)
    }
}

/// Large-N constants attached to a population size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AsymptoticConstants {
    /// `log N / sqrt 2`.
    pub l: f64,
    /// `2 pi^2 / (log N)^2`.
    pub eps: f64,
    /// `sqrt(2 - eps)`.
    pub mu: f64,
    /// `sqrt 2 - pi^2 / (sqrt 2 (log N)^2)`.
    pub v_pred: f64,
}

impl AsymptoticConstants {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return arg("asymptotic constants need N >= 2");
        }
        let log_n = (n as f64).ln();
        let eps = 2.0 * PI * PI / (log_n * log_n);
        Ok(Self {
            l: log_n / SQRT_2,
            eps,
            // mu may be NaN for very small N where eps > 2.
            mu: (2.0 - eps).sqrt(),
            v_pred: SQRT_2 - PI * PI / (SQRT_2 * log_n * log_n),
        })
    }
}

/// Snapshot of N particles at one time.
///
/// `order[0]` is the fittest particle; ties go to the smaller id.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    pub time: f64,
    pub d: usize,
    coords: Vec<f64>,
    ids: Vec<ParticleId>,
    order: Vec<usize>,
}

impl Configuration {
    /// Builds a configuration from flat coordinates (`d` per particle) and
    /// computes its fitness ordering.
    pub fn new(
        time: f64,
        d: usize,
        coords: Vec<f64>,
        ids: Vec<ParticleId>,
        sf: &ScoreFunction,
    ) -> Result<Self> {
        if d == 0 || coords.len() != d * ids.len() {
            return arg("coordinate buffer does not match the particle count");
        }
        let mut seen = ids.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Data("particle ids are not unique".into()));
        }
        let mut cfg = Self {
            time,
            d,
            coords,
            ids,
            order: Vec::new(),
        };
        cfg.order = sort_by_fitness(&cfg, sf)?;
        Ok(cfg)
    }

    pub(crate) fn from_parts(
        time: f64,
        d: usize,
        coords: Vec<f64>,
        ids: Vec<ParticleId>,
        order: Vec<usize>,
    ) -> Self {
        Self {
            time,
            d,
            coords,
            ids,
            order,
        }
    }

    pub fn from_points(time: f64, points: &[Vec<f64>], sf: &ScoreFunction) -> Result<Self> {
        let d = points.first().map(|p| p.len()).unwrap_or(1);
        if points.iter().any(|p| p.len() != d) {
            return arg("points have mixed dimensions");
        }
        let coords = points.iter().flatten().copied().collect();
        let ids = (0..points.len() as u64).collect();
        Self::new(time, d, coords, ids, sf)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn positions(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.d)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn ids(&self) -> &[ParticleId] {
        &self.ids
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Position of the particle with fitness rank `rank` (0 = fittest).
    pub fn ranked(&self, rank: usize) -> &[f64] {
        self.position(self.order[rank])
    }

    /// Scores in descending order.
    pub fn ranked_scores(&self, sf: &ScoreFunction) -> Vec<f64> {
        self.order
            .iter()
            .map(|&i| sf.eval_unchecked(self.position(i)))
            .collect()
    }

    pub fn radius(&self, i: usize) -> f64 {
        norm(self.position(i))
    }

    /// Unit direction of particle `i`; `None` at the origin.
    pub fn direction(&self, i: usize) -> Option<Vec<f64>> {
        let p = self.position(i);
        let r = norm(p);
        (r > 0.0).then(|| p.iter().map(|c| c / r).collect())
    }

    /// Coordinate along `lambda`.
    pub fn projected(&self, i: usize, lambda: &[f64]) -> f64 {
        dot(self.position(i), lambda)
    }
}

/// Descending-score permutation of the configuration's particles, ties
/// broken by ascending particle id.
pub fn sort_by_fitness(config: &Configuration, sf: &ScoreFunction) -> Result<Vec<usize>> {
    let scores: Vec<f64> = config
        .positions()
        .map(|p| sf.eval_unchecked(p))
        .collect();
    order_scores(&scores, config.ids())
}

pub(crate) fn order_scores(scores: &[f64], ids: &[ParticleId]) -> Result<Vec<usize>> {
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Data(format!("score of particle {} is NaN", ids[i])));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| fitness_cmp(scores[a], ids[a], scores[b], ids[b]));
    Ok(order)
}

/// Fitness comparison: `Less` means the first particle ranks higher.
#[inline]
pub(crate) fn fitness_cmp(sa: f64, ia: ParticleId, sb: f64, ib: ParticleId) -> Ordering {
    sb.partial_cmp(&sa).unwrap_or(Ordering::Equal).then(ia.cmp(&ib))
}

/// Initial condition generators.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSpec {
    AllAtOrigin,
    ExplicitList { positions: Vec<Vec<f64>> },
    /// Two-sided exponential coordinate of rate `alpha` along `direction`,
    /// standard normal coordinates orthogonal to it.
    IidTail {
        alpha: f64,
        #[serde(default)]
        direction: Option<Vec<f64>>,
    },
}

/// Draws the time-0 configuration, ids `0..N`.
pub fn make_initial(spec: &InitSpec, params: &Params, stream: &mut RngStream) -> Result<Configuration> {
    params.validate()?;
    let (n, d) = (params.n, params.d);
    let coords = match spec {
        InitSpec::AllAtOrigin => vec![0.0; n * d],
        InitSpec::ExplicitList { positions } => {
            if positions.len() != n {
                return arg(format!("explicit list has {} positions, expected {n}", positions.len()));
            }
            if positions.iter().any(|p| p.len() != d) {
                return arg(format!("explicit positions must have {d} coordinates"));
            }
            positions.iter().flatten().copied().collect()
        }
        InitSpec::IidTail { alpha, direction } => {
            if !(*alpha > 0.0) {
                return arg(format!("tail rate must be positive, got {alpha}"));
            }
            let lambda = match direction {
                Some(l) => {
                    if l.len() != d {
                        return arg("tail direction has the wrong dimension");
                    }
                    check_unit(l, 1e-10, "tail direction")?;
                    l.clone()
                }
                None => params
                    .score
                    .direction()
                    .map(|l| l.to_vec())
                    .unwrap_or_else(|| unit_e1(d)),
            };
            let basis = orthonormal_complement(&lambda);
            let mut coords = Vec::with_capacity(n * d);
            for _ in 0..n {
                let along = laplace(stream, *alpha);
                let mut x: Vec<f64> = lambda.iter().map(|l| l * along).collect();
                for e in &basis {
                    let g = stream.normal();
                    for (xc, ec) in x.iter_mut().zip(e) {
                        *xc += g * ec;
                    }
                }
                coords.extend(x);
            }
            coords
        }
    };
    Configuration::new(0.0, d, coords, (0..n as u64).collect(), &params.score)
}

fn laplace(stream: &mut RngStream, alpha: f64) -> f64 {
    let e = stream.exp1() / alpha;
    if stream.coin() {
        e
    } else {
        -e
    }
}

/// `sum_n exp(sqrt2 (<X_n, lambda> - max_m <X_m, lambda>))`. The initial
/// condition with exponent `delta` holds iff the value is at most `N^delta`.
pub fn init_condition_stat(config: &Configuration, lambda: &[f64]) -> f64 {
    let proj: Vec<f64> = (0..config.len()).map(|i| config.projected(i, lambda)).collect();
    let top = proj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    proj.iter().map(|x| (SQRT_2 * (x - top)).exp()).sum()
}

/// Redraws an `IidTail` configuration until the condition statistic is at
/// most `N^delta`.
pub fn initial_satisfying_condition(
    spec: &InitSpec,
    params: &Params,
    delta: f64,
    stream: &mut RngStream,
    max_tries: usize,
) -> Result<Configuration> {
    let lambda = params
        .score
        .direction()
        .map(|l| l.to_vec())
        .unwrap_or_else(|| unit_e1(params.d));
    let bound = (params.n as f64).powf(delta);
    for _ in 0..max_tries {
        let cfg = make_initial(spec, params, stream)?;
        if init_condition_stat(&cfg, &lambda) <= bound {
            return Ok(cfg);
        }
    }
    Err(Error::Config(format!(
        "no initial condition with statistic <= N^{delta} after {max_tries} draws"
    )))
}

pub(crate) fn unit_e1(d: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[0] = 1.0;
    e
}

/// Orthonormal basis of the complement of the unit vector `lambda`.
pub fn orthonormal_complement(lambda: &[f64]) -> Vec<Vec<f64>> {
    let d = lambda.len();
    let mut basis: Vec<Vec<f64>> = vec![lambda.to_vec()];
    // Gram-Schmidt over the standard basis, skipping the axis most aligned
    // with lambda last so nearly-parallel candidates are dropped.
    let mut axes: Vec<usize> = (0..d).collect();
    axes.sort_by(|&a, &b| lambda[a].abs().partial_cmp(&lambda[b].abs()).unwrap_or(Ordering::Equal));
    for axis in axes {
        if basis.len() == d {
            break;
        }
        let mut v = unit_e1(d);
        v.swap(0, axis);
        for b in &basis {
            let c = dot(&v, b);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= c * bi;
            }
        }
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|c| *c /= nv);
            basis.push(v);
        }
    }
    basis.remove(0);
    basis
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn check_unit(v: &[f64], tol: f64, what: &str) -> Result<()> {
    let n = norm(v);
    if (n - 1.0).abs() > tol || !n.is_finite() {
        return arg(format!("{what} must be a unit vector (norm {n})"));
    }
    Ok(())
}
